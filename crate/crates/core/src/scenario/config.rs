use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ConfigError, RawScenario};
use crate::population::PensionRule;

/// Horizon in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSection {
    pub paths: usize,
    pub seed: u64,
}

/// Rates in 1/year, volatilities in 1/sqrt(year). `sigma` is `d x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSection {
    pub r: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    /// Orthogonal volatility of the reported pricing kernel; defaults to the
    /// unhedgeable part of the `Zu` volatility.
    pub nu_perp: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZuSection {
    pub theta: f64,
    pub zu0: f64,
    pub delta: Vec<f64>,
    pub drift_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZProcessSection {
    pub z0: f64,
    pub drift: f64,
    pub vol: Vec<f64>,
}

/// Money amounts in currency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSection {
    pub f0: f64,
    pub x0: f64,
    /// Shift volatility is `sigma^T phi_x`.
    pub phi_x: Vec<f64>,
    /// Raw shift volatility; if given it replaces `sigma^T phi_x` and must be
    /// hedgeable.
    pub delta_k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MortalitySpec {
    Gompertz { a: f64, b: f64 },
    Flat { rate: f64 },
    Table { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BirthSpec {
    Rate(f64),
    /// Level making the discrete renewal equation stationary.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialSpec {
    /// Stationary age profile under the baseline mortality.
    Stable,
    Uniform,
}

/// Ages in years; the age step equals the time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSection {
    pub a_max: f64,
    pub a_e: f64,
    pub a_r: f64,
    pub mortality: MortalitySpec,
    pub birth: BirthSpec,
    pub fertile_min: f64,
    pub fertile_max: f64,
    pub mortality_vol: Vec<f64>,
    pub fertility_vol: Vec<f64>,
    pub death_cap: f64,
    pub birth_cap: f64,
    pub initial: InitialSpec,
    /// Persons per age-year at age 0.
    pub newborn_density: f64,
    pub wage: f64,
    pub wage_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PensionSection {
    pub rule: PensionRule,
    pub alpha_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: String,
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub time: TimeSection,
    pub mc: McSection,
    pub market: MarketSection,
    pub zu: ZuSection,
    pub z_process: ZProcessSection,
    pub shift: ShiftSection,
    pub population: PopulationSection,
    pub pension: PensionSection,
    pub outputs: OutputSection,
}

/// Typed access to the raw map that records every problem instead of
/// stopping at the first.
pub(super) struct Reader<'a> {
    raw: &'a RawScenario,
    pub errors: Vec<ConfigError>,
    used: BTreeSet<(String, String)>,
}

impl<'a> Reader<'a> {
    pub fn new(raw: &'a RawScenario) -> Self {
        Self { raw, errors: Vec::new(), used: BTreeSet::new() }
    }

    pub fn error(&mut self, path: impl Into<String>, msg: impl Into<String>) {
        self.errors.push(ConfigError::new(path, msg));
    }

    fn text(&mut self, sec: &str, key: &str) -> Option<&'a str> {
        self.used.insert((sec.to_string(), key.to_string()));
        self.raw.get(sec, key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, sec: &str, key: &str, default: Option<T>, what: &str) -> Option<T> {
        match self.text(sec, key) {
            Some(s) => match s.parse::<T>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.error(format!("{sec}.{key}"), format!("expected {what}, got '{s}'"));
                    None
                }
            },
            None if default.is_some() => default,
            None => {
                self.error(format!("{sec}.{key}"), "missing required key");
                None
            }
        }
    }

    pub fn real(&mut self, sec: &str, key: &str, default: Option<f64>) -> f64 {
        match self.parsed::<f64>(sec, key, default, "a number") {
            Some(v) if v.is_finite() => v,
            Some(v) => {
                self.error(format!("{sec}.{key}"), format!("must be finite, got {v}"));
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    pub fn count(&mut self, sec: &str, key: &str, default: Option<usize>) -> usize {
        self.parsed(sec, key, default, "a nonnegative integer").unwrap_or(0)
    }

    pub fn seed(&mut self, sec: &str, key: &str) -> u64 {
        self.parsed(sec, key, Some(0), "a 64-bit unsigned integer").unwrap_or(0)
    }

    pub fn string(&mut self, sec: &str, key: &str, default: Option<&str>) -> String {
        match self.text(sec, key) {
            Some(s) => s.to_string(),
            None => match default {
                Some(d) => d.to_string(),
                None => {
                    self.error(format!("{sec}.{key}"), "missing required key");
                    String::new()
                }
            },
        }
    }

    pub fn has(&self, sec: &str, key: &str) -> bool {
        self.raw.get(sec, key).is_some()
    }

    pub fn vector(&mut self, sec: &str, key: &str, default: Option<Vec<f64>>) -> Vec<f64> {
        match self.text(sec, key) {
            Some(s) => {
                let mut out = Vec::new();
                for item in s.split(',') {
                    match item.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => out.push(v),
                        _ => {
                            self.error(format!("{sec}.{key}"), format!("expected comma-separated finite numbers, got '{s}'"));
                            return Vec::new();
                        }
                    }
                }
                out
            }
            None => default.unwrap_or_else(|| {
                self.error(format!("{sec}.{key}"), "missing required key");
                Vec::new()
            }),
        }
    }

    pub fn optional_vector(&mut self, sec: &str, key: &str) -> Option<Vec<f64>> {
        self.has(sec, key).then(|| self.vector(sec, key, None))
    }

    /// Keys present in the document that no field consumed and that no
    /// variant of their section reads.
    pub fn report_unknown(&mut self) {
        let mut unknown = Vec::new();
        for (sec, kv) in &self.raw.sections {
            for key in kv.keys() {
                let variant = VARIANT_KEYS.contains(&(sec.as_str(), key.as_str()));
                if !variant && !self.used.contains(&(sec.clone(), key.clone())) {
                    unknown.push(format!("{sec}.{key}"));
                }
            }
        }
        for path in unknown {
            self.error(path, "unknown key");
        }
    }
}

/// Keys read only under one mortality model or pension rule; they are
/// accepted, and ignored, under the others.
const VARIANT_KEYS: &[(&str, &str)] = &[
    ("population", "gompertz_a"),
    ("population", "gompertz_b"),
    ("population", "death_rate"),
    ("population", "table"),
    ("pension", "p_min"),
    ("pension", "alpha_p"),
    ("pension", "lambda"),
    ("pension", "p_ret"),
];

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

impl ScenarioConfig {
    pub(super) fn read(rd: &mut Reader<'_>) -> ScenarioConfig {
        let time = TimeSection {
            t0: rd.real("time", "t0", Some(0.0)),
            t1: rd.real("time", "t1", None),
            steps: rd.count("time", "steps", None),
        };
        let mc = McSection { paths: rd.count("mc", "paths", None), seed: rd.seed("mc", "seed") };

        let mut sigma = Vec::new();
        while rd.has("market", &format!("sigma.row{}", sigma.len())) {
            let key = format!("sigma.row{}", sigma.len());
            sigma.push(rd.vector("market", &key, None));
        }
        if sigma.is_empty() {
            rd.error("market.sigma.row0", "missing required key");
        }
        let market = MarketSection {
            r: rd.real("market", "r", None),
            mu: rd.vector("market", "mu", None),
            sigma,
            nu_perp: rd.optional_vector("market", "nu_perp"),
        };
        let n = market.sigma.first().map_or(0, Vec::len);
        let d = market.sigma.len();

        let zu = ZuSection {
            theta: rd.real("zu", "theta", None),
            zu0: rd.real("zu", "zu0", None),
            delta: rd.vector("zu", "delta", Some(vec![0.0; n])),
            drift_perturbation: rd.real("zu", "drift_perturbation", Some(0.0)),
        };
        let z_process = ZProcessSection {
            z0: rd.real("z_process", "z0", None),
            drift: rd.real("z_process", "drift", Some(0.0)),
            vol: rd.vector("z_process", "vol", Some(vec![0.0; n])),
        };
        let shift = ShiftSection {
            f0: rd.real("shift", "f0", None),
            x0: rd.real("shift", "x0", None),
            phi_x: rd.vector("shift", "phi_x", Some(vec![0.0; d])),
            delta_k: rd.optional_vector("shift", "delta_k"),
        };

        let mortality = match rd.string("population", "mortality", Some("gompertz")).as_str() {
            "gompertz" => MortalitySpec::Gompertz {
                a: rd.real("population", "gompertz_a", None),
                b: rd.real("population", "gompertz_b", None),
            },
            "flat" => MortalitySpec::Flat { rate: rd.real("population", "death_rate", None) },
            "table" => MortalitySpec::Table { path: rd.string("population", "table", None) },
            other => {
                rd.error("population.mortality", format!("expected gompertz, flat or table, got '{other}'"));
                MortalitySpec::Flat { rate: f64::NAN }
            }
        };
        let birth = match rd.string("population", "birth_rate", Some("stationary")).as_str() {
            "stationary" => BirthSpec::Stationary,
            s => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => BirthSpec::Rate(v),
                _ => {
                    rd.error("population.birth_rate", format!("expected a number or 'stationary', got '{s}'"));
                    BirthSpec::Rate(f64::NAN)
                }
            },
        };
        let initial = match rd.string("population", "initial", Some("stable")).as_str() {
            "stable" => InitialSpec::Stable,
            "uniform" => InitialSpec::Uniform,
            other => {
                rd.error("population.initial", format!("expected stable or uniform, got '{other}'"));
                InitialSpec::Stable
            }
        };
        let population = PopulationSection {
            a_max: rd.real("population", "a_max", Some(120.0)),
            a_e: rd.real("population", "a_e", None),
            a_r: rd.real("population", "a_r", None),
            mortality,
            birth,
            fertile_min: rd.real("population", "fertile_min", Some(20.0)),
            fertile_max: rd.real("population", "fertile_max", Some(40.0)),
            mortality_vol: rd.vector("population", "mortality_vol", Some(vec![0.0; n])),
            fertility_vol: rd.vector("population", "fertility_vol", Some(vec![0.0; n])),
            death_cap: rd.real("population", "death_cap", Some(10.0)),
            birth_cap: rd.real("population", "birth_cap", Some(1.0)),
            initial,
            newborn_density: rd.real("population", "newborn_density", Some(1.0)),
            wage: rd.real("population", "wage", Some(1.0)),
            wage_growth: rd.real("population", "wage_growth", Some(0.0)),
        };

        let rule = match rd.string("pension", "rule", None).as_str() {
            "example1" => PensionRule::Example1 { p_min: rd.real("pension", "p_min", None) },
            "example2" => PensionRule::Example2 {
                alpha_p: rd.real("pension", "alpha_p", Some(0.0)),
                lambda: rd.real("pension", "lambda", Some(0.0)),
                p_ret: rd.has("pension", "p_ret").then(|| rd.real("pension", "p_ret", None)),
            },
            other => {
                rd.error("pension.rule", format!("expected example1 or example2, got '{other}'"));
                PensionRule::Example1 { p_min: f64::NAN }
            }
        };
        let pension = PensionSection { rule, alpha_c: rd.real("pension", "alpha_c", None) };
        let t1 = time.t1;
        let outputs = OutputSection {
            directory: rd.string("outputs", "directory", Some("out")),
            checkpoints: rd.vector("outputs", "checkpoints", Some(vec![t1])),
        };
        rd.report_unknown();
        ScenarioConfig { time, mc, market, zu, z_process, shift, population, pension, outputs }
    }

    /// Canonical normal form: every field, fixed order, shortest round-trip
    /// number formatting.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut sec = |name: &str, body: Vec<(String, String)>| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in body {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        let kv = |k: &str, v: String| (k.to_string(), v);
        sec("time", vec![kv("t0", self.time.t0.to_string()), kv("t1", self.time.t1.to_string()), kv("steps", self.time.steps.to_string())]);
        sec("mc", vec![kv("paths", self.mc.paths.to_string()), kv("seed", self.mc.seed.to_string())]);
        let mut m = vec![kv("r", self.market.r.to_string()), kv("mu", list(&self.market.mu))];
        for (i, row) in self.market.sigma.iter().enumerate() {
            m.push(kv(&format!("sigma.row{i}"), list(row)));
        }
        if let Some(nu) = &self.market.nu_perp {
            m.push(kv("nu_perp", list(nu)));
        }
        sec("market", m);
        sec(
            "zu",
            vec![
                kv("theta", self.zu.theta.to_string()),
                kv("zu0", self.zu.zu0.to_string()),
                kv("delta", list(&self.zu.delta)),
                kv("drift_perturbation", self.zu.drift_perturbation.to_string()),
            ],
        );
        sec(
            "z_process",
            vec![kv("z0", self.z_process.z0.to_string()), kv("drift", self.z_process.drift.to_string()), kv("vol", list(&self.z_process.vol))],
        );
        let mut sh = vec![kv("f0", self.shift.f0.to_string()), kv("x0", self.shift.x0.to_string()), kv("phi_x", list(&self.shift.phi_x))];
        if let Some(dk) = &self.shift.delta_k {
            sh.push(kv("delta_k", list(dk)));
        }
        sec("shift", sh);
        let p = &self.population;
        let mut pop = vec![kv("a_max", p.a_max.to_string()), kv("a_e", p.a_e.to_string()), kv("a_r", p.a_r.to_string())];
        match &p.mortality {
            MortalitySpec::Gompertz { a, b } => {
                pop.push(kv("mortality", "gompertz".into()));
                pop.push(kv("gompertz_a", a.to_string()));
                pop.push(kv("gompertz_b", b.to_string()));
            }
            MortalitySpec::Flat { rate } => {
                pop.push(kv("mortality", "flat".into()));
                pop.push(kv("death_rate", rate.to_string()));
            }
            MortalitySpec::Table { path } => {
                pop.push(kv("mortality", "table".into()));
                pop.push(kv("table", path.clone()));
            }
        }
        pop.push(kv(
            "birth_rate",
            match p.birth {
                BirthSpec::Rate(b) => b.to_string(),
                BirthSpec::Stationary => "stationary".into(),
            },
        ));
        pop.extend([
            kv("fertile_min", p.fertile_min.to_string()),
            kv("fertile_max", p.fertile_max.to_string()),
            kv("mortality_vol", list(&p.mortality_vol)),
            kv("fertility_vol", list(&p.fertility_vol)),
            kv("death_cap", p.death_cap.to_string()),
            kv("birth_cap", p.birth_cap.to_string()),
            kv(
                "initial",
                match p.initial {
                    InitialSpec::Stable => "stable".into(),
                    InitialSpec::Uniform => "uniform".into(),
                },
            ),
            kv("newborn_density", p.newborn_density.to_string()),
            kv("wage", p.wage.to_string()),
            kv("wage_growth", p.wage_growth.to_string()),
        ]);
        sec("population", pop);
        let mut pen = Vec::new();
        match self.pension.rule {
            PensionRule::Example1 { p_min } => {
                pen.push(kv("rule", "example1".into()));
                pen.push(kv("p_min", p_min.to_string()));
            }
            PensionRule::Example2 { alpha_p, lambda, p_ret } => {
                pen.push(kv("rule", "example2".into()));
                pen.push(kv("alpha_p", alpha_p.to_string()));
                pen.push(kv("lambda", lambda.to_string()));
                if let Some(p) = p_ret {
                    pen.push(kv("p_ret", p.to_string()));
                }
            }
        }
        pen.push(kv("alpha_c", self.pension.alpha_c.to_string()));
        sec("pension", pen);
        sec("outputs", vec![kv("directory", self.outputs.directory.clone()), kv("checkpoints", list(&self.outputs.checkpoints))]);
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    }
}
