use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::config::Reader;
use super::{BirthSpec, ConfigError, InitialSpec, MortalitySpec, RawScenario, ScenarioConfig};
use crate::market::{MarketError, MarketModel};
use crate::policy::{FundSetup, ZProcess, SHIFT_RANGE_TOL};
use crate::population::{
    read_rate_table, AgeGrid, BaselineRates, CohortDensity, PensionRule, PopulationModel, RateModel, WageModel,
};
use crate::stochastic::{norm, StochasticError, TimeGrid};

/// Validated, immutable experiment with every engine input assembled.
#[derive(Debug, Clone)]
pub struct ValidatedScenario {
    pub config: ScenarioConfig,
    pub grid: TimeGrid,
    pub market: MarketModel,
    pub setup: FundSetup,
    pub population: PopulationModel,
    pub checkpoint_steps: Vec<usize>,
    pub nu_perp: Vec<f64>,
    canonical: String,
}

/// Survival to the start of each bin, `L_i = prod_{j<i} exp(-d_j da)`.
fn survivorship(death: &[f64], da: f64) -> Vec<f64> {
    let mut l = Vec::with_capacity(death.len());
    let mut acc = 1.0;
    for d in death {
        l.push(acc);
        acc *= (-d * da).exp();
    }
    l
}

/// Scale of the fertility profile that gives a net reproduction number of
/// exactly 1 on the discrete grid.
pub fn stationary_birth_rate(death: &[f64], profile: &[f64], da: f64) -> f64 {
    let l = survivorship(death, da);
    let r0: f64 = profile.iter().zip(&l).map(|(f, l)| f * l).sum::<f64>() * da;
    1.0 / r0
}

fn check_len(errs: &mut Vec<ConfigError>, path: &str, v: &[f64], n: usize) {
    if v.len() != n {
        errs.push(ConfigError::new(path, format!("expected {n} entries, got {}", v.len())));
    }
}

impl ValidatedScenario {
    pub fn from_raw(raw: &RawScenario) -> Result<Self, Vec<ConfigError>> {
        let mut rd = Reader::new(raw);
        let config = ScenarioConfig::read(&mut rd);
        let errors = rd.errors;
        if !errors.is_empty() {
            // type errors leave placeholder values; rule checks would only echo them
            return Err(errors);
        }
        Self::from_config(config)
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self, Vec<ConfigError>> {
        let mut errs = Vec::new();
        let c = &config;

        let grid = match TimeGrid::new(c.time.t0, c.time.t1, c.time.steps) {
            Ok(g) => Some(g),
            Err(StochasticError::ZeroSteps) => {
                errs.push(ConfigError::new("time.steps", "need at least one step"));
                None
            }
            Err(_) => {
                errs.push(ConfigError::new("time.t1", "horizon must end after t0"));
                None
            }
        };
        if c.mc.paths < 1 {
            errs.push(ConfigError::new("mc.paths", "need at least one path"));
        }

        let d = c.market.sigma.len();
        let n = c.market.sigma.first().map_or(0, Vec::len);
        if n == 0 {
            errs.push(ConfigError::new("market.sigma.row0", "volatility rows must be nonempty"));
        }
        for (i, row) in c.market.sigma.iter().enumerate() {
            check_len(&mut errs, &format!("market.sigma.row{i}"), row, n);
        }
        if d > n {
            errs.push(ConfigError::new("market.sigma", format!("{d} assets need at least {d} Brownian dimensions, got {n}")));
        }
        check_len(&mut errs, "market.mu", &c.market.mu, d);

        let th = c.zu.theta;
        if !(th > 0.0 && th < 1.0) {
            errs.push(ConfigError::new("zu.theta", "theta must lie in (0,1)"));
        }
        if !(c.zu.zu0 > 0.0) {
            errs.push(ConfigError::new("zu.zu0", "initial utility coefficient must be positive"));
        }
        check_len(&mut errs, "zu.delta", &c.zu.delta, n);
        if !(c.z_process.z0 > 0.0) {
            errs.push(ConfigError::new("z_process.z0", "pensioner coefficient must be positive"));
        }
        check_len(&mut errs, "z_process.vol", &c.z_process.vol, n);
        if !(c.shift.f0 > c.shift.x0) {
            errs.push(ConfigError::new("shift.f0", "fund must start strictly above the sustainability bound"));
        }
        check_len(&mut errs, "shift.phi_x", &c.shift.phi_x, d);
        if let Some(dk) = &c.shift.delta_k {
            check_len(&mut errs, "shift.delta_k", dk, n);
        }
        if let Some(nu) = &c.market.nu_perp {
            check_len(&mut errs, "market.nu_perp", nu, n);
        }

        let p = &c.population;
        check_len(&mut errs, "population.mortality_vol", &p.mortality_vol, n);
        check_len(&mut errs, "population.fertility_vol", &p.fertility_vol, n);
        if !(p.death_cap > 0.0) {
            errs.push(ConfigError::new("population.death_cap", "must be positive"));
        }
        if !(p.birth_cap > 0.0) {
            errs.push(ConfigError::new("population.birth_cap", "must be positive"));
        }
        if !(p.newborn_density > 0.0) {
            errs.push(ConfigError::new("population.newborn_density", "must be positive"));
        }
        if !(p.wage >= 0.0) {
            errs.push(ConfigError::new("population.wage", "wages must be nonnegative"));
        }
        if !(p.fertile_min < p.fertile_max) {
            errs.push(ConfigError::new("population.fertile_max", "fertility window must be nonempty"));
        }
        match &p.mortality {
            MortalitySpec::Gompertz { a, b } => {
                if !(*a >= 0.0 && *b >= 0.0) {
                    errs.push(ConfigError::new("population.gompertz_a", "Gompertz parameters must be nonnegative"));
                }
            }
            MortalitySpec::Flat { rate } => {
                if !(*rate >= 0.0) {
                    errs.push(ConfigError::new("population.death_rate", "death rate must be nonnegative"));
                }
            }
            MortalitySpec::Table { .. } => {}
        }
        if let BirthSpec::Rate(b) = p.birth {
            if !(b >= 0.0) {
                errs.push(ConfigError::new("population.birth_rate", "birth rate must be nonnegative"));
            }
        }

        let a = c.pension.alpha_c;
        if !(0.0..=1.0).contains(&a) {
            errs.push(ConfigError::new("pension.alpha_c", "contribution rate must lie in [0,1]"));
        }
        match c.pension.rule {
            PensionRule::Example1 { p_min } => {
                if !(p_min > 0.0) {
                    errs.push(ConfigError::new("pension.p_min", "guaranteed pension must be positive"));
                }
            }
            PensionRule::Example2 { alpha_p, p_ret, .. } => match p_ret {
                Some(v) if !(v > 0.0) => errs.push(ConfigError::new("pension.p_ret", "base pension must be positive")),
                None if !(alpha_p > 0.0) => {
                    errs.push(ConfigError::new("pension.alpha_p", "replacement rate must be positive when p_ret is not given"))
                }
                _ => {}
            },
        }

        // structural objects; skipped when their inputs already failed
        let market = if errs.iter().any(|e| e.path.starts_with("market")) {
            None
        } else {
            let sigma = DMatrix::from_fn(d, n, |i, j| c.market.sigma[i][j]);
            match MarketModel::new(c.market.r, c.market.mu.clone(), sigma) {
                Ok(m) => Some(m),
                Err(MarketError::Stochastic(StochasticError::RankDeficient { condition })) => {
                    errs.push(ConfigError::new(
                        "market.sigma",
                        format!("volatility matrix must have full rank (condition number {condition:e})"),
                    ));
                    None
                }
                Err(e) => {
                    errs.push(ConfigError::new("market", e.to_string()));
                    None
                }
            }
        };

        let mut delta_x = None;
        let mut nu_perp = None;
        if let Some(m) = &market {
            let proj = m.projector();
            delta_x = match &c.shift.delta_k {
                Some(dk) if dk.len() == n => {
                    let perp = proj.perp_norm(dk);
                    if perp > SHIFT_RANGE_TOL * (1.0 + norm(dk)) {
                        errs.push(ConfigError::new(
                            "shift.delta_k",
                            format!(
                                "unhedgeable component of norm {perp:e}: a consistent sustainability bound is a buffer fund \
                                 receiving the contributions and paying the floor, so its volatility must lie in the range of sigma^T"
                            ),
                        ));
                        None
                    } else {
                        Some(proj.apply(dk))
                    }
                }
                Some(_) => None,
                None if c.shift.phi_x.len() == d => Some(proj.lift(&c.shift.phi_x)),
                None => None,
            };
            if c.zu.delta.len() == n {
                nu_perp = match &c.market.nu_perp {
                    Some(nu) if nu.len() == n => {
                        let range = proj.range_norm(nu);
                        if range > crate::market::NU_ORTHOGONALITY_TOL {
                            errs.push(ConfigError::new("market.nu_perp", format!("must be orthogonal to the range of sigma^T (range part {range:e})")));
                            None
                        } else {
                            Some(nu.clone())
                        }
                    }
                    Some(_) => None,
                    None => Some(proj.project(&c.zu.delta).1),
                };
            }
        }

        let mut population = None;
        if let Some(g) = &grid {
            match AgeGrid::new(p.a_max, g.dt(), p.a_e, p.a_r) {
                Ok(ag) => match build_population(c, ag) {
                    Ok(pm) => population = Some(pm),
                    Err(e) => errs.push(e),
                },
                Err(e) => errs.push(ConfigError::new("population", format!("{e} (the age step is the time step)"))),
            }
        }

        let mut checkpoint_steps = Vec::new();
        if let Some(g) = &grid {
            for &t in &c.outputs.checkpoints {
                let k = g.index_of(t);
                if !(t >= g.t0() - 1e-12 && t <= g.t1() + 1e-12) || (g.time(k) - t).abs() > 1e-9 * g.dt().max(1.0) {
                    errs.push(ConfigError::new("outputs.checkpoints", format!("checkpoint {t} is not a point of the time grid")));
                } else {
                    checkpoint_steps.push(k);
                }
            }
            checkpoint_steps.sort_unstable();
            checkpoint_steps.dedup();
        }

        if !errs.is_empty() {
            return Err(errs);
        }
        let market = market.expect("validated");
        let setup = FundSetup {
            theta: th,
            zu0: c.zu.zu0,
            delta: c.zu.delta.clone(),
            delta_x: delta_x.expect("validated"),
            f0: c.shift.f0,
            x0: c.shift.x0,
            z: ZProcess { z0: c.z_process.z0, drift: c.z_process.drift, vol: c.z_process.vol.clone() },
            rule: c.pension.rule,
            zu_drift_perturbation: c.zu.drift_perturbation,
        };
        let canonical = config.canonical();
        Ok(Self {
            grid: grid.expect("validated"),
            population: population.expect("validated"),
            nu_perp: nu_perp.expect("validated"),
            market,
            setup,
            checkpoint_steps,
            config,
            canonical,
        })
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// SHA-256 of the canonical normal form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical.as_bytes()))
    }

    /// Whether the demographic rates are deterministic, so one population
    /// run serves every path.
    pub fn shared_demography(&self) -> bool {
        self.population.rates.is_deterministic()
    }
}

fn build_population(c: &ScenarioConfig, grid: AgeGrid) -> Result<PopulationModel, ConfigError> {
    let p = &c.population;
    let fertile = (p.fertile_min, p.fertile_max);
    let (death, profile) = match &p.mortality {
        MortalitySpec::Gompertz { a, b } => (BaselineRates::gompertz(&grid, *a, *b, 1.0, fertile).death, None),
        MortalitySpec::Flat { rate } => (vec![*rate; grid.bins()], None),
        MortalitySpec::Table { path } => {
            let file = std::fs::File::open(path).map_err(|e| ConfigError::new("population.table", format!("{path}: {e}")))?;
            let rows = read_rate_table(file).map_err(|e| ConfigError::new("population.table", e.to_string()))?;
            let b = BaselineRates::from_table(&grid, &rows);
            (b.death, Some(b.birth))
        }
    };
    let profile = profile.unwrap_or_else(|| BaselineRates::flat(&grid, 0.0, 1.0, fertile).birth);
    let scale = match p.birth {
        BirthSpec::Rate(b) => b,
        BirthSpec::Stationary => {
            let s = stationary_birth_rate(&death, &profile, grid.da);
            if !s.is_finite() {
                return Err(ConfigError::new("population.birth_rate", "no fertile survivors: stationary level undefined"));
            }
            s
        }
    };
    let baseline = BaselineRates { birth: profile.iter().map(|f| f * scale).collect(), death };
    let initial = match p.initial {
        InitialSpec::Uniform => vec![p.newborn_density; grid.bins()],
        InitialSpec::Stable => {
            let mut l = survivorship(&baseline.death, grid.da);
            let last = grid.bins() - 1;
            let s_last = (-baseline.death[last] * grid.da).exp();
            if s_last < 1.0 {
                l[last] /= 1.0 - s_last;
            }
            l.iter().map(|x| x * p.newborn_density).collect()
        }
    };
    Ok(PopulationModel {
        grid,
        rates: RateModel {
            baseline,
            mortality_vol: p.mortality_vol.clone(),
            fertility_vol: p.fertility_vol.clone(),
            death_cap: p.death_cap,
            birth_cap: p.birth_cap,
        },
        wages: WageModel { level: p.wage, growth: p.wage_growth, t0: c.time.t0 },
        alpha_c: c.pension.alpha_c,
        rule: c.pension.rule,
        theta: c.zu.theta,
        initial: CohortDensity(initial),
    })
}
