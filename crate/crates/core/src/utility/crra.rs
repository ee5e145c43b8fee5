use serde::{Deserialize, Serialize};

use super::{check_theta, UtilityError};
use crate::population::{DemographicAggregates, PensionRule};

/// `U(z) = Zu (z - X)^{1-theta} / (1 - theta)` on `z > X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrraFundUtility {
    theta: f64,
    zu: f64,
    x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundValues {
    pub u: f64,
    pub u_z: f64,
    pub u_zz: f64,
    pub u_zzz: f64,
}

impl CrraFundUtility {
    pub fn new(theta: f64, zu: f64, x: f64) -> Result<Self, UtilityError> {
        check_theta(theta)?;
        if !(zu > 0.0 && zu.is_finite()) {
            return Err(UtilityError::InvalidCoefficient(zu));
        }
        if !x.is_finite() {
            return Err(UtilityError::InvalidCoefficient(x));
        }
        Ok(Self { theta, zu, x })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn zu(&self) -> f64 {
        self.zu
    }

    pub fn shift(&self) -> f64 {
        self.x
    }

    fn cushion(&self, z: f64) -> Result<f64, UtilityError> {
        let g = z - self.x;
        if g > 0.0 {
            Ok(g)
        } else {
            Err(UtilityError::OutOfDomain { z, bound: self.x })
        }
    }

    pub fn eval(&self, z: f64) -> Result<FundValues, UtilityError> {
        let g = self.cushion(z)?;
        let th = self.theta;
        let u_z = self.zu * g.powf(-th);
        Ok(FundValues {
            u: u_z * g / (1.0 - th),
            u_z,
            u_zz: -th * u_z / g,
            u_zzz: th * (th + 1.0) * u_z / (g * g),
        })
    }

    pub fn value(&self, z: f64) -> Result<f64, UtilityError> {
        Ok(self.eval(z)?.u)
    }

    /// `(U_z)^{-1}(y) = X + (Zu / y)^{1/theta}`.
    pub fn marginal_inverse(&self, y: f64) -> Result<f64, UtilityError> {
        if !(y > 0.0) {
            return Err(UtilityError::NonpositiveDual(y));
        }
        Ok(self.x + (self.zu / y).powf(1.0 / self.theta))
    }

    /// Convex conjugate `sup_z (U(z) - y z)` and its derivative
    /// `-(U_z)^{-1}(y)`.
    pub fn conjugate(&self, y: f64) -> Result<(f64, f64), UtilityError> {
        if !(y > 0.0) {
            return Err(UtilityError::NonpositiveDual(y));
        }
        let th = self.theta;
        let value = th / (1.0 - th) * self.zu.powf(1.0 / th) * y.powf((th - 1.0) / th) - self.x * y;
        Ok((value, -self.marginal_inverse(y)?))
    }
}

/// Aggregate weight multiplying `(rho - 1)^{1-theta} / (1 - theta)` in `V`,
/// before the pensioner coefficient `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PensionWeight {
    /// `omega^r (p^min)^{1-theta}`.
    Example1 { omega_r: f64, p_min: f64 },
    /// `tilde omega^r`.
    Example2 { omega_r_tilde: f64 },
}

impl PensionWeight {
    pub fn from_aggregates(rule: &PensionRule, agg: &DemographicAggregates) -> Self {
        match rule {
            PensionRule::Example1 { .. } => PensionWeight::Example1 { omega_r: agg.omega_r, p_min: agg.p_min },
            PensionRule::Example2 { .. } => PensionWeight::Example2 { omega_r_tilde: agg.omega_r_tilde },
        }
    }

    pub fn factor(&self, theta: f64) -> f64 {
        match *self {
            PensionWeight::Example1 { omega_r, p_min } => omega_r * p_min.powf(1.0 - theta),
            PensionWeight::Example2 { omega_r_tilde } => omega_r_tilde,
        }
    }
}

/// `V(rho) = w (rho - 1)^{1-theta} / (1 - theta)` with `w = Z * weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PensionersUtility {
    theta: f64,
    w: f64,
}

impl PensionersUtility {
    pub fn new(theta: f64, z: f64, weight: PensionWeight) -> Result<Self, UtilityError> {
        check_theta(theta)?;
        if !(z > 0.0 && z.is_finite()) {
            return Err(UtilityError::InvalidCoefficient(z));
        }
        let w = z * weight.factor(theta);
        if !(w >= 0.0 && w.is_finite()) {
            return Err(UtilityError::InvalidCoefficient(w));
        }
        Ok(Self { theta, w })
    }

    /// Directly from the combined marginal weight `w`.
    pub fn from_weight(theta: f64, w: f64) -> Result<Self, UtilityError> {
        check_theta(theta)?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(UtilityError::InvalidCoefficient(w));
        }
        Ok(Self { theta, w })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn weight(&self) -> f64 {
        self.w
    }

    /// `(V, V_rho)`. A zero weight gives the zero utility, defined at the
    /// floor as well.
    pub fn eval(&self, rho: f64) -> Result<(f64, f64), UtilityError> {
        if self.w == 0.0 && rho >= 1.0 {
            return Ok((0.0, 0.0));
        }
        let s = rho - 1.0;
        if !(s > 0.0) {
            return Err(UtilityError::OutOfDomain { z: rho, bound: 1.0 });
        }
        let v_rho = self.w * s.powf(-self.theta);
        Ok((v_rho * s / (1.0 - self.theta), v_rho))
    }

    pub fn value(&self, rho: f64) -> Result<f64, UtilityError> {
        Ok(self.eval(rho)?.0)
    }

    /// `V_rho^{-1}(y) - 1 = (y / w)^{-1/theta}`, computed without forming
    /// `rho` so that small excesses keep full precision; 0 when `w = 0`.
    pub fn excess_inverse(&self, y: f64) -> Result<f64, UtilityError> {
        if !(y > 0.0) {
            return Err(UtilityError::NonpositiveDual(y));
        }
        if self.w == 0.0 {
            return Ok(0.0);
        }
        Ok((y / self.w).powf(-1.0 / self.theta))
    }

    /// `V_rho^{-1}(y) ∨ 1`.
    pub fn rho_inverse(&self, y: f64) -> Result<f64, UtilityError> {
        Ok((1.0 + self.excess_inverse(y)?).max(1.0))
    }

    /// `sup_{rho > 1} (V(rho) - y rho)` and its derivative `-rho^f(y)`.
    pub fn conjugate(&self, y: f64) -> Result<(f64, f64), UtilityError> {
        if !(y > 0.0) {
            return Err(UtilityError::NonpositiveDual(y));
        }
        let th = self.theta;
        let value = th / (1.0 - th) * self.w.powf(1.0 / th) * y.powf(1.0 - 1.0 / th) - y;
        Ok((value, -self.rho_inverse(y)?))
    }

    /// Lipschitz constant linking the conjugate derivatives,
    /// `|V~_y(y) - V~_y(y')| = B |U~_y(y) - U~_y(y')|`, exact for equal
    /// exponents.
    pub fn dual_link_constant(&self, u: &CrraFundUtility) -> f64 {
        (self.w / u.zu()).powf(1.0 / self.theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_values() {
        let u = CrraFundUtility::new(0.5, 1.0, 0.0).unwrap();
        let v = u.eval(1.0).unwrap();
        assert_eq!((v.u, v.u_z, v.u_zz), (2.0, 1.0, -0.5));
        assert!(matches!(u.eval(0.0), Err(UtilityError::OutOfDomain { .. })));
        let (c, _) = u.conjugate(1.0).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        assert!(matches!(u.conjugate(0.0), Err(UtilityError::NonpositiveDual(_))));
    }

    #[test]
    fn finite_difference_derivatives() {
        let u = CrraFundUtility::new(0.3, 1.7, -2.0).unwrap();
        let z = 1.3;
        let h = 1e-5;
        let v = u.eval(z).unwrap();
        let f = |z: f64| u.eval(z).unwrap();
        assert!(((f(z + h).u - f(z - h).u) / (2.0 * h) - v.u_z).abs() < 1e-8);
        assert!(((f(z + h).u_z - f(z - h).u_z) / (2.0 * h) - v.u_zz).abs() < 1e-8);
        assert!(((f(z + h).u_zz - f(z - h).u_zz) / (2.0 * h) - v.u_zzz).abs() < 1e-7);
    }

    #[test]
    fn inada_blow_up() {
        let u = CrraFundUtility::new(0.4, 1.0, 3.0).unwrap();
        let mut last = 0.0;
        for g in [1e-2, 1e-4, 1e-6] {
            let v = u.eval(3.0 + g).unwrap();
            assert!(v.u_z > last);
            last = v.u_z;
            assert!(((-v.u_zz / v.u_z) * g - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn pensioners_values_and_reduction() {
        let v = PensionersUtility::new(0.5, 1.0, PensionWeight::Example1 { omega_r: 1.0, p_min: 1.0 }).unwrap();
        assert_eq!(v.value(2.0).unwrap(), 2.0);
        assert!(matches!(v.eval(1.0), Err(UtilityError::OutOfDomain { .. })));
        let (p, n_r, th) = (0.8, 37.0, 0.35);
        let e1 = PensionersUtility::new(th, 1.3, PensionWeight::Example1 { omega_r: n_r, p_min: p }).unwrap();
        let e2 = PensionersUtility::new(th, 1.3, PensionWeight::Example2 { omega_r_tilde: p.powf(1.0 - th) * n_r }).unwrap();
        for rho in [1.01, 1.5, 4.0] {
            let (a, b) = (e1.value(rho).unwrap(), e2.value(rho).unwrap());
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_inverse_monotone_to_floor() {
        let v = PensionersUtility::from_weight(0.6, 2.0).unwrap();
        let mut last = f64::INFINITY;
        for y in [1.0, 10.0, 1e3, 1e6] {
            let rho = v.rho_inverse(y).unwrap();
            assert!(rho > 1.0 && rho < last);
            last = rho;
        }
        assert!(last - 1.0 < 1e-3);
        assert_eq!(PensionersUtility::from_weight(0.6, 0.0).unwrap().rho_inverse(3.0).unwrap(), 1.0);
    }

    fn utility() -> impl Strategy<Value = (CrraFundUtility, PensionersUtility)> {
        (0.05f64..0.95, 0.1f64..10.0, -5.0f64..5.0, 0.0f64..10.0)
            .prop_map(|(th, zu, x, w)| (CrraFundUtility::new(th, zu, x).unwrap(), PensionersUtility::from_weight(th, w).unwrap()))
    }

    proptest! {
        #[test]
        fn fund_duality((u, _) in utility(), g in 1e-3f64..50.0, y in 1e-3f64..50.0) {
            let z = u.shift() + g;
            let v = u.eval(z).unwrap();
            let (c, cy) = u.conjugate(v.u_z).unwrap();
            prop_assert!((v.u - (c + z * v.u_z)).abs() <= 1e-10 * (v.u.abs() + (z * v.u_z).abs()));
            prop_assert!((-cy - z).abs() <= 1e-10 * z.abs().max(1.0));
            let (cy_val, _) = u.conjugate(y).unwrap();
            prop_assert!(cy_val >= v.u - y * z - 1e-9 * (v.u.abs() + (y * z).abs()));
            prop_assert!(v.u_z > 0.0 && v.u_zz < 0.0);
        }

        #[test]
        fn fund_monotone((u, _) in utility(), g1 in 1e-3f64..50.0, dg in 1e-3f64..50.0) {
            let a = u.eval(u.shift() + g1).unwrap();
            let b = u.eval(u.shift() + g1 + dg).unwrap();
            prop_assert!(a.u < b.u && a.u_z > b.u_z);
        }

        #[test]
        fn pension_inverse_round_trip((_, v) in utility(), y in 1e-3f64..1e3) {
            prop_assume!(v.weight() > 1e-6);
            let rho = v.rho_inverse(y).unwrap();
            prop_assume!(v.excess_inverse(y).unwrap() > 1e-6);
            let (_, v_rho) = v.eval(rho).unwrap();
            prop_assert!((v_rho - y).abs() <= 1e-10 * y);
            let (c, cy) = v.conjugate(y).unwrap();
            let val = v.value(rho).unwrap();
            prop_assert!((c - (val - y * rho)).abs() <= 1e-9 * (val.abs() + y * rho));
            prop_assert!((cy + rho).abs() <= 1e-12 * rho);
        }

        #[test]
        fn dual_link((u, v) in utility(), y1 in 1e-2f64..10.0, y2 in 1e-2f64..10.0) {
            prop_assume!((y1 - y2).abs() > 1e-3);
            let b = v.dual_link_constant(&u);
            let (r1, r2) = (v.conjugate(y1).unwrap().1, v.conjugate(y2).unwrap().1);
            let (z1, z2) = (u.conjugate(y1).unwrap().1, u.conjugate(y2).unwrap().1);
            // rounding of the shifts 1 and X bounds the attainable agreement
            let slack = 1e-12 * (r1.abs() + r2.abs() + b * (z1.abs() + z2.abs()));
            prop_assert!(((r1 - r2).abs() - b * (z1 - z2).abs()).abs() <= slack * 10.0);
        }
    }
}
