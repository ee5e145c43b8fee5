use super::{CrraFundUtility, PensionersUtility, UtilityError};
use crate::stochastic::{axpy, dot, norm, norm_sq, scale, SubspaceProjector};

/// Pension part of the preference drift: `V(rho) - U_z P^min rho`.
pub fn operator_p(u: &CrraFundUtility, v: &PensionersUtility, z: f64, rho: f64, p_min: f64) -> Result<f64, UtilityError> {
    let u_z = u.eval(z)?.u_z;
    Ok(v.value(rho)? - u_z * p_min * rho)
}

/// Investment part of the preference drift:
/// `1/2 U_zz |pi|^2 + pi . (gamma_z + U_z eta)`, with `pi` first projected
/// onto the range of `sigma^T`.
pub fn operator_q(
    u: &CrraFundUtility,
    z: f64,
    pi: &[f64],
    gamma_z: &[f64],
    eta: &[f64],
    projector: &SubspaceProjector,
) -> Result<f64, UtilityError> {
    let n = projector.dim();
    for v in [pi, gamma_z, eta] {
        if v.len() != n {
            return Err(UtilityError::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    let f = u.eval(z)?;
    let pi = projector.apply(pi);
    Ok(0.5 * f.u_zz * norm_sq(&pi) + dot(&pi, &axpy(f.u_z, eta, gamma_z)))
}

/// Shift dynamics `dX = mu_x dt + delta_x . dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDynamics {
    pub mu_x: f64,
    pub delta_x: Vec<f64>,
}

/// Coefficient dynamics `dZu = Zu (b dt + delta . dW)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZuDynamics {
    pub b: f64,
    pub delta: Vec<f64>,
}

/// Drift and diffusion of the random field `U(t, z)` and their
/// z-derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCharacteristics {
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub beta_z: f64,
    pub gamma_z: Vec<f64>,
    pub gamma_zz: Vec<f64>,
}

pub fn crra_characteristics(
    u: &CrraFundUtility,
    shift: &ShiftDynamics,
    zu: &ZuDynamics,
    z: f64,
) -> Result<LocalCharacteristics, UtilityError> {
    if shift.delta_x.len() != zu.delta.len() {
        return Err(UtilityError::DimensionMismatch { expected: zu.delta.len(), got: shift.delta_x.len() });
    }
    let f = u.eval(z)?;
    let dx = &shift.delta_x;
    let drift_x = shift.mu_x + dot(&zu.delta, dx);
    let q = norm_sq(dx);
    // gamma = U delta - U_z delta_x, and likewise one derivative down
    let lin = |a: f64, b: f64| axpy(-b, dx, &scale(&zu.delta, a));
    Ok(LocalCharacteristics {
        beta: -f.u_z * drift_x + 0.5 * f.u_zz * q + f.u * zu.b,
        gamma: lin(f.u, f.u_z),
        beta_z: -f.u_zz * drift_x + 0.5 * f.u_zzz * q + f.u_z * zu.b,
        gamma_z: lin(f.u_z, f.u_zz),
        gamma_zz: lin(f.u_zz, f.u_zzz),
    })
}

/// `(|gamma_z| / U_z, |delta_x| |U_zz| / U_z + |delta|)`: the ratio and the
/// pointwise bound it must respect.
pub fn gamma_z_bound(u: &CrraFundUtility, shift: &ShiftDynamics, zu: &ZuDynamics, z: f64) -> Result<(f64, f64), UtilityError> {
    let f = u.eval(z)?;
    let ch = crra_characteristics(u, shift, zu, z)?;
    Ok((norm(&ch.gamma_z) / f.u_z, norm(&shift.delta_x) * f.u_zz.abs() / f.u_z + norm(&zu.delta)))
}

/// Market and flow inputs of the drift condition at one instant.
#[derive(Debug, Clone, Copy)]
pub struct HjbInputs<'a> {
    pub r: f64,
    pub c: f64,
    pub p_min: f64,
    pub eta: &'a [f64],
    pub projector: &'a SubspaceProjector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbResidual {
    pub beta_characteristics: f64,
    pub beta_hjb: f64,
    pub residual: f64,
    /// `|residual| / (1 + |beta_hjb|)`.
    pub relative: f64,
    pub pi_star: Vec<f64>,
    pub rho_star: f64,
}

/// Difference between the drift of `U` implied by its coefficient dynamics
/// and the drift the optimality condition requires at `z`. The maximizers
/// are computed from the generic first-order conditions, not from the CRRA
/// closed forms.
pub fn hjb_drift_residual(
    u: &CrraFundUtility,
    v: &PensionersUtility,
    shift: &ShiftDynamics,
    zu: &ZuDynamics,
    inputs: &HjbInputs<'_>,
    z: f64,
) -> Result<HjbResidual, UtilityError> {
    let f = u.eval(z)?;
    let ch = crra_characteristics(u, shift, zu, z)?;
    let proj = inputs.projector;
    let pi_star = scale(&proj.apply(&axpy(f.u_z, inputs.eta, &ch.gamma_z)), -1.0 / f.u_zz);
    let rho_star = if v.weight() == 0.0 {
        1.0
    } else if inputs.p_min > 0.0 {
        v.rho_inverse(inputs.p_min * f.u_z)?
    } else {
        return Err(UtilityError::MissingFloor { weight: v.weight(), p_min: inputs.p_min });
    };
    let beta_hjb =
        -f.u_z * (z * inputs.r + inputs.c - inputs.p_min * rho_star) + 0.5 * f.u_zz * norm_sq(&pi_star) - v.value(rho_star)?;
    let residual = ch.beta - beta_hjb;
    Ok(HjbResidual {
        beta_characteristics: ch.beta,
        beta_hjb,
        residual,
        relative: residual.abs() / (1.0 + beta_hjb.abs()),
        pi_star,
        rho_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn projector() -> SubspaceProjector {
        SubspaceProjector::new(DMatrix::from_row_slice(1, 2, &[0.2, 0.0])).unwrap()
    }

    #[test]
    fn static_utility_has_zero_characteristics() {
        let u = CrraFundUtility::new(0.5, 1.0, 0.0).unwrap();
        let ch = crra_characteristics(
            &u,
            &ShiftDynamics { mu_x: 0.0, delta_x: vec![0.0; 2] },
            &ZuDynamics { b: 0.0, delta: vec![0.0; 2] },
            2.0,
        )
        .unwrap();
        assert_eq!(ch.beta, 0.0);
        assert_eq!(ch.gamma, vec![0.0; 2]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let u = CrraFundUtility::new(0.4, 1.2, 0.5).unwrap();
        let shift = ShiftDynamics { mu_x: 0.3, delta_x: vec![0.2, 0.0] };
        let zu = ZuDynamics { b: -0.04, delta: vec![0.1, 0.07] };
        let z = 3.0;
        let h = 1e-5;
        let at = |z| crra_characteristics(&u, &shift, &zu, z).unwrap();
        let (c, p, m) = (at(z), at(z + h), at(z - h));
        assert!(((p.beta - m.beta) / (2.0 * h) - c.beta_z).abs() < 1e-7);
        for i in 0..2 {
            assert!(((p.gamma[i] - m.gamma[i]) / (2.0 * h) - c.gamma_z[i]).abs() < 1e-7);
            assert!(((p.gamma_z[i] - m.gamma_z[i]) / (2.0 * h) - c.gamma_zz[i]).abs() < 1e-7);
        }
        let (ratio, bound) = gamma_z_bound(&u, &shift, &zu, z).unwrap();
        assert!(ratio <= bound);
    }

    #[test]
    fn q_at_zero_and_at_first_order_point() {
        let u = CrraFundUtility::new(0.5, 1.0, 0.0).unwrap();
        let p = projector();
        let eta = [0.2, 0.0];
        let gz = [0.03, -0.4];
        assert_eq!(operator_q(&u, 2.0, &[0.0, 0.0], &gz, &eta, &p).unwrap(), 0.0);
        let f = u.eval(2.0).unwrap();
        let pi = scale(&p.apply(&axpy(f.u_z, &eta, &gz)), -1.0 / f.u_zz);
        let q = operator_q(&u, 2.0, &pi, &gz, &eta, &p).unwrap();
        assert!((q + 0.5 * f.u_zz * norm_sq(&pi)).abs() < 1e-12);
        // the orthogonal part of an input strategy is discarded
        let q2 = operator_q(&u, 2.0, &[pi[0], 5.0], &gz, &eta, &p).unwrap();
        assert_eq!(q, q2);
    }

    #[test]
    fn envelope_identity() {
        let u = CrraFundUtility::new(0.3, 0.8, 1.0).unwrap();
        let v = PensionersUtility::from_weight(0.3, 2.5).unwrap();
        for (z, p_min) in [(1.5, 1.0), (4.0, 0.2), (11.0, 3.0)] {
            let y = p_min * u.eval(z).unwrap().u_z;
            let rho = v.rho_inverse(y).unwrap();
            let pv = operator_p(&u, &v, z, rho, p_min).unwrap();
            let (conj, _) = v.conjugate(y).unwrap();
            assert!(((pv - conj) / conj.abs().max(1.0)).abs() < 1e-10, "{pv} vs {conj}");
        }
    }
}
