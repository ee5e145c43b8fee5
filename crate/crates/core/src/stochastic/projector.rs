//! Orthogonal projection onto the hedgeable subspace `R = range(sigma^T)`.

use nalgebra::{DMatrix, DVector};

use super::StochasticError;

/// Largest accepted condition number of `sigma sigma^T`.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Cached projector `P = sigma^T (sigma sigma^T)^{-1} sigma`, stored
/// row-major, together with an orthonormal basis of its range.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceProjector {
    sigma: DMatrix<f64>,
    p: Vec<f64>,
    basis: Vec<Vec<f64>>,
    n: usize,
}

impl SubspaceProjector {
    /// `sigma` is `d x n` with `d <= n`.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self, StochasticError> {
        let (d, n) = sigma.shape();
        if d == 0 || d > n {
            return Err(StochasticError::DimensionMismatch { expected: n, got: d });
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(StochasticError::NonFinite { context: "volatility matrix" });
        }
        let gram = &sigma * sigma.transpose();
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(StochasticError::RankDeficient { condition });
        }
        let inv = gram.try_inverse().ok_or(StochasticError::RankDeficient { condition })?;
        let pm = sigma.transpose() * inv * &sigma;
        // Symmetrize to remove round-off asymmetry.
        let pm = (&pm + pm.transpose()) * 0.5;
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                p[i * n + j] = pm[(i, j)];
            }
        }
        let q = sigma.transpose().qr().q();
        let basis = (0..d).map(|j| q.column(j).iter().copied().collect()).collect();
        Ok(Self { sigma, p, basis, n })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Dimension `n` of the ambient Brownian space.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Dimension `d` of the hedgeable subspace.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Orthonormal basis of the hedgeable subspace.
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.p)
    }

    /// `P v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector dimension");
        (0..self.n)
            .map(|i| self.p[i * self.n..(i + 1) * self.n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(P v, v - P v)`.
    pub fn project(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.apply(v);
        let perp = v.iter().zip(&r).map(|(a, b)| a - b).collect();
        (r, perp)
    }

    /// Norm of the orthogonal component of `v`.
    pub fn perp_norm(&self, v: &[f64]) -> f64 {
        let (_, perp) = self.project(v);
        perp.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Norm of the hedgeable component of `v`.
    pub fn range_norm(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `sigma^T phi` for a vector of asset amounts `phi` (length `d`).
    pub fn lift(&self, phi: &[f64]) -> Vec<f64> {
        let v = self.sigma.transpose() * DVector::from_column_slice(phi);
        v.iter().copied().collect()
    }
}
