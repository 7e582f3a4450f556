//! Finite-difference derivative fallbacks.

use crate::error::{finite_scalar, finite_vec, NepError, Result};
use crate::linalg::{norm_inf, DenseMatrix};

/// Default central-difference step, `1e-6 * max(1, ||x||_inf)`.
pub fn default_gradient_step(x: &[f64]) -> f64 {
    1e-6 * norm_inf(x).max(1.0)
}

/// Default forward-difference step for Jacobians of gradients,
/// `sqrt(eps) * max(1, ||x||_inf)`.
pub fn default_jacobian_step(x: &[f64]) -> f64 {
    f64::EPSILON.sqrt() * norm_inf(x).max(1.0)
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(NepError::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = finite_scalar(f(&probe), "objective (finite difference)")?;
        probe[i] = x[i] - h;
        let fm = finite_scalar(f(&probe), "objective (finite difference)")?;
        probe[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Forward-difference Jacobian of a vector oracle with respect to `x`.
/// Column `j` is `(g(x + h e_j) - g(x)) / h`.
pub fn finite_diff_jacobian<G>(g: G, x: &[f64], h: f64) -> Result<DenseMatrix>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(h > 0.0) {
        return Err(NepError::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let base = finite_vec(g(x), "gradient (finite difference)")?;
    let mut probe = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let gp = finite_vec(g(&probe), "gradient (finite difference)")?;
        probe[j] = x[j];
        if gp.len() != base.len() {
            return Err(NepError::DimensionMismatch { expected: base.len(), got: gp.len() });
        }
        cols.push(gp.iter().zip(&base).map(|(a, b)| (a - b) / h).collect::<Vec<_>>());
    }
    Ok(DenseMatrix::from_fn(base.len(), x.len(), |i, j| cols[j][i]))
}

/// Hessian block of a player from its own gradient; the forward-difference
/// Jacobian is symmetrized as `(M + M^T) / 2`.
pub fn finite_diff_hessian_block<G>(g: G, x_block: &[f64], h: f64) -> Result<DenseMatrix>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let jac = finite_diff_jacobian(g, x_block, h)?;
    if !jac.is_square() {
        return Err(NepError::DimensionMismatch { expected: jac.cols(), got: jac.rows() });
    }
    Ok(jac.symmetrized())
}
