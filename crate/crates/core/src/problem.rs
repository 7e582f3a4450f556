//! Two-player NEP definitions and derivative oracles.
//!
//! Player 1 minimizes `f1(x1, x2)` over `x1`, player 2 minimizes `f2(x1, x2)`
//! over `x2`. Every derivative oracle is optional; missing ones are filled
//! by finite differences (central for gradients, forward on the gradient for
//! second-derivative blocks).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, finite_scalar, finite_vec, NepError, Result};
use crate::finite_diff::{
    default_gradient_step, default_jacobian_step, finite_diff_gradient, finite_diff_hessian_block,
    finite_diff_jacobian,
};
use crate::linalg::{norm2, norm_inf, spectral_bounds_sym, DenseMatrix};

pub type ObjectiveFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type BlockFn = Arc<dyn Fn(&[f64], &[f64]) -> DenseMatrix + Send + Sync>;

/// Step used on both levels when a Hessian block is differenced from a
/// differenced gradient, roughly `eps^(1/4)`.
const NESTED_FD_STEP: f64 = 1e-4;

/// Default PSD tolerance for [`classify_point`].
pub const DEFAULT_EPS_PSD: f64 = 1e-8;

#[derive(Clone)]
pub struct NepProblem {
    name: String,
    n1: usize,
    n2: usize,
    f1: ObjectiveFn,
    f2: ObjectiveFn,
    grad1: Option<GradientFn>,
    grad2: Option<GradientFn>,
    hess11: Option<BlockFn>,
    hess22: Option<BlockFn>,
    hess12_f1: Option<BlockFn>,
    hess21_f2: Option<BlockFn>,
}

impl fmt::Debug for NepProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NepProblem")
            .field("name", &self.name)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("analytic_gradients", &self.has_analytic_gradients())
            .field("analytic_hessians", &self.has_analytic_hessians())
            .finish()
    }
}

impl NepProblem {
    pub fn new<F1, F2>(name: impl Into<String>, n1: usize, n2: usize, f1: F1, f2: F2) -> Result<Self>
    where
        F1: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        F2: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if n1 == 0 || n2 == 0 {
            return Err(NepError::InvalidConfig("player dimensions must be at least 1".into()));
        }
        Ok(Self {
            name: name.into(),
            n1,
            n2,
            f1: Arc::new(f1),
            f2: Arc::new(f2),
            grad1: None,
            grad2: None,
            hess11: None,
            hess22: None,
            hess12_f1: None,
            hess21_f2: None,
        })
    }

    /// `grad_{x1} f1`.
    pub fn with_grad1(mut self, g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad1 = Some(Arc::new(g));
        self
    }

    /// `grad_{x2} f2`.
    pub fn with_grad2(mut self, g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad2 = Some(Arc::new(g));
        self
    }

    /// `hess_{x1 x1} f1`, n1 x n1.
    pub fn with_hess11(mut self, h: impl Fn(&[f64], &[f64]) -> DenseMatrix + Send + Sync + 'static) -> Self {
        self.hess11 = Some(Arc::new(h));
        self
    }

    /// `hess_{x2 x2} f2`, n2 x n2.
    pub fn with_hess22(mut self, h: impl Fn(&[f64], &[f64]) -> DenseMatrix + Send + Sync + 'static) -> Self {
        self.hess22 = Some(Arc::new(h));
        self
    }

    /// Mixed block of `f1`: derivative of `grad_{x1} f1` with respect to
    /// `x2`, shape n1 x n2.
    pub fn with_hess12_f1(mut self, h: impl Fn(&[f64], &[f64]) -> DenseMatrix + Send + Sync + 'static) -> Self {
        self.hess12_f1 = Some(Arc::new(h));
        self
    }

    /// Mixed block of `f2`: derivative of `grad_{x2} f2` with respect to
    /// `x1`, shape n2 x n1. This is the block that multiplies `d1` in the
    /// second row of the Newton system.
    pub fn with_hess21_f2(mut self, h: impl Fn(&[f64], &[f64]) -> DenseMatrix + Send + Sync + 'static) -> Self {
        self.hess21_f2 = Some(Arc::new(h));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn has_analytic_gradients(&self) -> bool {
        self.grad1.is_some() && self.grad2.is_some()
    }

    pub fn has_analytic_hessians(&self) -> bool {
        self.hess11.is_some() && self.hess22.is_some() && self.hess12_f1.is_some() && self.hess21_f2.is_some()
    }

    fn check_point(&self, x1: &[f64], x2: &[f64]) -> Result<()> {
        check_len(x1.len(), self.n1)?;
        check_len(x2.len(), self.n2)
    }

    pub fn f1(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x1, x2)?;
        finite_scalar((self.f1)(x1, x2), "f1")
    }

    pub fn f2(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x1, x2)?;
        finite_scalar((self.f2)(x1, x2), "f2")
    }

    /// `grad_{x1} f1(x1, x2)`.
    pub fn grad1(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x1, x2)?;
        let g = match &self.grad1 {
            Some(g) => g(x1, x2),
            None => finite_diff_gradient(|y| (self.f1)(y, x2), x1, default_gradient_step(x1))?,
        };
        check_len(g.len(), self.n1)?;
        finite_vec(g, "grad1")
    }

    /// `grad_{x2} f2(x1, x2)`.
    pub fn grad2(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x1, x2)?;
        let g = match &self.grad2 {
            Some(g) => g(x1, x2),
            None => finite_diff_gradient(|y| (self.f2)(x1, y), x2, default_gradient_step(x2))?,
        };
        check_len(g.len(), self.n2)?;
        finite_vec(g, "grad2")
    }

    /// Central-difference gradients of the objectives, ignoring any
    /// analytic oracle. Used to cross-check analytic derivatives.
    pub fn fd_grad1(&self, x1: &[f64], x2: &[f64], h: f64) -> Result<Vec<f64>> {
        self.check_point(x1, x2)?;
        finite_diff_gradient(|y| (self.f1)(y, x2), x1, h)
    }

    pub fn fd_grad2(&self, x1: &[f64], x2: &[f64], h: f64) -> Result<Vec<f64>> {
        self.check_point(x1, x2)?;
        finite_diff_gradient(|y| (self.f2)(x1, y), x2, h)
    }

    // Differencing a differenced gradient needs larger steps on both levels
    // or roundoff dominates; analytic gradients allow sqrt(eps).
    fn jacobian_step(&self, analytic_gradient: bool, x: &[f64]) -> f64 {
        if analytic_gradient {
            default_jacobian_step(x)
        } else {
            NESTED_FD_STEP * norm_inf(x).max(1.0)
        }
    }

    fn grad1_for_differencing(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        match &self.grad1 {
            Some(g) => g(x1, x2),
            None => finite_diff_gradient(|y| (self.f1)(y, x2), x1, NESTED_FD_STEP * norm_inf(x1).max(1.0))
                .unwrap_or_else(|_| vec![f64::NAN; self.n1]),
        }
    }

    fn grad2_for_differencing(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        match &self.grad2 {
            Some(g) => g(x1, x2),
            None => finite_diff_gradient(|y| (self.f2)(x1, y), x2, NESTED_FD_STEP * norm_inf(x2).max(1.0))
                .unwrap_or_else(|_| vec![f64::NAN; self.n2]),
        }
    }

    fn checked_block(&self, m: DenseMatrix, rows: usize, cols: usize, what: &'static str) -> Result<DenseMatrix> {
        check_len(m.rows(), rows)?;
        check_len(m.cols(), cols)?;
        if !m.is_finite() {
            return Err(NepError::NonFiniteEvaluation(what));
        }
        Ok(m)
    }

    /// `hess_{x1 x1} f1`.
    pub fn hess11(&self, x1: &[f64], x2: &[f64]) -> Result<DenseMatrix> {
        self.check_point(x1, x2)?;
        let m = match &self.hess11 {
            Some(h) => h(x1, x2),
            None => finite_diff_hessian_block(
                |y| self.grad1_for_differencing(y, x2),
                x1,
                self.jacobian_step(self.grad1.is_some(), x1),
            )?,
        };
        self.checked_block(m, self.n1, self.n1, "hess11")
    }

    /// `hess_{x2 x2} f2`.
    pub fn hess22(&self, x1: &[f64], x2: &[f64]) -> Result<DenseMatrix> {
        self.check_point(x1, x2)?;
        let m = match &self.hess22 {
            Some(h) => h(x1, x2),
            None => finite_diff_hessian_block(
                |y| self.grad2_for_differencing(x1, y),
                x2,
                self.jacobian_step(self.grad2.is_some(), x2),
            )?,
        };
        self.checked_block(m, self.n2, self.n2, "hess22")
    }

    /// Mixed block of `f1`, n1 x n2.
    pub fn hess12_f1(&self, x1: &[f64], x2: &[f64]) -> Result<DenseMatrix> {
        self.check_point(x1, x2)?;
        let m = match &self.hess12_f1 {
            Some(h) => h(x1, x2),
            None => finite_diff_jacobian(
                |y| self.grad1_for_differencing(x1, y),
                x2,
                self.jacobian_step(self.grad1.is_some(), x2),
            )?,
        };
        self.checked_block(m, self.n1, self.n2, "hess12_f1")
    }

    /// Mixed block of `f2`, n2 x n1.
    pub fn hess21_f2(&self, x1: &[f64], x2: &[f64]) -> Result<DenseMatrix> {
        self.check_point(x1, x2)?;
        let m = match &self.hess21_f2 {
            Some(h) => h(x1, x2),
            None => finite_diff_jacobian(
                |y| self.grad2_for_differencing(y, x2),
                x1,
                self.jacobian_step(self.grad2.is_some(), x1),
            )?,
        };
        self.checked_block(m, self.n2, self.n1, "hess21_f2")
    }
}

/// Stacked first-order residual `(grad_{x1} f1, grad_{x2} f2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub norm: f64,
}

impl Residual {
    pub fn new(g1: Vec<f64>, g2: Vec<f64>) -> Self {
        let norm = g1.iter().chain(&g2).map(|v| v * v).sum::<f64>().sqrt();
        Self { g1, g2, norm }
    }

    pub fn g1_norm(&self) -> f64 {
        norm2(&self.g1)
    }

    pub fn g2_norm(&self) -> f64 {
        norm2(&self.g2)
    }
}

pub fn evaluate_residual(problem: &NepProblem, x1: &[f64], x2: &[f64]) -> Result<Residual> {
    Ok(Residual::new(problem.grad1(x1, x2)?, problem.grad2(x1, x2)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    EquilibriumCandidate,
    NonEquilibriumStationary,
    NonStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointClass {
    pub kind: PointKind,
    pub residual_norm: f64,
    pub min_eig_1: f64,
    pub min_eig_2: f64,
}

/// Second-order classification with the default PSD tolerance.
pub fn classify_point(problem: &NepProblem, x1: &[f64], x2: &[f64], tol: f64) -> Result<PointClass> {
    classify_point_with(problem, x1, x2, tol, DEFAULT_EPS_PSD)
}

/// A point is an equilibrium candidate when it is stationary to `tol` and
/// both own-player Hessian blocks have smallest eigenvalue `>= -eps_psd`.
pub fn classify_point_with(
    problem: &NepProblem,
    x1: &[f64],
    x2: &[f64],
    tol: f64,
    eps_psd: f64,
) -> Result<PointClass> {
    if !(tol > 0.0) {
        return Err(NepError::InvalidConfig(format!("classification tolerance must be positive, got {tol}")));
    }
    let r = evaluate_residual(problem, x1, x2)?;
    let (min_eig_1, _) = spectral_bounds_sym(&problem.hess11(x1, x2)?)?;
    let (min_eig_2, _) = spectral_bounds_sym(&problem.hess22(x1, x2)?)?;
    let kind = if r.norm > tol {
        PointKind::NonStationary
    } else if min_eig_1 >= -eps_psd && min_eig_2 >= -eps_psd {
        PointKind::EquilibriumCandidate
    } else {
        PointKind::NonEquilibriumStationary
    };
    Ok(PointClass { kind, residual_norm: r.norm, min_eig_1, min_eig_2 })
}
