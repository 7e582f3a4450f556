//! Comparison solvers: Newton's method on the stacked first-order system
//! with unit step, and the exact (simultaneous) Jacobi best-response
//! iteration.

use serde::{Deserialize, Serialize};

use crate::descent::{IterateRecord, SolveReport, SolveStatus, SolverConfig};
use crate::error::{check_len, NepError, Result};
use crate::linalg::{lu_solve, norm2, norm_inf, DenseMatrix};
use crate::problem::{evaluate_residual, NepProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    NewtonKkt,
    ExactJacobi,
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::NewtonKkt => "newton-kkt",
            Self::ExactJacobi => "exact-jacobi",
        }
    }
}

/// Stopping tolerance of the per-player stationarity solves, relative to
/// `1 + ||g_i||` at the inner start.
pub const DEFAULT_INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITER: usize = 100;
const INNER_MAX_HALVINGS: usize = 30;
const INNER_ARMIJO: f64 = 1e-4;

/// Full Newton step on `(grad_{x1} f1, grad_{x2} f2) = 0` using the true,
/// possibly indefinite, Hessian blocks.
pub fn newton_kkt_step(problem: &NepProblem, x1: &[f64], x2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = evaluate_residual(problem, x1, x2)?;
    let h11 = problem.hess11(x1, x2)?;
    let h22 = problem.hess22(x1, x2)?;
    let h12 = problem.hess12_f1(x1, x2)?;
    let h21 = problem.hess21_f2(x1, x2)?;
    let n1 = problem.n1();
    let n = n1 + problem.n2();
    let a = DenseMatrix::from_fn(n, n, |i, j| match (i < n1, j < n1) {
        (true, true) => h11[(i, j)],
        (true, false) => h12[(i, j - n1)],
        (false, true) => h21[(i - n1, j)],
        (false, false) => h22[(i - n1, j - n1)],
    });
    let rhs: Vec<f64> = r.g1.iter().chain(&r.g2).map(|v| -v).collect();
    let mut d1 = lu_solve(&a, &rhs)?;
    let d2 = d1.split_off(n1);
    Ok((d1, d2))
}

/// Damped Newton root find for `grad(y) = 0`, with Armijo backtracking on
/// `||grad||^2 / 2`.
fn stationary_point<G, H>(grad: G, hess: H, start: &[f64], tol: f64) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
    H: Fn(&[f64]) -> Result<DenseMatrix>,
{
    let mut y = start.to_vec();
    let mut g = grad(&y)?;
    let target = tol * (1.0 + norm2(&g));
    for _ in 0..INNER_MAX_ITER {
        let phi = 0.5 * norm2(&g).powi(2);
        if norm2(&g) <= target {
            return Ok(y);
        }
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let d = match lu_solve(&hess(&y)?, &neg) {
            Ok(d) => d,
            Err(NepError::Singular) => {
                return Err(NepError::InnerSolveFailure("per-player Hessian is singular".into()))
            }
            Err(e) => return Err(e),
        };
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=INNER_MAX_HALVINGS {
            let trial: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            match grad(&trial) {
                Ok(gt) if 0.5 * norm2(&gt).powi(2) <= (1.0 - 2.0 * INNER_ARMIJO * s) * phi => {
                    accepted = Some((trial, gt));
                    break;
                }
                Ok(_) | Err(NepError::NonFiniteEvaluation(_)) => s /= 2.0,
                Err(e) => return Err(e),
            }
        }
        let (yn, gn) = accepted
            .ok_or_else(|| NepError::InnerSolveFailure("no sufficient decrease along the Newton direction".into()))?;
        y = yn;
        g = gn;
    }
    if norm2(&g) <= target {
        Ok(y)
    } else {
        Err(NepError::InnerSolveFailure(format!("no convergence in {INNER_MAX_ITER} iterations")))
    }
}

/// One simultaneous best-response step: `x1_new` solves
/// `grad_{x1} f1(., x2) = 0` and `x2_new` solves `grad_{x2} f2(x1, .) = 0`,
/// each started from the current coordinate.
pub fn exact_jacobi_step(problem: &NepProblem, x1: &[f64], x2: &[f64], inner_tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(inner_tol > 0.0) {
        return Err(NepError::InvalidConfig(format!("inner tolerance must be positive, got {inner_tol}")));
    }
    check_len(x1.len(), problem.n1())?;
    check_len(x2.len(), problem.n2())?;
    let x1_new = stationary_point(|y| problem.grad1(y, x2), |y| problem.hess11(y, x2), x1, inner_tol)?;
    let x2_new = stationary_point(|y| problem.grad2(x1, y), |y| problem.hess22(x1, y), x2, inner_tol)?;
    Ok((x1_new, x2_new))
}

/// Runs a baseline with unit steps. Uses `grad_tol`, `max_iter` and
/// `divergence_radius` from `config`; the line-search parameters are unused.
pub fn run_baseline(
    kind: BaselineKind,
    problem: &NepProblem,
    x0_1: &[f64],
    x0_2: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    check_len(x0_1.len(), problem.n1())?;
    check_len(x0_2.len(), problem.n2())?;
    let mut x1 = x0_1.to_vec();
    let mut x2 = x0_2.to_vec();
    let mut trajectory = Vec::new();
    let label = kind.label();
    let finish = |status, x1, x2, trajectory, msg: Option<String>| {
        Ok(SolveReport::finish(problem, label, status, x1, x2, trajectory, config.grad_tol, msg))
    };

    for k in 0..=config.max_iter {
        let radius = norm_inf(&x1).max(norm_inf(&x2));
        if !radius.is_finite() || radius > config.divergence_radius {
            return finish(SolveStatus::Diverged, x1, x2, trajectory, Some(format!("|x|_inf = {radius:e}")));
        }
        let res = match evaluate_residual(problem, &x1, &x2) {
            Ok(r) => r,
            Err(NepError::NonFiniteEvaluation(what)) => {
                return finish(SolveStatus::Diverged, x1, x2, trajectory, Some(format!("non-finite {what}")))
            }
            Err(e) => return Err(e),
        };
        if res.norm <= config.grad_tol {
            return finish(SolveStatus::Converged, x1, x2, trajectory, None);
        }
        if k == config.max_iter {
            return finish(SolveStatus::MaxIterations, x1, x2, trajectory, None);
        }
        let step = match kind {
            BaselineKind::NewtonKkt => newton_kkt_step(problem, &x1, &x2),
            BaselineKind::ExactJacobi => exact_jacobi_step(problem, &x1, &x2, DEFAULT_INNER_TOL).map(|(a, b)| {
                let d1 = a.iter().zip(&x1).map(|(n, o)| n - o).collect();
                let d2 = b.iter().zip(&x2).map(|(n, o)| n - o).collect();
                (d1, d2)
            }),
        };
        let (d1, d2) = match step {
            Ok(d) => d,
            Err(NepError::Singular) => {
                return finish(SolveStatus::SingularSystem, x1, x2, trajectory, Some("singular Newton system".into()))
            }
            Err(NepError::InnerSolveFailure(m)) => {
                return finish(SolveStatus::InnerSolveFailure, x1, x2, trajectory, Some(m))
            }
            Err(e @ NepError::NonFiniteEvaluation(_)) => {
                return finish(SolveStatus::Diverged, x1, x2, trajectory, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let next1: Vec<f64> = x1.iter().zip(&d1).map(|(a, b)| a + b).collect();
        let next2: Vec<f64> = x2.iter().zip(&d2).map(|(a, b)| a + b).collect();
        let (f1, f2) = (problem.f1(&x1, &x2).unwrap_or(f64::NAN), problem.f2(&x1, &x2).unwrap_or(f64::NAN));
        trajectory.push(IterateRecord {
            k,
            x1: std::mem::replace(&mut x1, next1),
            x2: std::mem::replace(&mut x2, next2),
            g1: res.g1,
            g2: res.g2,
            f1,
            f2,
            t: 1.0,
            d1,
            d2,
            backtracks: 0,
            certificate: None,
            system: None,
        });
    }
    unreachable!("loop returns at k == max_iter")
}
