//! Jacobi-type descent Newton method with prediction-based line search.
//!
//! Each outer iteration builds positive definite surrogates `H1`, `H2` of
//! the own-player Hessians and solves
//!
//! ```text
//! [ H1    t M1 ] [d1]     [g1]
//! [ t M2  H2   ] [d2] = - [g2]
//! ```
//!
//! where `M1`, `M2` are the (safeguarded) mixed blocks. A step is accepted
//! when six sufficient-decrease, angle and scaling inequalities hold at the
//! predicted points `(x1, x2 + t d2)` and `(x1 + t d1, x2)`; otherwise `t`
//! is halved and the direction recomputed.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, NepError, Result};
use crate::linalg::{
    assemble_block_system, axpy, dot, modified_cholesky, norm2, norm_inf, DenseMatrix, LuFactorization,
    SpdSurrogate,
};
use crate::problem::{classify_point, evaluate_residual, NepProblem, PointClass};

/// Caller-provided surrogate pair, called as `f(k, x1, x2)`.
pub type SurrogateFn = Arc<dyn Fn(usize, &[f64], &[f64]) -> (DenseMatrix, DenseMatrix) + Send + Sync>;

#[derive(Clone, Default)]
pub enum HessianStrategy {
    /// Exact own-player Hessians, made positive definite by
    /// [`modified_cholesky`].
    #[default]
    ModifiedExact,
    Identity,
    /// Matrices from the closure; these also pass through
    /// [`modified_cholesky`], which leaves positive definite input unchanged.
    UserSupplied(SurrogateFn),
}

impl fmt::Debug for HessianStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ModifiedExact => f.write_str("ModifiedExact"),
            Self::Identity => f.write_str("Identity"),
            Self::UserSupplied(_) => f.write_str("UserSupplied"),
        }
    }
}

impl HessianStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            Self::ModifiedExact => "modified-exact",
            Self::Identity => "identity",
            Self::UserSupplied(_) => "user-supplied",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub alpha: f64,
    pub theta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub t_min: f64,
    pub divergence_radius: f64,
    pub eps_stationary: f64,
    pub chol_floor: f64,
    pub hessian_strategy: HessianStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-6,
            theta: 0.01,
            gamma: 1e-6,
            tau: 0.99,
            grad_tol: 1e-4,
            max_iter: 1000,
            t_min: 1e-18,
            divergence_radius: 1e8,
            eps_stationary: 1e-12,
            chol_floor: 1e-8,
            hessian_strategy: HessianStrategy::ModifiedExact,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NepError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        for (name, v) in [
            ("theta", self.theta),
            ("gamma", self.gamma),
            ("grad_tol", self.grad_tol),
            ("t_min", self.t_min),
            ("divergence_radius", self.divergence_radius),
            ("chol_floor", self.chol_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.eps_stationary >= 0.0 && self.eps_stationary.is_finite()) {
            return bad(format!("eps_stationary must be nonnegative, got {}", self.eps_stationary));
        }
        if self.t_min > 1.0 {
            return bad(format!("t_min must not exceed 1, got {}", self.t_min));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub t_used_in_system: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSearchCertificate {
    pub t: f64,
    /// Inequalities (13)..(18) in order: Armijo, angle and scaling for
    /// player 1, then the same three for player 2.
    pub checks: [bool; 6],
    /// Halvings caused by failed inequalities, non-finite trials included.
    pub backtracks: usize,
    pub singular_halvings: usize,
    pub nonfinite_rejections: usize,
    /// `grad_{x1} f1(x1, x2 + t d2)` at the accepted `t`.
    pub predicted_grad1: Vec<f64>,
    /// `grad_{x2} f2(x1 + t d1, x2)` at the accepted `t`.
    pub predicted_grad2: Vec<f64>,
}

impl LineSearchCertificate {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|&c| c)
    }
}

/// The linear system actually solved for an accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSnapshot {
    pub h1: DenseMatrix,
    pub h2: DenseMatrix,
    pub shift1: f64,
    pub shift2: f64,
    /// Mixed blocks after the safeguard, before scaling by `t`.
    pub m1: DenseMatrix,
    pub m2: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    #[serde(with = "lossless_f64")]
    pub f1: f64,
    #[serde(with = "lossless_f64")]
    pub f2: f64,
    pub t: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub backtracks: usize,
    /// Present for descent Newton steps only.
    pub certificate: Option<LineSearchCertificate>,
    pub system: Option<SystemSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIterations,
    LineSearchFailure,
    /// A baseline's per-player stationarity solve broke down.
    InnerSolveFailure,
    /// A baseline's Newton system was singular.
    SingularSystem,
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::Diverged => "diverged",
            Self::MaxIterations => "max-iterations",
            Self::LineSearchFailure => "line-search-failure",
            Self::InnerSolveFailure => "inner-solve-failure",
            Self::SingularSystem => "singular-system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub solver: String,
    pub status: SolveStatus,
    pub final_x1: Vec<f64>,
    pub final_x2: Vec<f64>,
    /// `+inf` when the final gradient could not be evaluated.
    #[serde(with = "lossless_f64")]
    pub final_residual: f64,
    pub iterations: usize,
    pub trajectory: Vec<IterateRecord>,
    pub classification: Option<PointClass>,
    /// Human-readable reason for non-converged runs.
    pub message: Option<String>,
}

impl SolveReport {
    /// Builds the report for the final point, classifying it when finite.
    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        problem: &NepProblem,
        solver: &str,
        status: SolveStatus,
        x1: Vec<f64>,
        x2: Vec<f64>,
        trajectory: Vec<IterateRecord>,
        grad_tol: f64,
        message: Option<String>,
    ) -> Self {
        let finite = x1.iter().chain(&x2).all(|v| v.is_finite());
        let final_residual = if finite {
            evaluate_residual(problem, &x1, &x2).map(|r| r.norm).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let classification =
            if final_residual.is_finite() { classify_point(problem, &x1, &x2, grad_tol).ok() } else { None };
        Self {
            problem: problem.name().to_string(),
            solver: solver.to_string(),
            status,
            final_x1: x1,
            final_x2: x2,
            final_residual,
            iterations: trajectory.len(),
            trajectory,
            classification,
            message,
        }
    }

    pub fn min_accepted_t(&self) -> Option<f64> {
        self.trajectory.iter().map(|r| r.t).reduce(f64::min)
    }

    pub fn total_backtracks(&self) -> usize {
        self.trajectory.iter().map(|r| r.backtracks).sum()
    }
}

/// JSON has no infinity or NaN; encode non-finite values as strings.
pub(crate) mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Keeps mixed block `i` unless `||g_i|| <= eps_stationary` and `t <= tau`.
pub fn safeguard_mixed_blocks(
    g1_norm: f64,
    g2_norm: f64,
    t: f64,
    config: &SolverConfig,
    mixed1: &DenseMatrix,
    mixed2: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix) {
    let keep = |g: f64| g > config.eps_stationary || t > config.tau;
    let m1 = if keep(g1_norm) { mixed1.clone() } else { DenseMatrix::zeros(mixed1.rows(), mixed1.cols()) };
    let m2 = if keep(g2_norm) { mixed2.clone() } else { DenseMatrix::zeros(mixed2.rows(), mixed2.cols()) };
    (m1, m2)
}

fn solve_block_system(
    h1: &SpdSurrogate,
    h2: &SpdSurrogate,
    m1: &DenseMatrix,
    m2: &DenseMatrix,
    g1: &[f64],
    g2: &[f64],
    t: f64,
) -> Result<Direction> {
    let a = assemble_block_system(h1, h2, m1, m2, t)?;
    let lu = LuFactorization::new(&a)?;
    let rhs: Vec<f64> = g1.iter().chain(g2).map(|v| -v).collect();
    let mut d1 = lu.solve(&rhs)?;
    let d2 = d1.split_off(g1.len());
    Ok(Direction { d1, d2, t_used_in_system: t })
}

/// Safeguards the mixed blocks for this `t` and solves the block system.
/// `Singular` tells the caller to halve `t`.
#[allow(clippy::too_many_arguments)]
pub fn compute_direction(
    problem: &NepProblem,
    x1: &[f64],
    x2: &[f64],
    g1: &[f64],
    g2: &[f64],
    h1: &SpdSurrogate,
    h2: &SpdSurrogate,
    t: f64,
    config: &SolverConfig,
) -> Result<Direction> {
    check_len(g1.len(), problem.n1())?;
    check_len(g2.len(), problem.n2())?;
    let mixed1 = problem.hess12_f1(x1, x2)?;
    let mixed2 = problem.hess21_f2(x1, x2)?;
    let (m1, m2) = safeguard_mixed_blocks(norm2(g1), norm2(g2), t, config, &mixed1, &mixed2);
    solve_block_system(h1, h2, &m1, &m2, g1, g2, t)
}

/// Evaluates the six acceptance inequalities for step `t` along `d`.
///
/// Player 1 is tested at the predicted point `(x1, x2 + t d2)` and player 2
/// at `(x1 + t d1, x2)`.
#[allow(clippy::too_many_arguments)]
pub fn check_inequalities(
    problem: &NepProblem,
    x1: &[f64],
    x2: &[f64],
    g1: &[f64],
    g2: &[f64],
    d: &Direction,
    t: f64,
    config: &SolverConfig,
) -> Result<LineSearchCertificate> {
    let y1 = axpy(x1, t, &d.d1);
    let y2 = axpy(x2, t, &d.d2);

    let p1 = problem.grad1(x1, &y2)?;
    let f1_new = problem.f1(&y1, &y2)?;
    let f1_pred = problem.f1(x1, &y2)?;
    let p2 = problem.grad2(&y1, x2)?;
    let f2_new = problem.f2(&y1, &y2)?;
    let f2_pred = problem.f2(&y1, x2)?;

    let side = |f_new: f64, f_pred: f64, p: &[f64], di: &[f64], gi: &[f64]| {
        let slope = dot(p, di);
        let (np, nd, ng) = (norm2(p), norm2(di), norm2(gi));
        [
            f_new <= f_pred + config.alpha * t * slope,
            slope <= -config.theta * np * nd,
            config.gamma * np * ng <= nd * ng,
        ]
    };
    let a = side(f1_new, f1_pred, &p1, &d.d1, g1);
    let b = side(f2_new, f2_pred, &p2, &d.d2, g2);
    Ok(LineSearchCertificate {
        t,
        checks: [a[0], a[1], a[2], b[0], b[1], b[2]],
        backtracks: 0,
        singular_halvings: 0,
        nonfinite_rejections: 0,
        predicted_grad1: p1,
        predicted_grad2: p2,
    })
}

fn surrogates(
    problem: &NepProblem,
    k: usize,
    x1: &[f64],
    x2: &[f64],
    config: &SolverConfig,
) -> Result<(SpdSurrogate, SpdSurrogate)> {
    let floor = config.chol_floor;
    match &config.hessian_strategy {
        HessianStrategy::ModifiedExact => Ok((
            modified_cholesky(&problem.hess11(x1, x2)?, floor)?,
            modified_cholesky(&problem.hess22(x1, x2)?, floor)?,
        )),
        HessianStrategy::Identity => Ok((
            SpdSurrogate::from_spd(DenseMatrix::identity(problem.n1()), floor)?,
            SpdSurrogate::from_spd(DenseMatrix::identity(problem.n2()), floor)?,
        )),
        HessianStrategy::UserSupplied(f) => {
            let (a, b) = f(k, x1, x2);
            check_len(a.rows(), problem.n1())?;
            check_len(b.rows(), problem.n2())?;
            Ok((modified_cholesky(&a, floor)?, modified_cholesky(&b, floor)?))
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum StepOutcome {
    Accepted(Direction, LineSearchCertificate, DenseMatrix, DenseMatrix),
    TooSmall,
}

/// Steps 2 to 5: safeguard, singularity halvings, solve, inequality checks.
#[allow(clippy::too_many_arguments)]
fn line_search(
    problem: &NepProblem,
    x1: &[f64],
    x2: &[f64],
    g1: &[f64],
    g2: &[f64],
    h1: &SpdSurrogate,
    h2: &SpdSurrogate,
    mixed1: &DenseMatrix,
    mixed2: &DenseMatrix,
    config: &SolverConfig,
) -> Result<StepOutcome> {
    let (g1n, g2n) = (norm2(g1), norm2(g2));
    let mut t = 1.0;
    let (mut backtracks, mut singular_halvings, mut nonfinite) = (0, 0, 0);
    loop {
        let (m1, m2) = safeguard_mixed_blocks(g1n, g2n, t, config, mixed1, mixed2);
        let dir = loop {
            if t < config.t_min {
                return Ok(StepOutcome::TooSmall);
            }
            match solve_block_system(h1, h2, &m1, &m2, g1, g2, t) {
                Ok(d) => break d,
                Err(NepError::Singular) => {
                    singular_halvings += 1;
                    t /= 2.0;
                }
                Err(e) => return Err(e),
            }
        };
        match check_inequalities(problem, x1, x2, g1, g2, &dir, t, config) {
            Ok(mut cert) if cert.all_hold() => {
                cert.backtracks = backtracks;
                cert.singular_halvings = singular_halvings;
                cert.nonfinite_rejections = nonfinite;
                return Ok(StepOutcome::Accepted(dir, cert, m1, m2));
            }
            Ok(_) => {}
            Err(NepError::NonFiniteEvaluation(_)) => nonfinite += 1,
            Err(e) => return Err(e),
        }
        backtracks += 1;
        t /= 2.0;
        if t < config.t_min {
            return Ok(StepOutcome::TooSmall);
        }
    }
}

pub const DESCENT_NEWTON_LABEL: &str = "descent-newton";

/// Runs the descent Newton method from `(x0_1, x0_2)`.
///
/// Invalid input (wrong dimensions, bad configuration) is an error; every
/// numerical outcome, including divergence, is a [`SolveStatus`].
pub fn solve(problem: &NepProblem, x0_1: &[f64], x0_2: &[f64], config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    check_len(x0_1.len(), problem.n1())?;
    check_len(x0_2.len(), problem.n2())?;
    let mut x1 = x0_1.to_vec();
    let mut x2 = x0_2.to_vec();
    let mut trajectory = Vec::new();
    let finish = |status, x1, x2, trajectory, msg: Option<String>| {
        Ok(SolveReport::finish(problem, DESCENT_NEWTON_LABEL, status, x1, x2, trajectory, config.grad_tol, msg))
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

        let blocks = surrogates(problem, k, &x1, &x2, config).and_then(|(h1, h2)| {
            Ok((h1, h2, problem.hess12_f1(&x1, &x2)?, problem.hess21_f2(&x1, &x2)?))
        });
        let (h1, h2, mixed1, mixed2) = match blocks {
            Ok(b) => b,
            Err(e @ (NepError::NonFiniteEvaluation(_) | NepError::ShiftOverflow { .. })) => {
                return finish(SolveStatus::Diverged, x1, x2, trajectory, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let (f1, f2) = (problem.f1(&x1, &x2).unwrap_or(f64::NAN), problem.f2(&x1, &x2).unwrap_or(f64::NAN));

        let outcome = line_search(problem, &x1, &x2, &res.g1, &res.g2, &h1, &h2, &mixed1, &mixed2, config)?;
        let (dir, cert, m1, m2) = match outcome {
            StepOutcome::Accepted(d, c, m1, m2) => (d, c, m1, m2),
            StepOutcome::TooSmall => {
                return finish(
                    SolveStatus::LineSearchFailure,
                    x1,
                    x2,
                    trajectory,
                    Some(format!("step fell below {:e}", config.t_min)),
                )
            }
        };
        let t = cert.t;
        let next1 = axpy(&x1, t, &dir.d1);
        let next2 = axpy(&x2, t, &dir.d2);
        trajectory.push(IterateRecord {
            k,
            x1: std::mem::replace(&mut x1, next1),
            x2: std::mem::replace(&mut x2, next2),
            g1: res.g1,
            g2: res.g2,
            f1,
            f2,
            t,
            d1: dir.d1,
            d2: dir.d2,
            backtracks: cert.backtracks,
            system: Some(SystemSnapshot { shift1: h1.shift, shift2: h2.shift, h1: h1.matrix, h2: h2.matrix, m1, m2 }),
            certificate: Some(cert),
        });
    }
    unreachable!("loop returns at k == max_iter")
}
