//! Multi-start outcome studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineKind};
use crate::descent::{solve, SolveReport, SolveStatus, SolverConfig};
use crate::error::{NepError, Result};
use crate::problem::{NepProblem, PointKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    DescentNewton,
    NewtonKkt,
    ExactJacobi,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::DescentNewton, SolverKind::NewtonKkt, SolverKind::ExactJacobi];

    pub fn label(&self) -> &'static str {
        match self {
            Self::DescentNewton => "descent-newton",
            Self::NewtonKkt => "newton-kkt",
            Self::ExactJacobi => "exact-jacobi",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }

    pub fn run(&self, problem: &NepProblem, x1: &[f64], x2: &[f64], config: &SolverConfig) -> Result<SolveReport> {
        match self {
            Self::DescentNewton => solve(problem, x1, x2, config),
            Self::NewtonKkt => run_baseline(BaselineKind::NewtonKkt, problem, x1, x2, config),
            Self::ExactJacobi => run_baseline(BaselineKind::ExactJacobi, problem, x1, x2, config),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Equilibrium,
    NonEquilibriumStationary,
    /// Diverged, hit the iteration cap, or broke down.
    Failed,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Equilibrium => "equilibrium",
            Self::NonEquilibriumStationary => "non-equilibrium-stationary",
            Self::Failed => "failed",
        }
    }

    pub fn of(report: &SolveReport) -> Self {
        if report.status != SolveStatus::Converged {
            return Self::Failed;
        }
        match report.classification.map(|c| c.kind) {
            Some(PointKind::EquilibriumCandidate) => Self::Equilibrium,
            Some(PointKind::NonEquilibriumStationary) => Self::NonEquilibriumStationary,
            _ => Self::Failed,
        }
    }
}

/// Stopping tolerance used for multi-start facility studies.
pub const FACILITY_GRAD_TOL: f64 = 1e-6;

/// Facility objectives flatten out far from the clients, so an iterate
/// escaping to infinity eventually meets any absolute gradient tolerance
/// with a numerically zero Hessian. Leaving a box two orders of magnitude
/// wider than the clients and the start region counts as divergence.
pub const FACILITY_DIVERGENCE_RADIUS: f64 = 100.0;

pub fn facility_config() -> SolverConfig {
    SolverConfig {
        grad_tol: FACILITY_GRAD_TOL,
        divergence_radius: FACILITY_DIVERGENCE_RADIUS,
        ..SolverConfig::default()
    }
}

/// `runs` starting points with coordinates uniform in `[lo, hi]`, drawn in
/// order from one seeded stream.
pub fn seeded_starts(n1: usize, n2: usize, runs: usize, seed: u64, lo: f64, hi: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs)
        .map(|_| {
            let x1 = (0..n1).map(|_| rng.random_range(lo..=hi)).collect();
            let x2 = (0..n2).map(|_| rng.random_range(lo..=hi)).collect();
            (x1, x2)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub run: usize,
    pub solver: SolverKind,
    pub x0_1: Vec<f64>,
    pub x0_2: Vec<f64>,
    pub outcome: Outcome,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_x1: Vec<f64>,
    pub final_x2: Vec<f64>,
    #[serde(with = "crate::descent::lossless_f64")]
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub solver: SolverKind,
    pub runs: usize,
    pub equilibrium: usize,
    pub non_equilibrium_stationary: usize,
    pub failed: usize,
    /// Over converged runs; `None` when none converged.
    pub mean_iterations_converged: Option<f64>,
}

/// Full reports for one solver from every start, computed in parallel and
/// returned in start order.
pub fn multi_start_reports(
    problem: &NepProblem,
    starts: &[(Vec<f64>, Vec<f64>)],
    solver: SolverKind,
    config: &SolverConfig,
) -> Result<Vec<SolveReport>> {
    starts.par_iter().map(|(x1, x2)| solver.run(problem, x1, x2, config)).collect()
}

/// Runs every solver from every start in parallel. Results come back in
/// `(solver, start)` order regardless of scheduling.
pub fn multi_start_study(
    problem: &NepProblem,
    starts: &[(Vec<f64>, Vec<f64>)],
    solvers: &[SolverKind],
    config: &SolverConfig,
) -> Result<Vec<StartResult>> {
    if starts.is_empty() {
        return Err(NepError::InvalidConfig("at least one start is required".into()));
    }
    let mut out = Vec::with_capacity(solvers.len() * starts.len());
    for &solver in solvers {
        let reports = multi_start_reports(problem, starts, solver, config)?;
        for (i, rep) in reports.into_iter().enumerate() {
            let (x1, x2) = &starts[i];
            out.push(StartResult {
                run: i,
                solver,
                x0_1: x1.clone(),
                x0_2: x2.clone(),
                outcome: Outcome::of(&rep),
                status: rep.status,
                iterations: rep.iterations,
                final_x1: rep.final_x1,
                final_x2: rep.final_x2,
                final_residual: rep.final_residual,
            });
        }
    }
    Ok(out)
}

pub fn summarize(results: &[StartResult], solvers: &[SolverKind]) -> Vec<OutcomeSummary> {
    solvers
        .iter()
        .map(|&solver| {
            let mine: Vec<&StartResult> = results.iter().filter(|r| r.solver == solver).collect();
            let count = |o: Outcome| mine.iter().filter(|r| r.outcome == o).count();
            let conv: Vec<usize> =
                mine.iter().filter(|r| r.status == SolveStatus::Converged).map(|r| r.iterations).collect();
            OutcomeSummary {
                solver,
                runs: mine.len(),
                equilibrium: count(Outcome::Equilibrium),
                non_equilibrium_stationary: count(Outcome::NonEquilibriumStationary),
                failed: count(Outcome::Failed),
                mean_iterations_converged: (!conv.is_empty())
                    .then(|| conv.iter().sum::<usize>() as f64 / conv.len() as f64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::make_example;

    #[test]
    fn starts_are_prefix_stable_and_in_range() {
        let a = seeded_starts(2, 2, 5, 1, -2.0, 2.0);
        let b = seeded_starts(2, 2, 10, 1, -2.0, 2.0);
        assert_eq!(a[..], b[..5]);
        assert!(b.iter().flat_map(|(p, q)| p.iter().chain(q)).all(|v| (-2.0..=2.0).contains(v)));
    }

    #[test]
    fn results_keep_start_order() {
        let p = make_example(1).unwrap();
        let starts = seeded_starts(1, 1, 8, 3, -2.0, 2.0);
        let r = multi_start_study(&p, &starts, &SolverKind::ALL, &SolverConfig::default()).unwrap();
        assert_eq!(r.len(), 24);
        for (j, res) in r.iter().enumerate() {
            assert_eq!(res.run, j % 8);
            assert_eq!(res.solver, SolverKind::ALL[j / 8]);
            assert_eq!(res.x0_1, starts[j % 8].0);
        }
        let s = summarize(&r, &SolverKind::ALL);
        assert_eq!(s[0].equilibrium, 8);
    }

    #[test]
    fn labels_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(SolverKind::from_label(k.label()), Some(k));
        }
        assert_eq!(SolverKind::from_label("yuan"), None);
    }
}
