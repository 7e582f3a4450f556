//! Numeric certificates on solver runs.
//!
//! Smoothness constants are estimated by sampling a box, so every
//! certificate here is conditional on that region. Lemma conclusions are
//! only checked at iterates whose accepted step satisfies the lemma's
//! hypothesis; everything is recomputed from the recorded trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descent::{IterateRecord, SolveReport};
use crate::error::{NepError, Result};
use crate::finite_diff::default_gradient_step;
use crate::linalg::{modified_cholesky, norm2, spectral_bounds_sym, DenseMatrix};
use crate::problem::NepProblem;

/// Axis-aligned box over the stacked variable `(x1, x2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(NepError::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(NepError::InvalidConfig("box bounds must be finite with lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; dim], vec![radius; dim])
    }

    /// Bounding box of all iterates and the final point, widened by
    /// `margin` on every side.
    pub fn around_run(run: &SolveReport, margin: f64) -> Result<Self> {
        let dim = run.final_x1.len() + run.final_x2.len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let points = run
            .trajectory
            .iter()
            .map(|r| (r.x1.as_slice(), r.x2.as_slice()))
            .chain(std::iter::once((run.final_x1.as_slice(), run.final_x2.as_slice())));
        for (a, b) in points {
            for (i, v) in a.iter().chain(b).enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        Self::new(lo.iter().map(|v| v - margin).collect(), hi.iter().map(|v| v + margin).collect())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| rng.random_range(*a..*b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionEstimates {
    /// Largest mixed-block spectral norm seen.
    pub c_h: f64,
    /// Own-gradient Lipschitz constant.
    pub l: f64,
    /// Second-order remainder constant of the cross-gradient expansion.
    pub c_r: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest `mu_min (||g1|| + ||g2||)` over absorbed iterates.
    pub c_k: f64,
    /// `sqrt(2) / lambda_min`.
    pub mu_min: f64,
    /// `sqrt(lambda_max^2 + 4 lambda_max c_h + c_h^2)`.
    pub mu_max: f64,
    pub samples: usize,
    pub region: SampleBox,
}

impl AssumptionEstimates {
    fn refresh_derived(&mut self) {
        self.mu_min = if self.lambda_min > 0.0 { 2f64.sqrt() / self.lambda_min } else { f64::INFINITY };
        self.mu_max =
            (self.lambda_max.powi(2) + 4.0 * self.lambda_max * self.c_h + self.c_h.powi(2)).max(0.0).sqrt();
    }

    /// Widens the estimates with what a descent Newton run actually used:
    /// surrogate eigenvalues, safeguarded mixed-block norms and `C_k`.
    pub fn absorb_run(&mut self, run: &SolveReport) -> Result<()> {
        for rec in &run.trajectory {
            if let Some(sys) = &rec.system {
                for h in [&sys.h1, &sys.h2] {
                    let (lo, hi) = spectral_bounds_sym(h)?;
                    self.lambda_min = self.lambda_min.min(lo);
                    self.lambda_max = self.lambda_max.max(hi);
                }
                self.c_h = self.c_h.max(sys.m1.spectral_norm()).max(sys.m2.spectral_norm());
            }
        }
        self.refresh_derived();
        for rec in &run.trajectory {
            if rec.system.is_some() {
                self.c_k = self.c_k.max(self.mu_min * (norm2(&rec.g1) + norm2(&rec.g2)));
            }
        }
        Ok(())
    }
}

/// Samples `samples` points of `region`. Draws are made sample by sample
/// from one seeded stream, so a larger `samples` with the same seed sees a
/// superset of points and never lowers `c_h`, `l` or `c_r`.
pub fn estimate_assumptions(
    problem: &NepProblem,
    region: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<AssumptionEstimates> {
    let (n1, n2) = (problem.n1(), problem.n2());
    if region.dim() != n1 + n2 {
        return Err(NepError::DimensionMismatch { expected: n1 + n2, got: region.dim() });
    }
    if samples < 2 {
        return Err(NepError::InvalidConfig("at least two samples are required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = AssumptionEstimates {
        c_h: 0.0,
        l: 0.0,
        c_r: 0.0,
        lambda_min: f64::INFINITY,
        lambda_max: 0.0,
        c_k: 0.0,
        mu_min: 0.0,
        mu_max: 0.0,
        samples,
        region: region.clone(),
    };
    for _ in 0..samples {
        let x = region.sample(&mut rng);
        let other = region.sample(&mut rng);
        let t: f64 = rng.random_range(0.1..=1.0);
        let d = unit_vector(&mut rng, n1 + n2);
        let (x1, x2) = x.split_at(n1);
        let (a1, a2) = other.split_at(n1);
        let (d1, d2) = d.split_at(n1);

        let h12 = problem.hess12_f1(x1, x2)?;
        let h21 = problem.hess21_f2(x1, x2)?;
        est.c_h = est.c_h.max(h12.spectral_norm()).max(h21.spectral_norm());

        let g1 = problem.grad1(x1, x2)?;
        let g2 = problem.grad2(x1, x2)?;
        est.l = est.l.max(lipschitz_ratio(&g1, &problem.grad1(a1, x2)?, x1, a1));
        est.l = est.l.max(lipschitz_ratio(&g2, &problem.grad2(x1, a2)?, x2, a2));

        let y2: Vec<f64> = x2.iter().zip(d2).map(|(v, s)| v + t * s).collect();
        let y1: Vec<f64> = x1.iter().zip(d1).map(|(v, s)| v + t * s).collect();
        est.c_r = est.c_r.max(remainder_ratio(&problem.grad1(x1, &y2)?, &g1, &h12, d2, t)?);
        est.c_r = est.c_r.max(remainder_ratio(&problem.grad2(&y1, x2)?, &g2, &h21, d1, t)?);

        for h in [problem.hess11(x1, x2)?, problem.hess22(x1, x2)?] {
            let s = modified_cholesky(&h, 1e-8)?;
            let (lo, hi) = spectral_bounds_sym(&s.matrix)?;
            est.lambda_min = est.lambda_min.min(lo);
            est.lambda_max = est.lambda_max.max(hi);
        }
    }
    est.refresh_derived();
    Ok(est)
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nv = norm2(&v);
        if nv > 1e-3 {
            return v.iter().map(|c| c / nv).collect();
        }
    }
}

fn lipschitz_ratio(ga: &[f64], gb: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let dx: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    let dg: Vec<f64> = ga.iter().zip(gb).map(|(p, q)| p - q).collect();
    let nx = norm2(&dx);
    if nx == 0.0 {
        0.0
    } else {
        norm2(&dg) / nx
    }
}

/// `||g(x + t d) - g(x) - t M d|| / (t^2 ||d||^2)` for the cross direction.
fn remainder_ratio(g_moved: &[f64], g: &[f64], mixed: &DenseMatrix, d: &[f64], t: f64) -> Result<f64> {
    let md = mixed.mul_vec(d)?;
    let r: Vec<f64> = (0..g.len()).map(|i| g_moved[i] - g[i] - t * md[i]).collect();
    let nd = norm2(d);
    Ok(if nd == 0.0 { 0.0 } else { norm2(&r) / (t * t * nd * nd) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaViolation {
    pub k: usize,
    pub check: String,
    /// Bound minus observed value; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// `(check name, iterates where its hypothesis held)`.
    pub checked: Vec<(String, usize)>,
    pub skipped: usize,
    pub violations: Vec<LemmaViolation>,
}

impl LemmaReport {
    fn record(&mut self, k: usize, name: &str, observed: f64, bound: f64) {
        match self.checked.iter_mut().find(|(n, _)| n == name) {
            Some((_, c)) => *c += 1,
            None => self.checked.push((name.to_string(), 1)),
        }
        // roundoff slack; the quantities are recomputed, not re-derived
        if observed > bound * (1.0 + 1e-9) + 1e-13 {
            self.violations.push(LemmaViolation { k, check: name.to_string(), margin: bound - observed });
        }
    }

    pub fn total_checked(&self) -> usize {
        self.checked.iter().map(|(_, c)| c).sum()
    }
}

/// `a / b` with `b = 0` read as an infinite bound.
fn ratio_bound(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

fn assembled(rec: &IterateRecord) -> Option<DenseMatrix> {
    let sys = rec.system.as_ref()?;
    let (n1, n2) = (sys.h1.rows(), sys.h2.rows());
    let t = rec.t;
    Some(DenseMatrix::from_fn(n1 + n2, n1 + n2, |i, j| match (i < n1, j < n1) {
        (true, true) => sys.h1[(i, j)],
        (true, false) => t * sys.m1[(i, j - n1)],
        (false, true) => t * sys.m2[(i - n1, j)],
        (false, false) => sys.h2[(i - n1, j - n1)],
    }))
}

/// Re-checks the block-matrix, direction and gradient-comparison bounds at
/// every iterate whose accepted `t` meets the relevant hypothesis.
///
/// Checks: `block-norm-upper` (always), `block-inverse-norm`, `direction-norm`,
/// `own-hessian-step-lower/upper`, `direction-vs-predicted-gradient-lower/upper` per player, and
/// `stationary-limit` on the final iterate when its direction is below `1e-10`.
pub fn verify_lemma_bounds(run: &SolveReport, est: &AssumptionEstimates) -> LemmaReport {
    let mut rep = LemmaReport::default();
    let (lmin, lmax, ch) = (est.lambda_min, est.lambda_max, est.c_h);
    let mu_min = 2f64.sqrt() / lmin;
    let mu_max = (lmax * lmax + 4.0 * lmax * ch + ch * ch).sqrt();
    let t_block = ratio_bound(lmin * lmin, 8.0 * lmax * ch);

    for rec in &run.trajectory {
        let (Some(sys), Some(a)) = (rec.system.as_ref(), assembled(rec)) else {
            rep.skipped += 1;
            continue;
        };
        let k = rec.k;
        let t = rec.t;
        let gn = [norm2(&rec.g1), norm2(&rec.g2)];
        let d: Vec<f64> = rec.d1.iter().chain(&rec.d2).copied().collect();
        let c_k = mu_min * (gn[0] + gn[1]);

        rep.record(k, "block-norm-upper", a.spectral_norm(), mu_max);
        if t > t_block {
            rep.skipped += 1;
            continue;
        }
        // ||A^{-1}|| <= mu_min  <=>  sigma_min(A) >= 1 / mu_min
        rep.record(k, "block-inverse-norm", 1.0 / a.min_singular_value(), mu_min);
        rep.record(k, "direction-norm", norm2(&d), c_k);

        let players = [
            (&sys.h1, &rec.d1, rec.certificate.as_ref().map(|c| &c.predicted_grad1)),
            (&sys.h2, &rec.d2, rec.certificate.as_ref().map(|c| &c.predicted_grad2)),
        ];
        for (i, (h, di, pred)) in players.into_iter().enumerate() {
            let tag = i + 1;
            if t <= ratio_bound(gn[i], 2.0 * ch * c_k) {
                let hd = norm2(&h.mul_vec(di).expect("snapshot shapes"));
                rep.record(k, &format!("own-hessian-step-lower-{tag}"), 0.5 * gn[i], hd);
                rep.record(k, &format!("own-hessian-step-upper-{tag}"), hd, 1.5 * gn[i]);
            }
            if let Some(p) = pred {
                if t <= ratio_bound(gn[i], 8.0 * ch * c_k) {
                    let (np, nd) = (norm2(p), norm2(di));
                    rep.record(k, &format!("direction-vs-predicted-gradient-lower-{tag}"), 2.0 / (3.0 * lmax) * np, nd);
                    rep.record(k, &format!("direction-vs-predicted-gradient-upper-{tag}"), nd, 2.0 / lmin * np);
                }
            }
        }
    }

    if let Some(last) = run.trajectory.last() {
        let dn = norm2(&last.d1).hypot(norm2(&last.d2));
        if last.system.is_some() && dn <= 1e-10 {
            let g = norm2(&last.g1).hypot(norm2(&last.g2));
            rep.record(last.k, "stationary-limit", g, mu_max * dn);
        }
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeMonitor {
    /// Smallest accepted step; 1 for runs without steps.
    pub t_min_observed: f64,
    /// The smallest step over the second half of the run equals the smallest
    /// over the whole run.
    pub bounded_away_flag: bool,
    /// `sum_k ||d2^k||` over the run.
    pub partial_sum_d2: f64,
}

pub fn monitor_stepsizes(run: &SolveReport) -> StepsizeMonitor {
    let ts: Vec<f64> = run.trajectory.iter().map(|r| r.t).collect();
    let min = |s: &[f64]| s.iter().copied().fold(1.0, f64::min);
    let t_min_observed = min(&ts);
    let tail = min(&ts[ts.len() / 2..]);
    StepsizeMonitor {
        t_min_observed,
        bounded_away_flag: tail == t_min_observed,
        partial_sum_d2: run.trajectory.iter().map(|r| norm2(&r.d2)).sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub problem: String,
    pub samples_used: usize,
    /// Points where an objective or gradient was not finite.
    pub samples_skipped: usize,
    /// Largest `||analytic - fd|| / max(1, ||analytic||)` per player.
    pub max_rel_error: [f64; 2],
}

/// Compares analytic gradients with central differences of the objectives
/// at `samples` points of `region`. Points where anything is non-finite
/// (facility collisions) are skipped and counted.
pub fn validate_derivatives(
    problem: &NepProblem,
    region: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<DerivativeCheck> {
    let n1 = problem.n1();
    if region.dim() != n1 + problem.n2() {
        return Err(NepError::DimensionMismatch { expected: n1 + problem.n2(), got: region.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DerivativeCheck {
        problem: problem.name().to_string(),
        samples_used: 0,
        samples_skipped: 0,
        max_rel_error: [0.0; 2],
    };
    for _ in 0..samples {
        let x = region.sample(&mut rng);
        let (x1, x2) = x.split_at(n1);
        let h = default_gradient_step(&x);
        let pairs = (|| -> Result<_> {
            Ok([
                (problem.grad1(x1, x2)?, problem.fd_grad1(x1, x2, h)?),
                (problem.grad2(x1, x2)?, problem.fd_grad2(x1, x2, h)?),
            ])
        })();
        let pairs = match pairs {
            Ok(p) => p,
            Err(NepError::NonFiniteEvaluation(_)) => {
                out.samples_skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for (i, (a, f)) in pairs.iter().enumerate() {
            let diff: Vec<f64> = a.iter().zip(f).map(|(p, q)| p - q).collect();
            out.max_rel_error[i] = out.max_rel_error[i].max(norm2(&diff) / norm2(a).max(1.0));
        }
        out.samples_used += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descent::{solve, SolveStatus, SolverConfig};
    use crate::suite::{make_example, random_quadratic_nep};

    #[test]
    fn example1_constants() {
        let p = make_example(1).unwrap();
        let est = estimate_assumptions(&p, &SampleBox::cube(2, 5.0).unwrap(), 50, 3).unwrap();
        assert_eq!(est.c_h, 1.0);
        assert!((est.l - 3.0).abs() < 1e-12, "{}", est.l);
        assert!(est.c_r <= 1e-8);
        assert_eq!((est.lambda_min, est.lambda_max), (2.0, 3.0));
    }

    #[test]
    fn quadratic_remainder_vanishes() {
        for seed in 0..5 {
            let q = random_quadratic_nep(3, 2, seed, 10.0).unwrap().to_problem("q");
            let est = estimate_assumptions(&q, &SampleBox::cube(5, 5.0).unwrap(), 30, seed).unwrap();
            assert!(est.c_r <= 1e-8, "{}", est.c_r);
        }
    }

    #[test]
    fn estimates_are_monotone_in_samples() {
        let p = make_example(5).unwrap();
        let b = SampleBox::cube(2, 2.0).unwrap();
        let small = estimate_assumptions(&p, &b, 10, 9).unwrap();
        let large = estimate_assumptions(&p, &b, 40, 9).unwrap();
        assert!(large.c_h >= small.c_h && large.l >= small.l && large.c_r >= small.c_r);
        assert!(large.lambda_min <= small.lambda_min && large.lambda_max >= small.lambda_max);
    }

    #[test]
    fn bad_estimate_inputs() {
        let p = make_example(1).unwrap();
        assert!(estimate_assumptions(&p, &SampleBox::cube(3, 1.0).unwrap(), 10, 0).is_err());
        assert!(estimate_assumptions(&p, &SampleBox::cube(2, 1.0).unwrap(), 1, 0).is_err());
        assert!(SampleBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn example1_certificates_and_stepsizes() {
        let p = make_example(1).unwrap();
        let run = solve(&p, &[-5.0], &[1.0], &SolverConfig::default()).unwrap();
        let mut est = estimate_assumptions(&p, &SampleBox::around_run(&run, 1.0).unwrap(), 20, 1).unwrap();
        est.absorb_run(&run).unwrap();
        let rep = verify_lemma_bounds(&run, &est);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        let m = monitor_stepsizes(&run);
        assert_eq!(m.t_min_observed, 1.0);
        assert!(m.bounded_away_flag);
    }

    #[test]
    fn gated_checks_skip_unit_steps() {
        // t = 1 exceeds lambda_min^2 / (8 lambda_max C_H) = 4 / 24 for example 1
        let p = make_example(1).unwrap();
        let run = solve(&p, &[-5.0], &[1.0], &SolverConfig::default()).unwrap();
        let mut est = estimate_assumptions(&p, &SampleBox::cube(2, 6.0).unwrap(), 10, 0).unwrap();
        est.absorb_run(&run).unwrap();
        let rep = verify_lemma_bounds(&run, &est);
        assert_eq!(rep.checked, vec![("block-norm-upper".to_string(), 1)]);
        assert_eq!(rep.skipped, 1);
    }

    #[test]
    fn zero_iterate_is_compliant() {
        use crate::descent::{IterateRecord, SystemSnapshot};
        let p = make_example(1).unwrap();
        let mut run = solve(&p, &[2.0], &[1.0], &SolverConfig::default()).unwrap();
        run.trajectory.push(IterateRecord {
            k: 0,
            x1: vec![2.0],
            x2: vec![1.0],
            g1: vec![0.0],
            g2: vec![0.0],
            f1: 0.0,
            f2: 0.0,
            t: 1.0,
            d1: vec![0.0],
            d2: vec![0.0],
            backtracks: 0,
            certificate: None,
            system: Some(SystemSnapshot {
                h1: DenseMatrix::scalar(2.0),
                h2: DenseMatrix::scalar(3.0),
                shift1: 0.0,
                shift2: 0.0,
                m1: DenseMatrix::scalar(0.0),
                m2: DenseMatrix::scalar(0.0),
            }),
        });
        let mut est = estimate_assumptions(&p, &SampleBox::cube(2, 3.0).unwrap(), 5, 0).unwrap();
        est.absorb_run(&run).unwrap();
        assert!(verify_lemma_bounds(&run, &est).violations.is_empty());
    }

    #[test]
    fn monitor_partial_sum() {
        let p = make_example(5).unwrap();
        let run = solve(&p, &[-5.0], &[1.0], &SolverConfig::default()).unwrap();
        assert_eq!(run.status, SolveStatus::Converged);
        let m = monitor_stepsizes(&run);
        let direct: f64 = run.trajectory.iter().map(|r| r.d2[0].abs()).sum();
        assert!((m.partial_sum_d2 - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn derivative_validation_examples() {
        let p = make_example(5).unwrap();
        let c = validate_derivatives(&p, &SampleBox::cube(2, 5.0).unwrap(), 50, 11).unwrap();
        assert_eq!(c.samples_used, 50);
        assert!(c.max_rel_error[0] <= 1e-5 && c.max_rel_error[1] <= 1e-5, "{:?}", c.max_rel_error);
    }
}
