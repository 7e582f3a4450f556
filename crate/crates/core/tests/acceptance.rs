//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nep_newton::baselines::{run_baseline, BaselineKind};
use nep_newton::descent::{solve, HessianStrategy, IterateRecord, SolveReport, SolveStatus, SolverConfig};
use nep_newton::diagnostics::{estimate_assumptions, validate_derivatives, verify_lemma_bounds, SampleBox};
use nep_newton::problem::NepProblem;
use nep_newton::study::{facility_config, multi_start_reports, seeded_starts, Outcome, SolverKind};
use nep_newton::suite::{
    make_example, make_facility, make_facility_2d, random_quadratic_nep, resolve_problem, FacilityInstance,
};

const FACILITY_SEED: u64 = 2024;
const QUADRATIC_SEED_BASE: u64 = 5400;

struct Run {
    problem: NepProblem,
    report: SolveReport,
    config: SolverConfig,
}

struct Outcomes {
    lines: Vec<(bool, String)>,
}

impl Outcomes {
    fn record(&mut self, id: usize, name: &str, failures: Vec<String>, summary: String) {
        let ok = failures.is_empty();
        let detail = if ok { summary } else { format!("{summary}; {}", failures.join("; ")) };
        let line = format!("{} criterion {id} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((ok, line));
    }
}

fn near(x1: &[f64], x2: &[f64], target: (f64, f64), tol: f64) -> bool {
    (x1[0] - target.0).abs() <= tol && (x2[0] - target.1).abs() <= tol
}

fn reference_start() -> (Vec<f64>, Vec<f64>) {
    (vec![-5.0], vec![1.0])
}

fn criterion1(out: &mut Outcomes, runs: &mut Vec<Run>) {
    let mut fails = Vec::new();
    let cases = [(1, (2.0, 1.0)), (2, (4.0 / 7.0, 33.0 / 7.0)), (4, (0.7, 0.6))];
    let mut parts = Vec::new();
    for (id, target) in cases {
        let p = make_example(id).unwrap();
        let (a, b) = reference_start();
        let c = SolverConfig::default();
        let r = solve(&p, &a, &b, &c).unwrap();
        let halvings: usize = r
            .trajectory
            .iter()
            .map(|t| t.certificate.as_ref().map_or(0, |c| c.backtracks + c.singular_halvings))
            .sum();
        if r.status != SolveStatus::Converged
            || r.iterations != 1
            || halvings != 0
            || r.final_residual > 1e-4
            || !near(&r.final_x1, &r.final_x2, target, 1e-3)
        {
            fails.push(format!(
                "examp{id}: {:?} after {} it, halvings {halvings}, x=({}, {}), |g|={:e}",
                r.status, r.iterations, r.final_x1[0], r.final_x2[0], r.final_residual
            ));
        }
        parts.push(format!("examp{id} -> ({:.5}, {:.5}) in {} it", r.final_x1[0], r.final_x2[0], r.iterations));
        runs.push(Run { problem: p, report: r, config: c });
    }
    out.record(1, "quadratic rows converge in one unit step", fails, parts.join(", "));
}

fn criterion2(out: &mut Outcomes, runs: &mut Vec<Run>) {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    let (a, b) = reference_start();
    let c = SolverConfig::default();

    let p3 = make_example(3).unwrap();
    let r = solve(&p3, &a, &b, &c).unwrap();
    if r.status != SolveStatus::Diverged {
        fails.push(format!("descent newton on examp3 ended {:?}", r.status));
    }
    parts.push(format!("examp3/descent {:?}", r.status));
    runs.push(Run { problem: p3.clone(), report: r, config: c.clone() });

    let p2 = make_example(2).unwrap();
    let r = run_baseline(BaselineKind::ExactJacobi, &p2, &a, &b, &c).unwrap();
    if r.status != SolveStatus::Diverged {
        fails.push(format!("jacobi on examp2 ended {:?}", r.status));
    }
    parts.push(format!("examp2/jacobi {:?}", r.status));

    let p4 = make_example(4).unwrap();
    let r = run_baseline(BaselineKind::ExactJacobi, &p4, &a, &b, &c).unwrap();
    if r.status != SolveStatus::InnerSolveFailure {
        fails.push(format!("jacobi on examp4 ended {:?}", r.status));
    }
    parts.push(format!("examp4/jacobi {:?}", r.status));

    let r = run_baseline(BaselineKind::NewtonKkt, &p3, &a, &b, &c).unwrap();
    if r.iterations != 1 || !near(&r.final_x1, &r.final_x2, (3.2, -1.4), 1e-3) {
        fails.push(format!(
            "newton on examp3 ended at ({}, {}) after {} it",
            r.final_x1[0], r.final_x2[0], r.iterations
        ));
    }
    parts.push(format!("examp3/newton ({:.4}, {:.4})", r.final_x1[0], r.final_x2[0]));

    let p5 = make_example(5).unwrap();
    let r = run_baseline(BaselineKind::NewtonKkt, &p5, &a, &b, &c).unwrap();
    if !near(&r.final_x1, &r.final_x2, (-1.0, -1.0), 1e-3) {
        fails.push(format!(
            "newton on examp5 ended {:?} at ({:e}, {:e}) after {} it, expected (-1, -1)",
            r.status, r.final_x1[0], r.final_x2[0], r.iterations
        ));
    }
    parts.push(format!("examp5/newton ({:.4}, {:.4})", r.final_x1[0], r.final_x2[0]));
    out.record(2, "divergent and undefined rows", fails, parts.join(", "));
}

fn criterion3(out: &mut Outcomes, runs: &mut Vec<Run>) {
    let p = make_example(5).unwrap();
    let (a, b) = reference_start();
    let c = SolverConfig::default();
    let r = solve(&p, &a, &b, &c).unwrap();
    let t_min = r.min_accepted_t().unwrap_or(1.0);
    let mut fails = Vec::new();
    if r.status != SolveStatus::Converged || r.final_residual > 1e-4 {
        fails.push(format!("{:?} with |g|={:e}", r.status, r.final_residual));
    }
    if !near(&r.final_x1, &r.final_x2, (0.0, 0.0), 1e-3) {
        fails.push(format!("final point ({:e}, {:e})", r.final_x1[0], r.final_x2[0]));
    }
    if !(5..=13).contains(&r.iterations) {
        fails.push(format!("{} iterations", r.iterations));
    }
    if t_min < 0.5 {
        let ts: Vec<String> = r.trajectory.iter().map(|x| format!("{}", x.t)).collect();
        fails.push(format!("minimum accepted t {t_min} < 1/2 (steps: {})", ts.join(", ")));
    }
    let summary = format!(
        "({:.2e}, {:.2e}), |g|={:.2e}, {} it, min t {t_min}",
        r.final_x1[0], r.final_x2[0], r.final_residual, r.iterations
    );
    runs.push(Run { problem: p, report: r, config: c });
    out.record(3, "cubic example", fails, summary);
}

fn criterion4(out: &mut Outcomes, runs: &mut Vec<Run>) {
    let mut fails = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let (n1, n2) = (1 + (i % 5) as usize, 1 + ((i / 5) % 5) as usize);
        let q = random_quadratic_nep(n1, n2, QUADRATIC_SEED_BASE + i, 10.0).unwrap();
        let p = q.to_problem(format!("quadratic:{}:{n1}x{n2}", QUADRATIC_SEED_BASE + i));
        let (a1, a2) = (q.a1.clone(), q.a2.clone());
        let c = SolverConfig {
            hessian_strategy: HessianStrategy::UserSupplied(Arc::new(move |_, _, _| (a1.clone(), a2.clone()))),
            ..SolverConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let x1: Vec<f64> = (0..n1).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x2: Vec<f64> = (0..n2).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r = solve(&p, &x1, &x2, &c).unwrap();
        let first = r.trajectory.first();
        let clean = first.is_some_and(|rec| {
            let cert = rec.certificate.as_ref().unwrap();
            rec.t == 1.0 && cert.backtracks == 0 && cert.singular_halvings == 0
        });
        worst = worst.max(r.final_residual);
        if r.iterations != 1 || !clean || r.final_residual > 1e-8 {
            fails.push(format!(
                "{}: {} it, t={:?}, |g|={:e}",
                p.name(),
                r.iterations,
                first.map(|f| f.t),
                r.final_residual
            ));
        }
        runs.push(Run { problem: p, report: r, config: c });
    }
    out.record(
        4,
        "strictly convex quadratics solved in one step",
        fails,
        format!("50 instances, worst post-step residual {worst:.2e}"),
    );
}

// Independent re-evaluation of the six acceptance inequalities.
fn recheck(p: &NepProblem, rec: &IterateRecord, c: &SolverConfig) -> Result<[bool; 6], String> {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ip = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let t = rec.t;
    let y1: Vec<f64> = rec.x1.iter().zip(&rec.d1).map(|(x, d)| x + t * d).collect();
    let y2: Vec<f64> = rec.x2.iter().zip(&rec.d2).map(|(x, d)| x + t * d).collect();
    let e = |err: nep_newton::NepError| err.to_string();
    let q1 = p.grad1(&rec.x1, &y2).map_err(e)?;
    let q2 = p.grad2(&y1, &rec.x2).map_err(e)?;
    let f1_new = p.f1(&y1, &y2).map_err(e)?;
    let f1_ref = p.f1(&rec.x1, &y2).map_err(e)?;
    let f2_new = p.f2(&y1, &y2).map_err(e)?;
    let f2_ref = p.f2(&y1, &rec.x2).map_err(e)?;
    Ok([
        f1_new <= f1_ref + c.alpha * t * ip(&q1, &rec.d1),
        ip(&q1, &rec.d1) <= -c.theta * n(&q1) * n(&rec.d1),
        c.gamma * n(&q1) * n(&rec.g1) <= n(&rec.d1) * n(&rec.g1),
        f2_new <= f2_ref + c.alpha * t * ip(&q2, &rec.d2),
        ip(&q2, &rec.d2) <= -c.theta * n(&q2) * n(&rec.d2),
        c.gamma * n(&q2) * n(&rec.g2) <= n(&rec.d2) * n(&rec.g2),
    ])
}

fn criterion5(out: &mut Outcomes, runs: &[Run]) {
    let mut fails = Vec::new();
    let mut checked = 0;
    for run in runs {
        for rec in &run.report.trajectory {
            let Some(cert) = &rec.certificate else { continue };
            checked += 1;
            match recheck(&run.problem, rec, &run.config) {
                Ok(ch) if ch.iter().all(|&b| b) && cert.all_hold() => {}
                Ok(ch) => fails.push(format!("{} k={}: {:?}", run.problem.name(), rec.k, ch)),
                Err(e) => fails.push(format!("{} k={}: {e}", run.problem.name(), rec.k)),
            }
        }
    }
    if checked == 0 {
        fails.push("no accepted iterates to check".into());
    }
    out.record(
        5,
        "line-search certificates re-verified",
        fails,
        format!("{checked} accepted iterates over {} runs", runs.len()),
    );
}

fn criterion6(out: &mut Outcomes, runs: &[Run]) {
    let mut fails = Vec::new();
    let (mut checked, mut skipped) = (0, 0);
    for (i, run) in runs.iter().enumerate() {
        if run.report.trajectory.is_empty() {
            continue;
        }
        let region = SampleBox::around_run(&run.report, 1.0).unwrap();
        let mut est = match estimate_assumptions(&run.problem, &region, 100, i as u64) {
            Ok(e) => e,
            Err(e) => {
                fails.push(format!("{}: estimation failed: {e}", run.problem.name()));
                continue;
            }
        };
        est.absorb_run(&run.report).unwrap();
        let rep = verify_lemma_bounds(&run.report, &est);
        checked += rep.total_checked();
        skipped += rep.skipped;
        for v in rep.violations {
            fails.push(format!("{} k={} {} margin {:e}", run.problem.name(), v.k, v.check, v.margin));
        }
    }
    out.record(
        6,
        "lemma certificates",
        fails,
        format!("{checked} hypothesis-satisfying checks, {skipped} iterates outside the gated hypotheses"),
    );
}

fn criterion7(out: &mut Outcomes, runs: &mut Vec<Run>) {
    let mut fails = Vec::new();
    let p = make_facility_2d();
    let cfg = facility_config();
    let starts = seeded_starts(2, 2, 100, FACILITY_SEED, -2.0, 2.0);
    let dn = multi_start_reports(&p, &starts, SolverKind::DescentNewton, &cfg).unwrap();
    let nk = multi_start_reports(&p, &starts, SolverKind::NewtonKkt, &cfg).unwrap();
    let eq = |rs: &[SolveReport]| rs.iter().filter(|r| Outcome::of(r) == Outcome::Equilibrium).count();
    let (dn_eq, nk_eq) = (eq(&dn), eq(&nk));
    if dn_eq < 90 {
        fails.push(format!("descent newton found {dn_eq} equilibria"));
    }
    if nk_eq >= dn_eq {
        fails.push(format!("newton found {nk_eq} equilibria, not fewer than {dn_eq}"));
    }
    for r in dn {
        runs.push(Run { problem: p.clone(), report: r, config: cfg.clone() });
    }

    let p1 = make_facility(&FacilityInstance::line_three_clients()).unwrap();
    let c1 = SolverConfig::default();
    let r = solve(&p1, &[2.0], &[1.0], &c1).unwrap();
    if r.status != SolveStatus::Converged || !near(&r.final_x1, &r.final_x2, (1.901, 0.915), 1e-2) {
        fails.push(format!(
            "1D run ended {:?} at ({:.4}, {:.4}) with |g|={:.1e}, expected (1.901, 0.915)",
            r.status, r.final_x1[0], r.final_x2[0], r.final_residual
        ));
    }
    let summary = format!(
        "2D: descent newton {dn_eq}/100 equilibria, newton {nk_eq}/100; 1D from (2, 1) -> ({:.4}, {:.4})",
        r.final_x1[0], r.final_x2[0]
    );
    runs.push(Run { problem: p1, report: r, config: c1 });
    out.record(7, "facility location", fails, summary);
}

fn criterion8(out: &mut Outcomes) {
    let ids = [
        "examp1",
        "examp2",
        "examp3",
        "examp4",
        "examp5",
        "nodescent",
        "facility1d",
        "facility2d",
        "quadratic:7:2x3",
        "quadratic:11:5x1",
    ];
    let mut fails = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, id) in ids.iter().enumerate() {
        let p = resolve_problem(id).unwrap();
        let region = SampleBox::cube(p.n1() + p.n2(), 5.0).unwrap();
        let chk = validate_derivatives(&p, &region, 50, 800 + i as u64).unwrap();
        let err = chk.max_rel_error[0].max(chk.max_rel_error[1]);
        worst = worst.max(err);
        if err > 1e-5 || chk.samples_used + chk.samples_skipped != 50 || chk.samples_used == 0 {
            fails.push(format!("{id}: max relative error {err:e}, {} points used", chk.samples_used));
        }
        if chk.samples_skipped > 0 && !id.starts_with("facility") {
            fails.push(format!("{id}: {} non-finite sample points", chk.samples_skipped));
        }
    }
    out.record(
        8,
        "analytic gradients match finite differences",
        fails,
        format!("{} problems x 50 points, worst relative error {worst:.2e}", ids.len()),
    );
}

fn main() -> ExitCode {
    let mut out = Outcomes { lines: Vec::new() };
    let mut runs = Vec::new();
    criterion1(&mut out, &mut runs);
    criterion2(&mut out, &mut runs);
    criterion3(&mut out, &mut runs);
    criterion4(&mut out, &mut runs);
    let lemma_runs = runs.len();
    criterion7(&mut out, &mut runs);
    criterion5(&mut out, &runs);
    criterion6(&mut out, &runs[..lemma_runs]);
    criterion8(&mut out);

    out.lines.sort_by_key(|(_, l)| l.split_whitespace().nth(2).and_then(|n| n.parse::<usize>().ok()));
    for (_, line) in &out.lines {
        println!("{line}");
    }
    let failed = out.lines.iter().filter(|(ok, _)| !ok).count();
    println!("acceptance: {} of {} criteria passed", out.lines.len() - failed, out.lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
