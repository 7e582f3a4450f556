use std::path::Path;
use std::process::Command;

use nep_bench::{
    cmd_facility_bench, cmd_solve, csv_body, parse_trajectory_csv, trajectory_rows, RunSpec, StartSpec,
};
use nep_newton::descent::{SolveStatus, SolverConfig};
use nep_newton::study::{facility_config, SolverKind};
use nep_newton::suite::resolve_problem;

fn bench(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_nep-bench"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("NEP_OUT_DIR")
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn spec(problem: &str, solver: SolverKind, x0: &str, out: &Path) -> RunSpec {
    RunSpec {
        problem: problem.into(),
        solver,
        x0: StartSpec::parse(x0).unwrap(),
        seed: 0,
        config: SolverConfig::default(),
        out_dir: out.to_path_buf(),
    }
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(bench(&["solve", "--problem", "examp1", "--x0", "paper"], d).0, 0);
    assert_eq!(bench(&["solve", "--problem", "examp3", "--x0", "paper"], d).0, 2);
    assert_eq!(bench(&["solve", "--problem", "examp5", "--max-iter", "2"], d).0, 3);
    assert_eq!(bench(&["solve", "--problem", "examp4", "--solver", "exact-jacobi"], d).0, 5);
    assert_eq!(bench(&["solve", "--problem", "examp9"], d).0, 65);
    assert_eq!(bench(&["solve", "--problem", "quadratic:x:2x2"], d).0, 65);
    assert_eq!(bench(&["solve", "--problem", "examp1", "--x0", "1,2,3"], d).0, 64);
    assert_eq!(bench(&["solve", "--problem", "examp1", "--x0", "a,b"], d).0, 64);
    assert_eq!(bench(&["solve", "--problem", "examp1", "--alpha", "2"], d).0, 64);
    assert_eq!(bench(&["solve", "--problem", "examp1", "--solver", "yuan"], d).0, 64);
    assert_eq!(bench(&["solve"], d).0, 64);
}

#[test]
fn line_search_failure_exit_code() {
    // examp5 needs t = 1/256 at one step, so a tight t_min is never met; the
    // CLI does not expose t_min, so go through the library
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec("examp5", SolverKind::DescentNewton, "paper", dir.path());
    s.config.t_min = 0.9;
    let out = cmd_solve(&s).unwrap();
    assert_eq!(out.report.status, SolveStatus::LineSearchFailure);
    assert_eq!(out.exit_code(), 4);
}

#[test]
fn solve_from_solution_takes_no_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_solve(&spec("examp1", SolverKind::DescentNewton, "2,1", dir.path())).unwrap();
    assert_eq!((out.report.status, out.report.iterations), (SolveStatus::Converged, 0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.json_path).unwrap()).unwrap();
    assert_eq!(json["status"], "Converged");
    assert_eq!(json["final_x1"][0], 2.0);
}

#[test]
fn trajectory_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for (problem, solver) in [
        ("examp5", SolverKind::DescentNewton),
        ("facility2d", SolverKind::DescentNewton),
        ("quadratic:3:3x2", SolverKind::NewtonKkt),
        ("examp1", SolverKind::ExactJacobi),
    ] {
        let out = cmd_solve(&spec(problem, solver, "paper", dir.path())).unwrap();
        let p = resolve_problem(problem).unwrap();
        let text = std::fs::read_to_string(&out.csv_path).unwrap();
        let parsed = parse_trajectory_csv(&text, p.n1(), p.n2()).unwrap();
        let expected = trajectory_rows(&p, &out.report);
        assert_eq!(parsed.len(), out.report.trajectory.len() + 1);
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        for (a, b) in parsed.iter().zip(&expected) {
            assert_eq!((a.k, a.backtracks), (b.k, b.backtracks));
            let xs = |r: &nep_bench::TrajectoryRow| -> Vec<f64> {
                r.x1.iter().chain(&r.x2).copied().chain([r.g1_norm, r.g2_norm, r.f1, r.f2, r.t.unwrap_or(-1.0)]).collect()
            };
            for (u, v) in xs(a).into_iter().zip(xs(b)) {
                assert!(close(u, v), "{problem}: {u} vs {v}");
            }
        }
        for (a, rec) in parsed.iter().zip(&out.report.trajectory) {
            assert_eq!(a.x1, rec.x1);
            assert_eq!(a.x2, rec.x2);
        }
    }
}

#[test]
fn csv_bodies_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        assert_eq!(bench(&["solve", "--problem", "facility2d", "--seed", "4"], d).0, 0);
        assert_eq!(bench(&["table1"], d).0, 0);
        assert_eq!(bench(&["facility-bench", "--runs", "12", "--seed", "9"], d).0, 0);
    }
    for f in ["facility2d_descent-newton_trajectory.csv", "table1.csv", "facility_histogram.csv", "facility_runs.csv"] {
        let x = std::fs::read_to_string(a.path().join(f)).unwrap();
        let y = std::fs::read_to_string(b.path().join(f)).unwrap();
        assert!(x.starts_with("# "), "{f}");
        assert_eq!(csv_body(&x), csv_body(&y), "{f}");
        assert!(!csv_body(&x).contains('#'));
    }
}

#[test]
fn table1_markers() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = bench(&["table1"], dir.path());
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let cell = |p: &str, s: &str| {
        csv_body(&text)
            .lines()
            .find(|l| l.starts_with(&format!("{p},{s},")))
            .map(String::from)
            .unwrap()
    };
    assert!(cell("examp2", "exact-jacobi").contains(",divergence,"));
    assert!(cell("examp3", "descent-newton").contains(",divergence,"));
    assert!(cell("examp4", "exact-jacobi").contains(",undefined,"));
    assert!(cell("examp1", "descent-newton").contains("\"(2.0000, 1.0000)\""));
    assert_eq!(csv_body(&text).lines().count(), 16);
    assert!(stdout.contains("examp5"));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nep-bench"))
        .args(["solve", "--problem", "examp2"])
        .env("NEP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("examp2_descent-newton.json").exists());
}

#[test]
fn facility_bench_single_start_at_equilibrium_basin() {
    // find a seed whose single start lies near the known equilibrium
    let target = [0.014, 0.639, -0.264, -0.528];
    let seed = (0..5000u64)
        .find(|&s| {
            let st = nep_newton::study::seeded_starts(2, 2, 1, s, -2.0, 2.0);
            let x: Vec<f64> = st[0].0.iter().chain(&st[0].1).copied().collect();
            x.iter().zip(target).all(|(a, b)| (a - b).abs() < 0.5)
        })
        .expect("some seed starts near the equilibrium");
    let dir = tempfile::tempdir().unwrap();
    let b = cmd_facility_bench(1, seed, &[SolverKind::DescentNewton], &facility_config(), dir.path()).unwrap();
    assert_eq!(b.summary[0].equilibrium, 1);
    assert!(cmd_facility_bench(0, 0, &[SolverKind::DescentNewton], &facility_config(), dir.path()).is_err());
}

#[test]
fn diagnose_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = bench(&["diagnose", "--problem", "examp1"], dir.path());
    assert_eq!(code, 0);
    let read = |f: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(f)).unwrap()).unwrap()
    };
    let v = read("examp1_descent-newton_diagnose.json");
    assert_eq!(v["lemma"]["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["stepsizes"]["t_min_observed"], 1.0);

    assert_eq!(bench(&["diagnose", "--problem", "quadratic:7:2x2"], dir.path()).0, 0);
    let v = read("quadratic_7_2x2_descent-newton_diagnose.json");
    assert_eq!(v["lemma"]["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["one_step_convergence"], true);

    assert_eq!(bench(&["diagnose", "--problem", "examp5"], dir.path()).0, 0);
    let v = read("examp5_descent-newton_diagnose.json");
    assert!(v["stepsizes"]["partial_sum_d2"].as_f64().unwrap() > 0.0);
}
