//! Library side of the `nep-bench` command line tool.
//!
//! Every command writes plot-ready CSV (one `#` comment line carrying the
//! timestamp, then a deterministic body) and, where useful, a JSON report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use nep_newton::descent::{SolveReport, SolveStatus, SolverConfig};
use nep_newton::diagnostics::{
    estimate_assumptions, monitor_stepsizes, verify_lemma_bounds, AssumptionEstimates, LemmaReport, SampleBox,
    StepsizeMonitor,
};
use nep_newton::linalg::norm2;
use nep_newton::problem::NepProblem;
use nep_newton::study::{multi_start_study, seeded_starts, summarize, OutcomeSummary, SolverKind, StartResult};
use nep_newton::suite::{default_start, make_example, make_facility_2d, resolve_problem};
use nep_newton::NepError;

pub const EXIT_USAGE: i32 = 64;
pub const EXIT_UNKNOWN_PROBLEM: i32 = 65;
pub const EXIT_IO: i32 = 74;
pub const OUT_DIR_ENV: &str = "NEP_OUT_DIR";

/// Start region of the facility benchmark, per coordinate.
pub const FACILITY_START_BOX: (f64, f64) = (-2.0, 2.0);

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error(transparent)]
    Solver(NepError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<NepError> for CliError {
    fn from(e: NepError) -> Self {
        match e {
            NepError::UnknownProblem(id) => Self::UnknownProblem(id),
            NepError::InvalidConfig(m) => Self::Usage(m),
            NepError::DimensionMismatch { expected, got } => {
                Self::Usage(format!("expected a vector of length {expected}, got {got}"))
            }
            e => Self::Solver(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::UnknownProblem(_) => EXIT_UNKNOWN_PROBLEM,
            Self::Io { .. } | Self::Csv(_) | Self::Json(_) => EXIT_IO,
            Self::Solver(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Exit status for a finished solve.
pub fn status_exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::Diverged => 2,
        SolveStatus::MaxIterations => 3,
        SolveStatus::LineSearchFailure => 4,
        SolveStatus::InnerSolveFailure | SolveStatus::SingularSystem => 5,
    }
}

/// Starting point as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    /// The problem's built-in reference start, see [`default_start`].
    Reference,
    Explicit(Vec<f64>),
}

impl StartSpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        let s = s.trim();
        if s == "paper" || s == "default" {
            return Ok(Self::Reference);
        }
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad --x0 component '{v}'"))))
            .collect::<CliResult<Vec<f64>>>()
            .map(Self::Explicit)
    }

    pub fn resolve(&self, problem: &NepProblem) -> CliResult<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Reference => Ok(default_start(problem)),
            Self::Explicit(v) => {
                let (n1, n2) = (problem.n1(), problem.n2());
                if v.len() != n1 + n2 {
                    return Err(CliError::Usage(format!(
                        "--x0 has {} components but {} needs {}",
                        v.len(),
                        problem.name(),
                        n1 + n2
                    )));
                }
                Ok((v[..n1].to_vec(), v[n1..].to_vec()))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub problem: String,
    pub solver: SolverKind,
    pub x0: StartSpec,
    pub seed: u64,
    pub config: SolverConfig,
    pub out_dir: PathBuf,
}

/// `--out-dir`, then `$NEP_OUT_DIR`, then `./nep-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nep-out"))
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// CSV text: a `#` comment line with the command and timestamp, then the
/// body. Only the first line varies between identical invocations.
fn csv_document(command: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<String> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is utf-8");
    Ok(format!("# nep-bench {command} generated_unix={stamp}\n{body}"))
}

/// Strips the leading comment line, leaving the deterministic part.
pub fn csv_body(text: &str) -> &str {
    match text.strip_prefix('#') {
        Some(rest) => rest.split_once('\n').map_or("", |(_, b)| b),
        None => text,
    }
}

/// One trajectory CSV row. The last row holds the final point and leaves
/// `t` and `backtracks` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub g1_norm: f64,
    pub g2_norm: f64,
    pub t: Option<f64>,
    pub backtracks: Option<usize>,
    pub f1: f64,
    pub f2: f64,
}

fn trajectory_header(n1: usize, n2: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((0..n1).map(|i| format!("x1_{i}")));
    h.extend((0..n2).map(|i| format!("x2_{i}")));
    h.extend(["g1_norm", "g2_norm", "t", "backtracks", "f1", "f2"].map(String::from));
    h
}

pub fn trajectory_rows(problem: &NepProblem, report: &SolveReport) -> Vec<TrajectoryRow> {
    let mut rows: Vec<TrajectoryRow> = report
        .trajectory
        .iter()
        .map(|r| TrajectoryRow {
            k: r.k,
            x1: r.x1.clone(),
            x2: r.x2.clone(),
            g1_norm: norm2(&r.g1),
            g2_norm: norm2(&r.g2),
            t: Some(r.t),
            backtracks: Some(r.backtracks),
            f1: r.f1,
            f2: r.f2,
        })
        .collect();
    let (x1, x2) = (&report.final_x1, &report.final_x2);
    let gn = |g: nep_newton::Result<Vec<f64>>| g.map_or(f64::NAN, |g| norm2(&g));
    rows.push(TrajectoryRow {
        k: report.iterations,
        x1: x1.clone(),
        x2: x2.clone(),
        g1_norm: gn(problem.grad1(x1, x2)),
        g2_norm: gn(problem.grad2(x1, x2)),
        t: None,
        backtracks: None,
        f1: problem.f1(x1, x2).unwrap_or(f64::NAN),
        f2: problem.f2(x1, x2).unwrap_or(f64::NAN),
    });
    rows
}

pub fn trajectory_csv(problem: &NepProblem, report: &SolveReport) -> CliResult<String> {
    let rows: Vec<Vec<String>> = trajectory_rows(problem, report)
        .into_iter()
        .map(|r| {
            let mut v = vec![r.k.to_string()];
            v.extend(r.x1.iter().chain(&r.x2).map(|&x| num(x)));
            v.push(num(r.g1_norm));
            v.push(num(r.g2_norm));
            v.push(r.t.map(num).unwrap_or_default());
            v.push(r.backtracks.map(|b| b.to_string()).unwrap_or_default());
            v.push(num(r.f1));
            v.push(num(r.f2));
            v
        })
        .collect();
    csv_document("solve", &trajectory_header(problem.n1(), problem.n2()), &rows)
}

pub fn parse_trajectory_csv(text: &str, n1: usize, n2: usize) -> CliResult<Vec<TrajectoryRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let expected = trajectory_header(n1, n2);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(CliError::Usage(format!("unexpected trajectory header {header:?}")));
    }
    let bad = |what: &str| CliError::Usage(format!("malformed trajectory field {what}"));
    let f = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let col = |i: usize| rec.get(i).ok_or_else(|| bad("(missing)"));
        let xs = (1..=n1 + n2).map(|i| f(col(i)?)).collect::<CliResult<Vec<f64>>>()?;
        let base = 1 + n1 + n2;
        let t = col(base + 2)?;
        let b = col(base + 3)?;
        out.push(TrajectoryRow {
            k: col(0)?.parse().map_err(|_| bad(col(0).unwrap_or("")))?,
            x1: xs[..n1].to_vec(),
            x2: xs[n1..].to_vec(),
            g1_norm: f(col(base)?)?,
            g2_norm: f(col(base + 1)?)?,
            t: if t.is_empty() { None } else { Some(f(t)?) },
            backtracks: if b.is_empty() { None } else { Some(b.parse().map_err(|_| bad(b))?) },
            f1: f(col(base + 4)?)?,
            f2: f(col(base + 5)?)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub report: SolveReport,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

impl SolveOutput {
    pub fn exit_code(&self) -> i32 {
        status_exit_code(self.report.status)
    }
}

fn run_spec(spec: &RunSpec) -> CliResult<(NepProblem, SolveReport)> {
    let problem = resolve_problem(&spec.problem)?;
    let (x1, x2) = spec.x0.resolve(&problem)?;
    let report = spec.solver.run(&problem, &x1, &x2, &spec.config)?;
    Ok((problem, report))
}

/// Solves once and writes `<problem>_<solver>.json` and
/// `<problem>_<solver>_trajectory.csv` into the output directory.
pub fn cmd_solve(spec: &RunSpec) -> CliResult<SolveOutput> {
    let (problem, report) = run_spec(spec)?;
    let stem = format!("{}_{}", file_stem(&spec.problem), spec.solver.label());
    let json_path = spec.out_dir.join(format!("{stem}.json"));
    let csv_path = spec.out_dir.join(format!("{stem}_trajectory.csv"));
    write_file(&json_path, &serde_json::to_string_pretty(&report)?)?;
    write_file(&csv_path, &trajectory_csv(&problem, &report)?)?;
    Ok(SolveOutput { report, json_path, csv_path })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub problem: String,
    pub solver: SolverKind,
    pub status: SolveStatus,
    /// `divergence`, `undefined`, another failure label, or the final point.
    pub cell: String,
    pub final_x1: f64,
    pub final_x2: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn cell_text(report: &SolveReport) -> String {
    match report.status {
        SolveStatus::Diverged => "divergence".into(),
        SolveStatus::InnerSolveFailure | SolveStatus::SingularSystem => "undefined".into(),
        SolveStatus::Converged => format!("({:.4}, {:.4})", report.final_x1[0], report.final_x2[0]),
        s => s.label().into(),
    }
}

/// Runs the three solvers on the five scalar examples from `(-5, 1)`.
pub fn table1_cells(config: &SolverConfig) -> CliResult<Vec<TableCell>> {
    let mut cells = Vec::new();
    for id in 1..=5 {
        let p = make_example(id)?;
        for solver in SolverKind::ALL {
            let r = solver.run(&p, &[-5.0], &[1.0], config)?;
            cells.push(TableCell {
                problem: p.name().to_string(),
                solver,
                status: r.status,
                cell: cell_text(&r),
                final_x1: r.final_x1[0],
                final_x2: r.final_x2[0],
                residual: r.final_residual,
                iterations: r.iterations,
            });
        }
    }
    Ok(cells)
}

pub fn table1_csv(cells: &[TableCell]) -> CliResult<String> {
    let header = ["problem", "solver", "status", "cell", "x1", "x2", "residual", "iterations"].map(String::from);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.problem.clone(),
                c.solver.label().into(),
                c.status.label().into(),
                c.cell.clone(),
                num(c.final_x1),
                num(c.final_x2),
                num(c.residual),
                c.iterations.to_string(),
            ]
        })
        .collect();
    csv_document("table1", &header, &rows)
}

pub fn format_table1(cells: &[TableCell]) -> String {
    let mut s = format!("{:<8}", "problem");
    for k in SolverKind::ALL {
        let _ = write!(s, " | {:<40}", k.label());
    }
    s.push('\n');
    for row in cells.chunks(SolverKind::ALL.len()) {
        let _ = write!(s, "{:<8}", row[0].problem);
        for c in row {
            let text = format!("{} |g|={:.1e} k={}", c.cell, c.residual, c.iterations);
            let _ = write!(s, " | {text:<40}");
        }
        s.push('\n');
    }
    s
}

pub fn cmd_table1(config: &SolverConfig, out_dir: &Path) -> CliResult<(Vec<TableCell>, PathBuf)> {
    let cells = table1_cells(config)?;
    let path = out_dir.join("table1.csv");
    write_file(&path, &table1_csv(&cells)?)?;
    Ok((cells, path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilityBench {
    pub results: Vec<StartResult>,
    pub summary: Vec<OutcomeSummary>,
    pub histogram_path: PathBuf,
    pub runs_path: PathBuf,
}

/// Multi-start study on the 2D facility game from seeded uniform starts in
/// [`FACILITY_START_BOX`]. Writes a per-solver histogram and per-run CSV.
pub fn cmd_facility_bench(
    runs: usize,
    seed: u64,
    solvers: &[SolverKind],
    config: &SolverConfig,
    out_dir: &Path,
) -> CliResult<FacilityBench> {
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let p = make_facility_2d();
    let starts = seeded_starts(p.n1(), p.n2(), runs, seed, FACILITY_START_BOX.0, FACILITY_START_BOX.1);
    let results = multi_start_study(&p, &starts, solvers, config)?;
    let summary = summarize(&results, solvers);

    let header =
        ["solver", "runs", "equilibrium", "non_equilibrium_stationary", "failed", "mean_iterations_converged"]
            .map(String::from);
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.solver.label().into(),
                s.runs.to_string(),
                s.equilibrium.to_string(),
                s.non_equilibrium_stationary.to_string(),
                s.failed.to_string(),
                s.mean_iterations_converged.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    let histogram_path = out_dir.join("facility_histogram.csv");
    write_file(&histogram_path, &csv_document("facility-bench", &header, &rows)?)?;

    let mut header = vec!["run".to_string(), "solver".into()];
    header.extend(["x0_1_0", "x0_1_1", "x0_2_0", "x0_2_1"].map(String::from));
    header.extend(["outcome", "status", "iterations"].map(String::from));
    header.extend(["x1_0", "x1_1", "x2_0", "x2_1", "residual"].map(String::from));
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut v = vec![r.run.to_string(), r.solver.label().into()];
            v.extend(r.x0_1.iter().chain(&r.x0_2).map(|&x| num(x)));
            v.extend([r.outcome.label().into(), r.status.label().into(), r.iterations.to_string()]);
            v.extend(r.final_x1.iter().chain(&r.final_x2).map(|&x| num(x)));
            v.push(num(r.final_residual));
            v
        })
        .collect();
    let runs_path = out_dir.join("facility_runs.csv");
    write_file(&runs_path, &csv_document("facility-bench", &header, &rows)?)?;
    Ok(FacilityBench { results, summary, histogram_path, runs_path })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub problem: String,
    pub solver: SolverKind,
    pub status: SolveStatus,
    pub iterations: usize,
    /// One iteration with a full step.
    pub one_step_convergence: bool,
    pub estimates: AssumptionEstimates,
    pub lemma: LemmaReport,
    pub stepsizes: StepsizeMonitor,
}

/// Solves, estimates the problem constants on a box around the trajectory
/// (padded by `margin`) and re-checks the lemma bounds on every iterate.
pub fn cmd_diagnose(spec: &RunSpec, margin: f64, samples: usize) -> CliResult<(DiagnoseReport, PathBuf)> {
    if !(margin >= 0.0) || samples == 0 {
        return Err(CliError::Usage("margin must be nonnegative and samples positive".into()));
    }
    let (problem, report) = run_spec(spec)?;
    let region = SampleBox::around_run(&report, margin)?;
    let mut estimates = estimate_assumptions(&problem, &region, samples, spec.seed)?;
    estimates.absorb_run(&report)?;
    let lemma = verify_lemma_bounds(&report, &estimates);
    let diag = DiagnoseReport {
        problem: spec.problem.clone(),
        solver: spec.solver,
        status: report.status,
        iterations: report.iterations,
        one_step_convergence: report.status == SolveStatus::Converged
            && report.iterations == 1
            && report.trajectory[0].t == 1.0,
        estimates,
        lemma,
        stepsizes: monitor_stepsizes(&report),
    };
    let path = spec.out_dir.join(format!("{}_{}_diagnose.json", file_stem(&spec.problem), spec.solver.label()));
    write_file(&path, &serde_json::to_string_pretty(&diag)?)?;
    Ok((diag, path))
}
