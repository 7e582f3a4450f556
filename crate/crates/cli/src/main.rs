use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nep_bench::{
    cmd_diagnose, cmd_facility_bench, cmd_solve, cmd_table1, format_table1, resolve_out_dir, CliError, CliResult,
    RunSpec, StartSpec, EXIT_USAGE,
};
use nep_newton::descent::SolverConfig;
use nep_newton::study::{facility_config, SolverKind};

#[derive(Parser)]
#[command(name = "nep-bench", version, about = "Run and benchmark Newton-type solvers for two-player Nash games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write a JSON report and trajectory CSV.
    Solve(SolveArgs),
    /// Compare all solvers on the five scalar examples.
    Table1(CommonArgs),
    /// Multi-start outcome histogram on the 2D facility game.
    FacilityBench(BenchArgs),
    /// Solve, then re-check the lemma bounds along the trajectory.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Falls back to $NEP_OUT_DIR, then ./nep-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn config(&self, base: SolverConfig) -> SolverConfig {
        SolverConfig {
            grad_tol: self.grad_tol.unwrap_or(base.grad_tol),
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            alpha: self.alpha.unwrap_or(base.alpha),
            theta: self.theta.unwrap_or(base.theta),
            gamma: self.gamma.unwrap_or(base.gamma),
            tau: self.tau.unwrap_or(base.tau),
            ..base
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// examp1..examp5, nodescent, facility1d, facility2d or quadratic:SEED:N1xN2
    #[arg(long)]
    problem: String,
    #[arg(long, default_value = "descent-newton", value_parser = parse_solver)]
    solver: SolverKind,
    /// Comma-separated (x1, x2), or `paper` / `default` for the built-in start.
    #[arg(long, default_value = "paper", allow_hyphen_values = true)]
    x0: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Repeat to select several; all solvers when absent.
    #[arg(long, value_parser = parse_solver)]
    solver: Vec<SolverKind>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Padding of the sampling box around the trajectory.
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    SolverKind::from_label(s).ok_or_else(|| {
        let names: Vec<&str> = SolverKind::ALL.iter().map(|k| k.label()).collect();
        format!("unknown solver '{s}', expected one of {}", names.join(", "))
    })
}

fn run_spec(a: &SolveArgs) -> CliResult<RunSpec> {
    Ok(RunSpec {
        problem: a.problem.clone(),
        solver: a.solver,
        x0: StartSpec::parse(&a.x0)?,
        seed: a.common.seed,
        config: a.common.config(SolverConfig::default()),
        out_dir: resolve_out_dir(a.common.out_dir.clone()),
    })
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Solve(a) => {
            let out = cmd_solve(&run_spec(&a)?)?;
            let r = &out.report;
            println!(
                "{} {} on {}: {} after {} iterations, x1 = {:?}, x2 = {:?}, |g| = {:e}",
                r.solver,
                r.status.label(),
                r.problem,
                r.message.as_deref().unwrap_or("done"),
                r.iterations,
                r.final_x1,
                r.final_x2,
                r.final_residual
            );
            println!("wrote {} and {}", out.json_path.display(), out.csv_path.display());
            Ok(out.exit_code())
        }
        Command::Table1(c) => {
            let (cells, path) = cmd_table1(&c.config(SolverConfig::default()), &resolve_out_dir(c.out_dir.clone()))?;
            print!("{}", format_table1(&cells));
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::FacilityBench(b) => {
            let solvers = if b.solver.is_empty() { SolverKind::ALL.to_vec() } else { b.solver.clone() };
            let out_dir = resolve_out_dir(b.common.out_dir.clone());
            let bench = cmd_facility_bench(b.runs, b.common.seed, &solvers, &b.common.config(facility_config()), &out_dir)?;
            for s in &bench.summary {
                println!(
                    "{:<15} equilibrium {:>4}  non-equilibrium stationary {:>4}  failed {:>4}  mean iterations {}",
                    s.solver.label(),
                    s.equilibrium,
                    s.non_equilibrium_stationary,
                    s.failed,
                    s.mean_iterations_converged.map_or("-".into(), |m| format!("{m:.2}"))
                );
            }
            println!("wrote {} and {}", bench.histogram_path.display(), bench.runs_path.display());
            Ok(0)
        }
        Command::Diagnose(d) => {
            let (rep, path) = cmd_diagnose(&run_spec(&d.solve)?, d.margin, d.samples)?;
            println!(
                "{}: {} checks, {} violations, t_min {}, sum |d2| = {:e}",
                rep.problem,
                rep.lemma.total_checked(),
                rep.lemma.violations.len(),
                rep.stepsizes.t_min_observed,
                rep.stepsizes.partial_sum_d2
            );
            println!("wrote {}", path.display());
            Ok(if rep.lemma.violations.is_empty() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("nep-bench: {e}");
            let code = match &e {
                CliError::Solver(_) => 1,
                e => e.exit_code(),
            };
            ExitCode::from(code as u8)
        }
    }
}
