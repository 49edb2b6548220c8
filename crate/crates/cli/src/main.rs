//! `stablab` command line: single solves, prices, stability sweeps and
//! lemma audits driven by JSON experiment configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stablab::harness::{
    audit_probabilistic_lemmas, price_report, solve_report, sweep_delta, sweep_p, write_csv,
    write_json, ExperimentConfig, HarnessError, SweepReport,
};
use stablab::market::{build_tree, MultinomialSpec, TreeSpec};

#[derive(Parser, Debug)]
#[command(
    name = "stablab",
    version,
    about = "Stability experiments for utility maximization on scenario trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the configured problem and certify it against martingale probes.
    Solve(RunArgs),
    /// Davis and indifference prices of the configured claim.
    Price(RunArgs),
    /// Sweep δ → 0 and record the error functionals.
    SweepDelta(RunArgs),
    /// Sweep p → −∞ and record the power-to-exponential functionals.
    SweepP(RunArgs),
    /// Audit the supermartingale moment bound and the utility sandwiches.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the solver gradient tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Market to audit on; a two-step trinomial tree when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn exit_code(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Solver(_) => EXIT_SOLVER,
        HarnessError::Config(_) | HarnessError::Trials(_) => EXIT_VALIDATION,
        HarnessError::Output { .. } | HarnessError::Threads(_) => 1,
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = args.tol {
        cfg.tolerances.solver = tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Output {
        path: dir.display().to_string(),
        message: e.to_string(),
    })
}

fn emit_sweep(dir: &Path, stem: &str, report: &SweepReport) -> Result<u8, HarnessError> {
    write_csv(&dir.join(format!("{stem}.csv")), report)?;
    write_json(&dir.join(format!("{stem}.json")), report)?;
    match &report.error {
        Some(e) => {
            eprintln!("sweep stopped after {} rows: {e}", report.rows.len());
            Ok(EXIT_SOLVER)
        }
        None => Ok(0),
    }
}

fn default_audit_tree() -> TreeSpec {
    TreeSpec::Multinomial(MultinomialSpec {
        s0: vec![1.0],
        moves: vec![vec![1.5], vec![1.0], vec![0.7]],
        probs: vec![0.3, 0.4, 0.3],
        steps: 2,
    })
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = load(&args)?;
            let report = solve_report(&cfg)?;
            prepare(&args.out)?;
            write_json(&args.out.join("solve.json"), &report)?;
            println!(
                "value {:.12}  first-order residual {:.3e}",
                report.primal.value, report.certificate.first_order_residual
            );
            Ok(0)
        }
        Command::Price(args) => {
            let cfg = load(&args)?;
            let report = price_report(&cfg)?;
            prepare(&args.out)?;
            write_json(&args.out.join("price.json"), &report)?;
            println!(
                "davis {:.12}  indifference {:.12}",
                report.davis.price, report.indifference.price
            );
            Ok(0)
        }
        Command::SweepDelta(args) => {
            let cfg = load(&args)?;
            let report = sweep_delta(&cfg)?;
            prepare(&args.out)?;
            emit_sweep(&args.out, "sweep_delta", &report)
        }
        Command::SweepP(args) => {
            let cfg = load(&args)?;
            let report = sweep_p(&cfg)?;
            prepare(&args.out)?;
            emit_sweep(&args.out, "sweep_p", &report)
        }
        Command::Audit(args) => {
            let spec = match &args.config {
                Some(path) => ExperimentConfig::load(path)?.market,
                None => default_audit_tree(),
            };
            let tree = build_tree(&spec).map_err(stablab::harness::ConfigError::from)?;
            let report = audit_probabilistic_lemmas(&tree, args.seed, args.trials)?;
            prepare(&args.out)?;
            write_json(&args.out.join("audit.json"), &report)?;
            for m in &report.moments {
                println!(
                    "q = {:.2}: {} violations, max ratio {:.6}",
                    m.q, m.violations, m.max_ratio
                );
            }
            println!(
                "max sandwich violation {:.3e}",
                report.max_sandwich_violation
            );
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
