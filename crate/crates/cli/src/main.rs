use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use cms_cutoff::config::{Method, RunConfig};
use cms_cutoff::demo::demo_config;
use cms_cutoff::pipeline::{self, PlanResult};
use cms_cutoff::{Error, PreparedRunF64};

/// Assembly-aware cut-off selection for Hintz-Herting component mode synthesis.
#[derive(Parser, Debug)]
#[command(name = "cms-cutoff", version)]
struct Cli {
    /// Worker threads for the per-frequency work (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the bundled three-component config and run the full pipeline on it.
    Demo {
        /// Output directory.
        #[arg(long, default_value = "cms-cutoff-demo")]
        out: PathBuf,
    },
    /// Reference, budgets, every reduction plan and all reports.
    Run(StageArgs),
    /// Reference and budgets only; writes budgets.csv and sensitivity.csv.
    Synthesize(StageArgs),
    /// Reduces every configured method against budgets.csv.
    Reduce(StageArgs),
    /// Verifies the stored reduced components against the assembly requirement.
    Check(StageArgs),
}

#[derive(Args, Debug)]
struct StageArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok = 0,
    Internal = 1,
    Config = 2,
    Infeasible = 3,
    Violation = 4,
}

fn status_of(err: &Error) -> Status {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::InvalidModel(_)
        | Error::InvalidPartition(_)
        | Error::InvalidMesh(_)
        | Error::DegenerateElement { .. }
        | Error::NonBoundaryLoading { .. } => Status::Config,
        Error::Infeasible { .. } | Error::InfeasibleAtFrequency { .. } | Error::BudgetUnreachable { .. } => Status::Infeasible,
        Error::PropagationViolation { .. } => Status::Violation,
        _ => Status::Internal,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure thread pool: {e}");
            return ExitCode::from(Status::Internal as u8);
        }
    }

    let status = match execute(cli.command) {
        Ok(s) => s,
        Err((stage_status, e)) => {
            error!("{e}");
            eprintln!("error: {e}");
            stage_status
        }
    };
    ExitCode::from(status as u8)
}

type Failure = (Status, Error);

fn config_failure(e: Error) -> Failure {
    (Status::Config, e)
}

fn stage_failure(e: Error) -> Failure {
    (status_of(&e), e)
}

/// Loads and validates a config; every failure here is a config error.
fn load(args: &StageArgs) -> Result<(PreparedRunF64, PathBuf), Failure> {
    let cfg = RunConfig::load(&args.config).map_err(config_failure)?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = match (&args.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => {
            return Err(config_failure(Error::Config(
                "no output directory: pass --out or set output_dir".into(),
            )))
        }
    };
    let run = pipeline::prepare::<f64>(&cfg, &base).map_err(config_failure)?;
    Ok((run, out))
}

fn summarize(plans: &[PlanResult<f64>]) {
    for p in plans {
        let plan = &p.plan;
        let verdict = if plan.assembly_satisfied { "meets" } else { "violates" };
        println!(
            "{:<12} {:>5} modes  {} requirement (max weighted error {:.3e})",
            plan.method.to_string(),
            plan.total_n_hat,
            verdict,
            plan.max_assembly_weighted
        );
    }
}

fn proposed_status(plans: &[PlanResult<f64>]) -> Status {
    match plans.iter().find(|p| p.plan.method == Method::Proposed) {
        Some(p) if !p.plan.assembly_satisfied => {
            error!("proposed plan violates the assembly requirement");
            Status::Violation
        }
        _ => Status::Ok,
    }
}

fn run_full(run: &PreparedRunF64, out: &Path) -> Result<Status, Failure> {
    let outcome = pipeline::stage_run(run, out).map_err(stage_failure)?;
    summarize(&outcome.plans);
    if let Some(best) = outcome.best_uniform() {
        info!("smallest satisfying uniform plan: {}", best.plan.method);
    } else {
        warn!("no uniform plan satisfies the requirement");
    }
    println!("outputs written to {}", out.display());
    Ok(proposed_status(&outcome.plans))
}

fn execute(command: Command) -> Result<Status, Failure> {
    match command {
        Command::Demo { out } => {
            let cfg = demo_config();
            std::fs::create_dir_all(&out).map_err(|e| config_failure(e.into()))?;
            std::fs::write(out.join("demo_config.json"), cfg.to_json()).map_err(|e| stage_failure(e.into()))?;
            let run = pipeline::prepare::<f64>(&cfg, &out).map_err(stage_failure)?;
            run_full(&run, &out)
        }
        Command::Run(args) => {
            let (run, out) = load(&args)?;
            run_full(&run, &out)
        }
        Command::Synthesize(args) => {
            let (run, out) = load(&args)?;
            pipeline::stage_synthesize(&run, &out).map_err(stage_failure)?;
            println!("budgets written to {}", out.display());
            Ok(Status::Ok)
        }
        Command::Reduce(args) => {
            let (run, out) = load(&args)?;
            let plans = pipeline::stage_reduce(&run, &out).map_err(stage_failure)?;
            for p in &plans {
                println!("{:<12} {:>5} modes", p.plan.method.to_string(), p.plan.total_n_hat);
            }
            Ok(Status::Ok)
        }
        Command::Check(args) => {
            let (run, out) = load(&args)?;
            let plans = pipeline::stage_check(&run, &out).map_err(stage_failure)?;
            summarize(&plans);
            if plans.iter().all(|p| p.plan.assembly_satisfied) {
                Ok(Status::Ok)
            } else {
                Ok(Status::Violation)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_classes_map_to_documented_codes() {
        assert_eq!(status_of(&Error::Config("x".into())) as u8, 2);
        assert_eq!(status_of(&Error::InfeasibleAtFrequency { omega: 1.0 }) as u8, 3);
        assert_eq!(status_of(&Error::BudgetUnreachable { component: "a".into() }) as u8, 3);
        assert_eq!(
            status_of(&Error::PropagationViolation {
                omega: 1.0,
                sample: 0,
                margin: 2.0
            }) as u8,
            4
        );
        assert_eq!(status_of(&Error::MaxIterations { iterations: 3 }) as u8, 1);
    }

    #[test]
    fn cli_parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["cms-cutoff", "check", "--config", "a.json", "--threads", "2", "-vv"]).unwrap();
        assert_eq!(cli.threads, Some(2));
        assert_eq!(cli.verbose, 2);
        assert!(matches!(cli.command, Command::Check(_)));
    }
}
