use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ergosafe::InequalityMode;
use ergosafe_cli::commands::{self, Overrides};
use ergosafe_cli::{CliError, Scenario};

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "ergosafe", version, about = "Safety-critical ergodic trajectory planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file, or a built-in scene: `default`, `fleet`.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Fourier modes per dimension.
    #[arg(long)]
    modes_per_dim: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one robot.
    Plan {
        #[command(flatten)]
        common: Common,
        /// sc_eto, eto_plain_h, or none.
        #[arg(long)]
        mode: Option<InequalityMode>,
    },
    /// Plan all robots of a scenario jointly with inter-robot barriers.
    Fleet {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<InequalityMode>,
    },
    /// Randomized start/goal trials comparing sc_eto with eto_plain_h.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Sweep the DCBF decay rate.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values in (0, 1]; ten log-spaced values by default.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Compare the assembled gradient with finite differences.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var("ERGOSAFE_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("ERGOSAFE_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

fn load(common: &Common, fallback: &str) -> Result<Scenario, CliError> {
    Scenario::resolve(common.scenario.as_deref().unwrap_or(fallback))
}

fn overrides(common: &Common, mode: Option<InequalityMode>) -> Overrides {
    Overrides {
        mode,
        seed: common.seed,
        modes_per_dim: common.modes_per_dim,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = threads()?;
    if let Some(n) = threads {
        // ignore failure: the global pool may already exist
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Plan { common, mode } => {
            let s = load(&common, "default")?;
            let r = commands::cmd_plan(&s, &common.out, &overrides(&common, mode))?;
            println!(
                "{}: metric {:.6}, converged {}, audit {}, {:.1}s -> {}",
                r.mode,
                r.metric,
                r.converged,
                if r.audit.passed { "pass" } else { "FAIL" },
                r.seconds,
                common.out.display()
            );
        }
        Command::Fleet { common, mode } => {
            let s = load(&common, "fleet")?;
            let (r, _) = commands::cmd_fleet(&s, &common.out, &overrides(&common, mode))?;
            println!(
                "{} robots, {}: metric {:.6}, converged {}, audit {}, min separation {:.4}, {:.1}s -> {}",
                r.robots,
                r.mode,
                r.metric,
                r.converged,
                if r.audit.passed { "pass" } else { "FAIL" },
                r.min_separation.unwrap_or(f64::INFINITY),
                r.seconds,
                common.out.display()
            );
        }
        Command::Montecarlo { common, trials } => {
            let s = overrides(&common, None).apply(&load(&common, "default")?);
            let rep = commands::cmd_montecarlo(&s, trials, None, threads, &common.out)?;
            println!("{:<12} {:>7} {:>10} {:>10} {:>9} {:>15}", "mode", "trials", "converged", "successes", "success%", "success%(conv)");
            for m in &rep.summary {
                println!(
                    "{:<12} {:>7} {:>10} {:>10} {:>9.1} {:>15.1}",
                    m.mode.as_str(),
                    m.trials,
                    m.converged,
                    m.successes,
                    m.success_rate,
                    m.converged_success_rate
                );
            }
        }
        Command::Ablate { common, gammas } => {
            let s = load(&common, "default")?;
            let (runs, trend) = commands::cmd_ablate(&s, gammas.as_deref(), &common.out, &overrides(&common, None))?;
            println!("{:>10} {:>12} {:>12} {:>10}", "gamma", "metric", "min_h", "converged");
            for r in &runs {
                println!("{:>10.4} {:>12.6} {:>12.3e} {:>10}", r.gamma, r.metric(), r.min_h(), r.converged());
            }
            println!(
                "trend: {} metric inversion(s), {} min_h inversion(s), {} unconverged excluded",
                trend.metric_inversions.len(),
                trend.min_h_inversions.len(),
                trend.excluded
            );
        }
        Command::GradCheck { common, instances } => {
            let s = load(&common, "default")?;
            let errors = commands::cmd_grad_check(&s, instances, &overrides(&common, None))?;
            let worst = errors.iter().copied().fold(0.0, f64::max);
            println!("max relative error over {} instance(s): {worst:.3e}", errors.len());
            if !(worst < GRAD_TOLERANCE) {
                return Err(CliError::Invariant(ergosafe::Error::Invalid {
                    field: "gradient".into(),
                    reason: format!("finite-difference mismatch {worst:.3e} exceeds {GRAD_TOLERANCE:e}"),
                }));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
