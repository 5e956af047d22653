//! `kernel-reach`: data-driven stochastic reachability from the command
//! line. Generates transition datasets, fits kernel-based estimators, runs
//! backward reachability, and cross-checks against reference solvers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Context, RunConfig};
use kernel_reach_core::CoreError;

#[derive(Parser)]
#[command(name = "kernel-reach", version, about = "Data-driven stochastic reachability toolkit")]
struct Cli {
    /// TOML run configuration; command-line flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the worker thread pool.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Allow runs whose memory estimate exceeds 4 GiB.
    #[arg(long, global = true)]
    huge: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a transition dataset and write it as CSV.
    Sample {
        /// Number of transitions.
        #[arg(long)]
        m: Option<usize>,
        /// Output file name (relative names land in --out).
        #[arg(long)]
        file: Option<String>,
    },
    /// Fit an estimator and compute a safety-probability field.
    Reach {
        /// Estimator: exact or rff.
        #[arg(long)]
        method: Option<String>,
        /// Number of transitions (when generating inline).
        #[arg(long)]
        m: Option<usize>,
        /// Random feature count.
        #[arg(long)]
        d: Option<usize>,
        /// Regularization weight.
        #[arg(long)]
        lambda: Option<f64>,
        /// State kernel bandwidth.
        #[arg(long)]
        sigma_x: Option<f64>,
        /// Input kernel bandwidth.
        #[arg(long)]
        sigma_u: Option<f64>,
        /// Horizon (number of steps).
        #[arg(long)]
        horizon: Option<usize>,
        /// Evaluation lattice, e.g. --grid 100,100.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Compare two methods on shared evaluation points.
    Validate {
        /// Method under test: exact, rff, dp, or mc.
        #[arg(long)]
        candidate: Option<String>,
        /// Reference method: exact, rff, dp, or mc.
        #[arg(long)]
        baseline: Option<String>,
        /// Number of transitions for the estimators.
        #[arg(long)]
        m: Option<usize>,
        /// Monte Carlo trials per point.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Time the sample/fit/recursion phases per method.
    Bench {
        /// Measured iterations (at least 3).
        #[arg(long)]
        iters: Option<usize>,
        /// Warm-up iterations (at least 1).
        #[arg(long)]
        warmup: Option<usize>,
        /// Repeated-quadrotor sweep, e.g. --copies 10,100,1000.
        #[arg(long, value_delimiter = ',')]
        copies: Option<Vec<usize>>,
    },
    /// Solve the grid recursion for the integrator reference setup.
    Dp {
        /// Cell grid, e.g. --grid 100,100.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Monte Carlo safety estimates at probe points.
    Mc {
        /// Trials per point.
        #[arg(long)]
        trials: Option<u64>,
        /// Probe point as comma-separated coordinates; repeatable.
        #[arg(long = "point", value_name = "COORDS")]
        points: Vec<String>,
    },
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Numerical(_) => 3,
        _ => 2,
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>, CoreError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| CoreError::Config(format!("bad coordinate \"{f}\": {e}")))
        })
        .collect()
}

fn apply_overrides(config: &mut RunConfig, command: &Command) -> Result<(), CoreError> {
    match command {
        Command::Sample { m, file } => {
            if m.is_some() {
                config.sample.m = *m;
            }
            if file.is_some() {
                config.sample.file = file.clone();
            }
        }
        Command::Reach {
            method,
            m,
            d,
            lambda,
            sigma_x,
            sigma_u,
            horizon,
            grid,
        } => {
            if method.is_some() {
                config.reach.method = method.clone();
            }
            if m.is_some() {
                config.sample.m = *m;
            }
            if d.is_some() {
                config.rff.d = *d;
            }
            if lambda.is_some() {
                config.kernel.lambda = *lambda;
            }
            if sigma_x.is_some() {
                config.kernel.sigma_x = *sigma_x;
            }
            if sigma_u.is_some() {
                config.kernel.sigma_u = *sigma_u;
            }
            if horizon.is_some() {
                config.problem.horizon = *horizon;
            }
            if grid.is_some() {
                config.reach.grid = grid.clone();
            }
        }
        Command::Validate {
            candidate,
            baseline,
            m,
            trials,
        } => {
            if candidate.is_some() {
                config.validate.candidate = candidate.clone();
            }
            if baseline.is_some() {
                config.validate.baseline = baseline.clone();
            }
            if m.is_some() {
                config.sample.m = *m;
            }
            if trials.is_some() {
                config.mc.trials = *trials;
            }
        }
        Command::Bench {
            iters,
            warmup,
            copies,
        } => {
            if iters.is_some() {
                config.bench.iters = *iters;
            }
            if warmup.is_some() {
                config.bench.warmup = *warmup;
            }
            if copies.is_some() {
                config.bench.copies = copies.clone();
            }
        }
        Command::Dp { grid } => {
            if grid.is_some() {
                config.dp.grid = grid.clone();
            }
        }
        Command::Mc { trials, points } => {
            if trials.is_some() {
                config.mc.trials = *trials;
            }
            if !points.is_empty() {
                let parsed: Result<Vec<Vec<f64>>, CoreError> =
                    points.iter().map(|p| parse_point(p)).collect();
                config.mc.points = Some(parsed?);
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CoreError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CoreError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CoreError::Config(format!("thread pool: {e}")))?;
    }
    let mut config = RunConfig::load(cli.config.as_deref())?;
    apply_overrides(&mut config, &cli.command)?;
    let ctx = Context::new(config, cli.seed, cli.out, cli.huge);
    std::fs::create_dir_all(&ctx.out_dir)?;
    match &cli.command {
        Command::Sample { .. } => commands::cmd_sample(&ctx),
        Command::Reach { .. } => commands::cmd_reach(&ctx),
        Command::Validate { .. } => commands::cmd_validate(&ctx),
        Command::Bench { .. } => commands::cmd_bench(&ctx),
        Command::Dp { .. } => commands::cmd_dp(&ctx),
        Command::Mc { .. } => commands::cmd_mc(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_exit_3_everything_else_2() {
        assert_eq!(exit_code_for(&CoreError::Numerical("x".into())), 3);
        assert_eq!(exit_code_for(&CoreError::Config("x".into())), 2);
        assert_eq!(exit_code_for(&CoreError::Dimension("x".into())), 2);
        assert_eq!(exit_code_for(&CoreError::Unsupported("x".into())), 2);
        assert_eq!(exit_code_for(&CoreError::Format("x".into())), 2);
        assert_eq!(
            exit_code_for(&CoreError::Io(std::io::Error::other("x"))),
            2
        );
    }

    #[test]
    fn point_flags_parse_as_coordinates() {
        assert_eq!(parse_point("0.6,0.0").unwrap(), vec![0.6, 0.0]);
        assert_eq!(parse_point(" 1 , -2.5 ").unwrap(), vec![1.0, -2.5]);
        assert!(parse_point("a,b").is_err());
    }
}
