use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colhybrid::par::Exec;
use colhybrid::pipeline::{self as pl, Axis, ExperimentConfig};
use colhybrid::sched::Strategy;
use colhybrid::Error;

/// Worker threads for the data-parallel stages; 1 runs sequentially.
const WORKERS_ENV: &str = "COLHYBRID_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "colhybrid",
    version,
    about = "Column-level hybrid ANN/SNN accelerator toolchain"
)]
struct Cli {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Strategies to schedule and simulate, e.g. cost,random,layerwise-2.
    #[arg(long, global = true, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    /// Base seed for workload generation and verification.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sweep axis: sparsity, quant_pair or core_split; all when omitted.
    #[arg(long, global = true)]
    axis: Option<Axis>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Generate weights, validation samples and test inputs.
    Gen,
    /// Profile per-column match statistics.
    Profile,
    /// Calibrate per-layer cost coefficients.
    Calibrate,
    /// Plan column-to-core schedules.
    Schedule,
    /// Simulate every schedule on the test inputs.
    Simulate,
    /// Gen through simulate in one go.
    Run,
    /// Design-space sweep.
    Sweep,
    /// Equivalence, mask-invariance, monotonicity and oracle suites.
    Verify,
}

fn config(cli: &Cli) -> colhybrid::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if !cli.strategy.is_empty() {
        cfg.strategies = cli.strategy.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exec_mode() -> colhybrid::Result<Exec> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(Exec::default());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer")))?;
    if n == 1 {
        return Ok(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    Ok(Exec::default())
}

fn run(cli: &Cli) -> colhybrid::Result<bool> {
    let cfg = config(cli)?;
    let exec = exec_mode()?;
    match cli.cmd {
        // log macros skip their arguments below the active level, so run first
        Cmd::Gen => {
            let manifest = pl::cmd_gen(exec, &cfg)?;
            log::info!("wrote {}", manifest.display());
        }
        Cmd::Profile => {
            let n = pl::cmd_profile(exec, &cfg)?.len();
            log::info!("wrote {n} profiles");
        }
        Cmd::Calibrate => {
            let n = pl::cmd_calibrate(exec, &cfg)?.len();
            log::info!("wrote {n} calibrations");
        }
        Cmd::Schedule => {
            let n = pl::cmd_schedule(exec, &cfg)?.len();
            log::info!("wrote {n} schedule files");
        }
        Cmd::Simulate | Cmd::Run => {
            let rows = if cli.cmd == Cmd::Run {
                pl::run_pipeline(exec, &cfg)?
            } else {
                pl::cmd_simulate(exec, &cfg)?
            };
            print!("{}", pl::summary_csv(&rows));
        }
        Cmd::Sweep => {
            let axes = cli.axis.map(|a| vec![a]).unwrap_or_else(|| Axis::ALL.to_vec());
            for axis in axes {
                let path = pl::cmd_sweep(exec, &cfg, axis)?;
                println!("{}", path.display());
            }
        }
        Cmd::Verify => {
            let report = pl::cmd_verify(exec, &cfg)?;
            for s in &report.suites {
                let gap = s.max_gap.map(|g| format!(" max_gap={g:.4}")).unwrap_or_default();
                println!(
                    "{:<17} {} checked={} failures={}{gap}",
                    s.name,
                    if s.passed { "PASS" } else { "FAIL" },
                    s.checked,
                    s.failures
                );
            }
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Verification(_) => 3,
        Error::Capacity(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
