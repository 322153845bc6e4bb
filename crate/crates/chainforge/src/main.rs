use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chainforge::config::Config;
use chainforge::experiments::{self, RunOptions};
use chainforge::{costs, oracle, output};
use clap::{Parser, Subcommand};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "chainforge",
    version,
    about = "Stochastic chip supply-chain optimizer"
)]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, env = "CHAINFORGE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run experiment plans and write results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Plan to run; repeat for several. Runs every plan when omitted.
        #[arg(long = "experiment")]
        experiments: Vec<String>,
        /// Override every plan's seeds with this one.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Also write the first scenario's recourse LP of each point.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Parse and validate a config without running anything.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the cost calibration table and compare it with reference values.
    ValidateCosts {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare the engine with closed-form results on small markets.
    OracleCheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(String),
}

fn load(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p).map_err(|e| Failure::Config(e.to_string())),
        None => Ok(Config::default()),
    }
}

fn run_plans(
    cfg: &Config,
    names: &[String],
    seed: Option<u64>,
    out: &Path,
    dump_lp: bool,
) -> Result<(), Failure> {
    let plans: Vec<_> = if names.is_empty() {
        cfg.experiments.iter().collect()
    } else {
        names
            .iter()
            .map(|n| {
                cfg.experiment(n)
                    .ok_or_else(|| Failure::Config(format!("no experiment named {n:?} in config")))
            })
            .collect::<Result<_, _>>()?
    };
    if plans.is_empty() {
        return Err(Failure::Config("config defines no experiments".into()));
    }
    let rt = |e: experiments::ExperimentError| Failure::Runtime(e.to_string());
    output::write_resolved_config(out, cfg).map_err(rt)?;
    let opts = RunOptions { seed, dump_lp };
    let mut failed = 0;
    for plan in plans {
        let result = experiments::run(plan, cfg, &opts).map_err(rt)?;
        let written = output::write_result(out, &result).map_err(rt)?;
        eprintln!(
            "{}: {} points in {:.1}s, {} failed -> {}",
            result.name,
            result.points.len(),
            result.wall_time_s,
            result.failures(),
            written[0].display()
        );
        for p in result.points.iter().filter(|p| p.error.is_some()) {
            eprintln!(
                "  {} = {} seed {}: {}",
                result.axis.name(),
                p.parameter,
                p.seed,
                p.error.as_deref().unwrap_or_default()
            );
        }
        failed += result.failures();
    }
    if failed > 0 {
        Err(Failure::Runtime(format!("{failed} points failed")))
    } else {
        Ok(())
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            experiments,
            seed,
            out,
            dump_lp,
        } => {
            let cfg = load(Some(&config))?;
            run_plans(&cfg, &experiments, seed, &out, dump_lp)
        }
        Command::Check { config } => {
            let cfg = load(Some(&config))?;
            println!(
                "{}: ok, {} experiment(s)",
                config.display(),
                cfg.experiments.len()
            );
            Ok(())
        }
        Command::ValidateCosts { config } => {
            let cfg = load(config.as_deref())?;
            let cal =
                costs::calibrate(&cfg.chipcost).map_err(|e| Failure::Config(e.to_string()))?;
            for line in cal.lines() {
                println!("{line}");
            }
            if cal.passed() {
                Ok(())
            } else {
                Err(Failure::Check(
                    "cost model is outside the reference ranges".into(),
                ))
            }
        }
        Command::OracleCheck { config } => {
            let cfg = load(config.as_deref())?;
            let checks = oracle::run_oracles(&cfg.oracle, &cfg.optimizer);
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| c.failed()).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure::Check(format!("{failed} oracle check(s) failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
    }
}
