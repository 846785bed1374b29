use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microdispatch::commands;
use microdispatch::config::RunConfig;
use microdispatch::Error;

#[derive(Parser)]
#[command(name = "microdispatch", version, about = "Real-time microgrid dispatch with deep Q-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for DP stages and scenario-parallel evaluation.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agent; writes the checkpoint and metrics.csv.
    Train(Common),
    /// Roll the trained policy out over the test scenarios.
    Evaluate(Common),
    /// Compare the trained policy with the myopic and DP baselines.
    Compare(Common),
    /// Solve one OPF problem file and print the solution.
    Opf {
        problem: PathBuf,
    },
    /// Write the training and test scenario archives.
    GenScenarios(Common),
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.paths.out_dir = out.clone();
    }
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load(&c)?;
            let report = commands::cmd_train(&cfg, |m| {
                let test = m.test_expected_cost.map(|c| format!(" test cost {c:.3}")).unwrap_or_default();
                println!("epoch {:>5} reward {:>10.3}{test}", m.epoch, m.cumulative_reward);
            })?;
            println!("checkpoint: {}", report.checkpoint.display());
            println!("metrics:    {}", report.metrics.display());
            if let Some(c) = report.final_test_cost {
                println!("final expected test cost: {c:.3}");
            }
        }
        Command::Evaluate(c) => {
            let cfg = load(&c)?;
            let report = commands::cmd_evaluate(&cfg)?;
            for r in &report.rows {
                let gap = r.gap.map(|g| format!(" gap {:.2}%", 100.0 * g)).unwrap_or_default();
                println!("scenario {:>3} cost {:.3}{gap}", r.scenario, r.total_cost);
            }
            println!("results: {}", report.results.display());
        }
        Command::Compare(c) => {
            let cfg = load(&c)?;
            let report = commands::cmd_compare(&cfg)?;
            print!("{}", report.table);
            println!("comparison: {}", report.comparison.display());
            println!("summary:    {}", report.summary.display());
        }
        Command::Opf { problem } => {
            let (sol, text) = commands::cmd_opf(&problem)?;
            print!("{text}");
            if !sol.converged {
                return Ok(ExitCode::from(1));
            }
        }
        Command::GenScenarios(c) => {
            let cfg = load(&c)?;
            let (train, test) = commands::cmd_gen_scenarios(&cfg)?;
            println!("train scenarios: {}", train.display());
            println!("test scenarios:  {}", test.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MICRODISPATCH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
