use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use foresight_core::eval::Arm;
use foresight_core::pipeline::stages::Pipeline;
use foresight_core::pipeline::PipelineConfig;
use foresight_core::synth::Task;
use foresight_core::Error;

/// Live-stream foresight pipeline.
///
/// Exit codes: 0 success, 1 other failure, 2 config error, 3 integrity error,
/// 4 numeric failure.
#[derive(Debug, Parser)]
#[command(name = "foresight", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "foresight.toml")]
    config: PathBuf,
    /// Rerun stages even when their manifest entry is current.
    #[arg(long, global = true)]
    force: bool,
    /// Override the global seed (takes precedence over FORESIGHT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict ranker stages to one arm: base, history or foresight.
    #[arg(long, global = true)]
    arm: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Gen,
    /// Fit the K-Means codebook.
    TrainQuantizer,
    /// Map segments to ids and build the per-author store.
    Quantize,
    /// Train the next-id predictor.
    TrainPredictor,
    /// Train one ranker per arm and seed.
    TrainRanker,
    /// Score held-out data and write the report.
    Evaluate,
    /// Print the last report.
    Report,
    /// Run every stage in order.
    Run,
    /// Rank candidate authors; reads `user_id<TAB>author_id` lines.
    Score {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value = "ctr")]
        task: String,
    },
    /// Print the built-in demo config.
    DemoConfig {
        #[arg(long, default_value = "run")]
        work_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Integrity(_) => 3,
        Error::NonFinite(_) => 4,
        _ => 1,
    }
}

fn parse_candidates(text: &str) -> Result<Vec<(u64, u64)>, Error> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(n, l)| {
            let mut parts = l.split('\t');
            let mut next = || -> Result<u64, Error> {
                parts
                    .next()
                    .and_then(|p| p.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("candidate line {}: expected user_id<TAB>author_id", n + 1)))
            };
            Ok((next()?, next()?))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Command::DemoConfig { work_dir } = &cli.command {
        print!("{}", PipelineConfig::demo(work_dir.clone()).to_toml_string()?);
        return Ok(());
    }
    let mut config = PipelineConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let arm = match &cli.arm {
        Some(name) => Some(Arm::parse(name).ok_or_else(|| Error::Config(format!("unknown arm {name:?}")))?),
        None => None,
    };
    let mut p = Pipeline::new(config, cli.force, arm);
    match cli.command {
        Command::Gen => p.gen().map(drop),
        Command::TrainQuantizer => p.train_quantizer().map(drop),
        Command::Quantize => p.quantize().map(drop),
        Command::TrainPredictor => p.train_predictor().map(drop),
        Command::TrainRanker => p.train_ranker().map(drop),
        Command::Evaluate => {
            p.evaluate()?;
            print!("{}", p.report()?);
            Ok(())
        }
        Command::Report => {
            print!("{}", p.report()?);
            Ok(())
        }
        Command::Run => {
            p.run_all()?;
            print!("{}", p.report()?);
            Ok(())
        }
        Command::Score { candidates, task } => {
            let task = Task::parse(&task).ok_or_else(|| Error::Config(format!("unknown task {task:?}")))?;
            let pairs = parse_candidates(&fs::read_to_string(&candidates)?)?;
            let ranked = p.score(&pairs, arm.unwrap_or(Arm::Foresight), task)?;
            println!("user_id\trank\tauthor_id\tscore");
            for (user, list) in ranked {
                for (i, (author, s)) in list.iter().enumerate() {
                    println!("{user}\t{}\t{author}\t{s:.6}", i + 1);
                }
            }
            Ok(())
        }
        Command::DemoConfig { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
