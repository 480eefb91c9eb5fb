use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::error;
use unipolicy::harness::{load_config, run_pipeline, ExperimentConfig, Mode, Overrides, Strategy};
use unipolicy::profile::Profile;

/// Learn per-task experts with demonstration-guided RL, then distill them
/// into one goal-conditioned policy. Log verbosity follows RUST_LOG.
#[derive(Parser, Debug)]
#[command(name = "unipolicy", version)]
struct Cli {
    /// TOML experiment config; without one, --seed is required and all
    /// values come from the profile.
    #[arg(long, global = true, env = "UNIPOLICY_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    PolytaskOffline,
    PolytaskOnline,
    Finetune,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write scripted-expert demonstrations for every task.
    GenDemos,
    /// Train task experts (all tasks, or one).
    TrainExpert {
        #[arg(long)]
        task: Option<u32>,
    },
    /// Distill the experts into one policy and compare with GCBC.
    Distill,
    /// Run the task sequence with one lifelong strategy.
    Lifelong {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
    },
    /// Evaluate every stored policy on every task.
    Eval,
    /// Re-emit reports and charts from stored lifelong results.
    Report,
    /// Print the fully resolved config as TOML.
    ShowConfig,
}

fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let (mode, strategy) = match &cli.command {
        Command::GenDemos => (Some(Mode::GenDemos), None),
        Command::TrainExpert { .. } => (Some(Mode::TrainExpert), None),
        Command::Distill => (Some(Mode::Distill), None),
        Command::Lifelong { strategy } => (
            Some(Mode::Lifelong),
            Some(match strategy {
                StrategyArg::PolytaskOffline => Strategy::PolytaskOffline,
                StrategyArg::PolytaskOnline => Strategy::PolytaskOnline,
                StrategyArg::Finetune => Strategy::Finetune,
            }),
        ),
        Command::Eval => (Some(Mode::Eval), None),
        Command::Report => (Some(Mode::Report), None),
        Command::ShowConfig => (None, None),
    };
    let overrides = Overrides {
        seed: cli.seed,
        profile: cli.profile.map(|p| match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }),
        out_dir: cli.out.clone(),
        mode,
        strategy,
    };
    let cfg = match &cli.config {
        Some(path) => load_config(path, &overrides)?,
        None => ExperimentConfig::from_toml_str("", &overrides)
            .context("no --config given, so --seed is required")?,
    };
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let only = match cli.command {
        Command::TrainExpert { task } => task,
        _ => None,
    };
    let summary = run_pipeline(&cfg, only)?;
    if let Some(report) = &summary.report {
        println!(
            "{}: final effective tasks {} / {}",
            report.strategy,
            report.final_effective_tasks(),
            report.task_ids.len()
        );
    }
    for f in &summary.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
