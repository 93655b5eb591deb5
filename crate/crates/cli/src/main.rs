mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{AttackArgs, CommonArgs, ExperimentConfig};

#[derive(Parser)]
#[command(name = "oddball", version, about = "OddBall anomaly scores, structural poisoning attacks and defenses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated graph as an edge list
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the per-node OddBall report as CSV
    Score {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an attack over seeded target draws and summarize per budget
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        attack: AttackArgs,
        /// gradmax, continuous or binarized
        #[arg(long = "attack")]
        attack_name: Option<String>,
        #[arg(long)]
        targets_count: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Explicit comma-separated target ids instead of a draw
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare attack success under OLS, Huber and RANSAC rescoring
    Defend {
        #[command(flatten)]
        common: CommonArgs,
        /// Plan JSON written by `attack`
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ReFeX transfer pipeline and write its report as JSON
    Transfer {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the clean-graph embedding as CSV
        #[arg(long)]
        embedding_out: Option<PathBuf>,
    },
    /// Permutation test on the difference of two sample means
    Permtest {
        x: PathBuf,
        y: PathBuf,
        /// Column to read from score-report CSVs, e.g. N or E
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the result as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    cfg.apply_common(common);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => commands::generate(&load(&common)?, out.as_deref()),
        Command::Score { common, out } => commands::score(&load(&common)?, out.as_deref()),
        Command::Attack {
            common,
            attack,
            attack_name,
            targets_count,
            top_k,
            targets,
            reps,
            out,
        } => {
            let mut cfg = load(&common)?;
            cfg.apply_attack(&attack);
            if let Some(a) = attack_name {
                cfg.attack = a;
            }
            if let Some(k) = targets_count {
                cfg.targets_count = k;
            }
            if let Some(k) = top_k {
                cfg.top_k = k;
            }
            if targets.is_some() {
                cfg.targets = targets;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            commands::attack(&cfg, &out)
        }
        Command::Defend { common, plan, out } => commands::defend(&load(&common)?, &plan, out.as_deref()),
        Command::Transfer {
            common,
            attack,
            out,
            embedding_out,
        } => {
            let mut cfg = load(&common)?;
            cfg.apply_attack(&attack);
            commands::transfer(&cfg, out.as_deref(), embedding_out.as_deref())
        }
        Command::Permtest {
            x,
            y,
            column,
            m,
            seed,
            out,
        } => {
            let r = commands::permtest(&x, &y, column.as_deref(), m, seed)?;
            println!("t0 = {}\np = {}\nm = {}", r.t0, r.p_value, r.m);
            if let Some(p) = out {
                commands::write_atomic(&p, &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
