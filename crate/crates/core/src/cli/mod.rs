//! The `sged` command line: generate, exec, ged, train, eval.
//!
//! Failures print one JSON error record on stderr and exit nonzero: 2 for
//! usage and configuration errors, 1 for everything else.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::policy::RewardMode;
use crate::Preset;

pub use config::{
    env_seed_value, load_config, parse_config, CostOverrides, EvalSection, GenerateSection, Paths, ProgramSource,
    RunConfig, TrainSection, VocabMode, MANIFEST_FILE, SEED_ENV,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Input(_) => "input",
            CliError::Run(_) => "run",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            kind: &'a str,
            message: String,
        }
        serde_json::to_string(&Record { error: Inner { kind: self.kind(), message: self.to_string() } })
            .expect("error record serializes")
    }
}

#[derive(Debug, Parser)]
#[command(name = "sged", version, about = "Scene-graph edit programs, graph edit distance and retrieval evaluation")]
pub struct Cli {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and test splits of a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Queries per split.
        #[arg(long)]
        queries: Option<usize>,
        /// Database scenes per split.
        #[arg(long)]
        db_scenes: Option<usize>,
    },
    /// Run a program on a scene file and print the edited scene.
    Exec {
        scene: PathBuf,
        /// Program listing, e.g. "remove, filter_shape[cube], scene".
        #[arg(long)]
        program: String,
        /// Also print the per-token trace.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Graph edit distance between two scene files.
    Ged {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        cost: Option<Preset>,
        /// Also print the node matching.
        #[arg(long)]
        matching: bool,
    },
    /// Pretrain and finetune a policy on a dataset split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_parser = parse_reward)]
        reward: Option<RewardMode>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Recall@k of gold or policy programs on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// gold or policy:<model file>.
        #[arg(long)]
        programs: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn parse_reward(s: &str) -> Result<RewardMode, String> {
    s.parse()
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Exec { .. } => "exec",
            Command::Ged { .. } => "ged",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
        }
    }
}

/// Resolves defaults, `SGED_SEED`, the config file and flags, in that order.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => {
            let mut cfg = RunConfig::default();
            if let Some(seed) = env_seed_value(std::env::var(SEED_ENV).ok().as_deref()).map_err(CliError::Config)? {
                cfg.seed = seed;
            }
            cfg
        }
    };
    let name = cli.command.name();
    if let Some(c) = &cfg.command {
        if c != name {
            return Err(CliError::Config(format!("config is for command {c:?}, not {name:?}")));
        }
    }
    cfg.command = Some(name.to_string());
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let common = |c: &Common, cfg: &mut RunConfig| {
        if let Some(p) = c.preset {
            cfg.preset = Some(p);
        }
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(o) = &c.out {
            cfg.paths.output = Some(o.clone());
        }
    };
    match &cli.command {
        Command::Generate { common: c, queries, db_scenes } => {
            common(c, &mut cfg);
            if let Some(q) = queries {
                cfg.generate.queries = *q;
            }
            if let Some(d) = db_scenes {
                cfg.generate.db_scenes = *d;
            }
        }
        Command::Exec { out, .. } => {
            if let Some(o) = out {
                cfg.paths.output = Some(o.clone());
            }
        }
        Command::Ged { cost, .. } => {
            if let Some(p) = cost {
                cfg.preset = Some(*p);
            }
        }
        Command::Train { common: c, dataset, reward, iters } => {
            common(c, &mut cfg);
            if let Some(d) = dataset {
                cfg.paths.dataset = Some(d.clone());
            }
            if let Some(r) = reward {
                cfg.train.reward = *r;
            }
            if let Some(i) = iters {
                cfg.train.iterations = *i;
            }
        }
        Command::Eval { common: c, dataset, programs, k } => {
            common(c, &mut cfg);
            if let Some(d) = dataset {
                cfg.paths.dataset = Some(d.clone());
            }
            if let Some(p) = programs {
                cfg.eval.programs = p.clone();
            }
            if let Some(k) = k {
                cfg.eval.k = *k;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<String, CliError> {
    match &cli.command {
        Command::Generate { .. } => commands::generate(cfg),
        Command::Exec { scene, program, trace, .. } => commands::exec(cfg, scene, program, *trace),
        Command::Ged { a, b, matching, .. } => commands::ged(cfg, a, b, *matching),
        Command::Train { .. } => commands::train(cfg),
        Command::Eval { .. } => commands::eval(cfg),
    }
}

fn run_inner<I, T>(argv: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            return Ok(e.to_string());
        }
        Err(e) => return Err(CliError::Usage(e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""))),
    };
    let cfg = resolve(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    pool.install(|| dispatch(&cli, &cfg))
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run_inner(argv) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}
