//! Experiment harness over the `stylemt` library: indexing, translation in
//! the three prompting modes, k sweeps, tier ablations, style analysis,
//! test-set cleaning and report rendering.

pub mod analyze;
pub mod backend;
pub mod clean;
pub mod config;
pub mod data;
pub mod experiment;
pub mod report;
pub mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use stylemt::corpus::CorpusError;
use stylemt::llm::LlmError;
use stylemt::metrics::MetricsError;
use stylemt::pipeline::PipelineError;
use stylemt::prompting::TemplateError;
use stylemt::retrieval::RetrievalError;
use stylemt::styletree::StyleTreeError;

use config::{BackendKind, Direction, LoadedConfig, ModeName, RetrieverKind, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend: {0}")]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Tree(#[from] StyleTreeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Corpus(_) | CliError::Template(_) => EXIT_CONFIG,
            CliError::Pipeline(PipelineError::InvalidK(_) | PipelineError::InvalidTier(_)) => {
                EXIT_CONFIG
            }
            CliError::Backend(e) if e.is_fatal() => EXIT_BACKEND,
            _ => EXIT_FAILURE,
        }
    }
}

/// How a command that ran to completion went.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub items: usize,
    pub errors: usize,
    pub fatal: bool,
}

impl Outcome {
    pub fn add(&mut self, other: Outcome) {
        self.items += other.items;
        self.errors += other.errors;
        self.fatal |= other.fatal;
    }

    pub fn exit_code(&self) -> u8 {
        if self.fatal {
            EXIT_BACKEND
        } else if self.errors > 0 {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stylemt",
    version,
    about = "Retrieval-augmented LLM translation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the commands that read a run config. Each one overrides
/// the matching config value.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub direction: Option<Direction>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Demonstrations per prompt.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub retriever: Option<RetrieverKind>,
    /// Restrict demonstrations to one 25-hit band of the top 100 (0..=3).
    #[arg(long)]
    pub tier: Option<u8>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Print the prompts that would be sent and exit.
    #[arg(long)]
    pub dry_run: bool,
    /// Seed for sub-sampling test items with --limit.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Translate only this many test items per domain.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Requests in flight at once.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Parent directory for the timestamped run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue in an existing run directory, reusing its records.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

impl Common {
    /// Loads the config, applies flag overrides and validates the result.
    pub fn load(&self) -> Result<LoadedConfig, CliError> {
        let mut loaded = RunConfig::load(&self.config)?;
        let c = &mut loaded.config;
        if let Some(v) = self.direction {
            c.direction = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.retriever {
            c.retriever = v;
        }
        if self.tier.is_some() {
            c.tier = self.tier;
        }
        if let Some(v) = self.backend {
            c.backend.kind = v;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if self.limit.is_some() {
            c.limit = self.limit;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        c.validate()?;
        Ok(loaded)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and save BM25 indexes for every domain.
    Index(Common),
    /// Translate the test sets in one mode.
    Translate(Common),
    /// Run zero-shot once and the given modes for each k.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Demonstration counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50")]
        ks: Vec<usize>,
        /// Sweep every k from 1 to 50.
        #[arg(long)]
        full_range: bool,
        #[arg(long, value_delimiter = ',', default_value = "few-shot,style")]
        modes: Vec<ModeName>,
    },
    /// Run the given modes on each retrieval tier.
    AblateTiers {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "few-shot,style")]
        modes: Vec<ModeName>,
    },
    /// Match rate against retrieved demonstrations and tree edit distance
    /// against reference parses, per records file.
    AnalyzeStyle {
        #[command(flatten)]
        common: Common,
        /// Record files named `<domain>.<label>.jsonl`.
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Take demonstration ids from the sibling `<domain>.<label>.jsonl`
        /// instead of each record's own.
        #[arg(long)]
        demos_from: Option<String>,
        /// Demonstrations compared per item.
        #[arg(long, default_value_t = analyze::DEFAULT_TOP)]
        top: usize,
        /// N-gram order of the match rate.
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
    /// Filter the test sets with an LLM judge primed by the worst dev pairs.
    Clean {
        #[command(flatten)]
        common: Common,
        /// Dev pairs used as negative exemplars.
        #[arg(long)]
        exemplars: Option<usize>,
    },
    /// Render tables, sweep CSV and the gap summary from run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Write report.md, sweep.csv and results.json here instead of
        /// printing the markdown.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run_command(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Index(c) => experiment::cmd_index(&c),
        Command::Translate(c) => experiment::cmd_translate(&c),
        Command::Sweep {
            common,
            ks,
            full_range,
            modes,
        } => {
            let ks = if full_range { (1..=50).collect() } else { ks };
            experiment::cmd_sweep(&common, &ks, &modes)
        }
        Command::AblateTiers { common, ks, modes } => {
            experiment::cmd_ablate_tiers(&common, &ks, &modes)
        }
        Command::AnalyzeStyle {
            common,
            records,
            demos_from,
            top,
            n,
        } => analyze::cmd_analyze_style(&common, &records, demos_from.as_deref(), top, n),
        Command::Clean { common, exemplars } => clean::cmd_clean(&common, exemplars),
        Command::Report { runs, out } => report::cmd_report(&runs, out.as_deref()),
    }
}

/// Parses `args`, runs the command and maps the result to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    match run_command(cli) {
        Ok(outcome) => {
            if outcome.errors > 0 {
                eprintln!("{} of {} items failed", outcome.errors, outcome.items);
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
