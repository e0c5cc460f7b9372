mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use triprec::config::Settings;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", file_message(path, source))]
    File { path: String, source: triprec::Error },
    #[error(transparent)]
    Core(#[from] triprec::Error),
}

fn file_message(path: &str, source: &triprec::Error) -> String {
    match source {
        triprec::Error::Parse { line, message } => format!("{path}:{line}: {message}"),
        other => format!("{path}: {other}"),
    }
}

impl CliError {
    pub fn in_file(path: &std::path::Path) -> impl FnOnce(triprec::Error) -> CliError + '_ {
        move |source| CliError::File { path: path.display().to_string(), source }
    }

    fn core(&self) -> &triprec::Error {
        match self {
            CliError::File { source, .. } | CliError::Core(source) => source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self.core() {
            triprec::Error::NoFeasibleTrip => 3,
            triprec::Error::Invariant(_) => 4,
            _ => 2,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Context-aware POI embeddings and budgeted trip recommendation.
#[derive(Debug, Parser)]
#[command(name = "triprec", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value settings file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

impl GlobalArgs {
    /// Defaults, then the config file, then flags.
    pub fn settings(&self) -> CliResult<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path).map_err(CliError::in_file(path))?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| triprec::Error::Invalid(format!("`--set {kv}` is not key=value")))?;
            s.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            s.set("seed", seed)?;
        }
        if let Some(w) = self.workers {
            s.set("workers", w)?;
        }
        Ok(s)
    }

    pub fn manifest_path(&self, default: PathBuf) -> PathBuf {
        self.manifest.clone().unwrap_or(default)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a corpus file from check-in and POI tables.
    Ingest(commands::IngestArgs),
    /// Co-occurrence and popularity statistics of a corpus.
    Analyze(commands::AnalyzeArgs),
    /// Train an embedding model on a corpus.
    Train(commands::TrainArgs),
    /// Recommend a trip for one query.
    Recommend(commands::RecommendArgs),
    /// Leave-one-out evaluation of the solvers.
    Evaluate(commands::EvaluateArgs),
    /// Write the integer program of one query in LP format.
    ExportLp(commands::ExportLpArgs),
    /// Generate a structured synthetic check-in corpus.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(&cli.global, a),
        Command::Analyze(a) => commands::analyze(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Recommend(a) => commands::recommend(&cli.global, a),
        Command::Evaluate(a) => commands::evaluate(&cli.global, a),
        Command::ExportLp(a) => commands::export_lp(&cli.global, a),
        Command::Synth(a) => commands::synth(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
