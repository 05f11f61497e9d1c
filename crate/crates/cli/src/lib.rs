//! The `eegrag` command line: offline ingestion, single queries, benchmarks
//! and the read-only query service.

pub mod server;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eegrag::pipeline::EegQuery;
use eegrag::{EegRecording, Error, MetadataQuery, PipelineConfig, QueryInput, Workspace};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "eegrag", version, about = "Hypergraph retrieval-augmented EEG question answering")]
pub struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Store directory.
    #[arg(long, global = true, default_value = "store")]
    pub store: PathBuf,
    /// Turn off a retrieval channel (repeatable).
    #[arg(long = "disable", value_enum, global = true)]
    pub disable: Vec<Channel>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Channel {
    /// Knowledge retrieval through entity linking.
    Cl,
    /// Hyperedge retrieval.
    Il,
    /// EEG fusion.
    El,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract knowledge hyperedges from a documents JSONL file.
    IngestDocs {
        input: PathBuf,
        /// Annotated facts JSONL used instead of rule extraction for the documents it covers.
        #[arg(long)]
        facts: Option<PathBuf>,
    },
    /// Add patient records from a JSONL file.
    IngestCases { input: PathBuf },
    /// Add EEG recordings from a JSON file or a directory of them.
    IngestEeg { input: PathBuf },
    /// Answer one question and print the transcript as JSON.
    Query {
        question: String,
        #[arg(long)]
        role: Option<String>,
        /// EEG recording file to search with.
        #[arg(long, conflicts_with = "eeg_id")]
        eeg: Option<PathBuf>,
        /// Id of a stored recording to search with.
        #[arg(long)]
        eeg_id: Option<String>,
    },
    /// Score a QA dataset and write report.json and report.txt.
    Bench {
        dataset: PathBuf,
        /// Output directory for the report files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Serve POST /query and GET /healthz.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn load_config(cli: &Cli) -> eegrag::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for c in &cli.disable {
        match c {
            Channel::Cl => config.cl = false,
            Channel::Il => config.il = false,
            Channel::El => config.el = false,
        }
    }
    Ok(config)
}

fn guidance(e: &Error) -> Option<&'static str> {
    match e {
        Error::StoreMissing(_) => Some("build the stores with `eegrag ingest-docs`, `ingest-cases` and `ingest-eeg`"),
        _ => None,
    }
}

fn query_input(question: String, role: Option<String>, eeg: Option<&Path>, eeg_id: Option<String>) -> eegrag::Result<QueryInput> {
    let mut query = MetadataQuery::new(question);
    query.role = role;
    let eeg = match (eeg, eeg_id) {
        (Some(p), _) => Some(EegQuery::Recording(EegRecording::from_file(p)?)),
        (None, Some(id)) => Some(EegQuery::StoredId(id)),
        (None, None) => None,
    };
    Ok(QueryInput { query, eeg })
}

fn execute(cli: Cli) -> eegrag::Result<ExitCode> {
    let config = load_config(&cli)?;
    let ws = Workspace::new(&cli.store, config)?;
    match cli.command {
        Command::IngestDocs { input, facts } => print_json(&ws.ingest_docs(&input, facts.as_deref())?),
        Command::IngestCases { input } => print_json(&ws.ingest_cases(&input)?),
        Command::IngestEeg { input } => print_json(&ws.ingest_eeg(&input)?),
        Command::Query {
            question,
            role,
            eeg,
            eeg_id,
        } => {
            let pipeline = ws.pipeline()?;
            let out = pipeline.query(&query_input(question, role, eeg.as_deref(), eeg_id)?)?;
            println!("{}", out.to_json_pretty());
        }
        Command::Bench { dataset, out } => {
            let report = ws.bench(&dataset, &out)?;
            print!("{}", report.table());
            if report.errored > 0 {
                eprintln!("warning: {} example(s) errored and were excluded", report.errored);
            }
            if report.errored == report.examples.len() {
                eprintln!("error: every example errored");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve { bind } => {
            let pipeline = ws.pipeline()?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: PathBuf::from(&bind),
                source: e,
            })?;
            rt.block_on(server::serve(pipeline, &bind)).map_err(|e| Error::Io {
                path: PathBuf::from(&bind),
                source: e,
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: Cli) -> ExitCode {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = guidance(&e) {
                eprintln!("hint: {hint}");
            }
            ExitCode::FAILURE
        }
    }
}
