//! Command-line front end for argmine: corpus ingestion, experiment runs and sweeps,
//! offline re-evaluation of predictions files, and the feedback service.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod serve;

use std::fmt;
use std::sync::Arc;

use argmine::corpus::LoadedCorpus;
use argmine::inference::mock::{GoldOracle, ParagraphMock};
use argmine::inference::{Completer, ModelConfig};
use argmine::pipeline::{CompleterFactory, HttpCompleterFactory};

pub use args::{Cli, Command};

/// How a command ended; mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some work failed at run time (a sweep variant, an unreachable model).
    Partial,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial => 1,
        }
    }
}

/// A command that could not proceed.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configuration or input files (exit 2).
    Usage(anyhow::Error),
    /// Failure while running (exit 1).
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Run(a) => commands::run(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Serve(a) => serve::serve(a),
    }
}

/// Endpoint prefix selecting an in-process model instead of an HTTP server.
pub const MOCK_PREFIX: &str = "mock:";

/// The in-process model named by a `mock:` endpoint, `None` for a real endpoint.
///
/// `mock:gold` answers with the corpus annotations (it needs the corpus);
/// `mock:paragraphs` labels paragraphs by position and works on any text.
pub fn mock_completer(endpoint: &str, corpus: Option<&LoadedCorpus>) -> Result<Option<Arc<dyn Completer>>, String> {
    let Some(name) = endpoint.trim().strip_prefix(MOCK_PREFIX) else {
        return Ok(None);
    };
    match name {
        "gold" => match corpus {
            Some(c) => Ok(Some(Arc::new(GoldOracle::new(c.splits.iter().flat_map(|s| &s.essays))))),
            None => Err("mock:gold answers from corpus annotations and cannot analyze free text".into()),
        },
        "paragraphs" => Ok(Some(Arc::new(ParagraphMock))),
        other => Err(format!("unknown mock model {other:?} (expected mock:gold or mock:paragraphs)")),
    }
}

/// Completers for an experiment: HTTP, or a shared mock.
pub fn completer_factory(model: &ModelConfig, corpus: &LoadedCorpus) -> Result<Box<dyn CompleterFactory>, String> {
    Ok(match mock_completer(&model.endpoint, Some(corpus))? {
        Some(mock) => Box::new(move |_: &ModelConfig, _: usize| Ok(Box::new(mock.clone()) as Box<dyn Completer>)),
        None => Box::new(HttpCompleterFactory),
    })
}
