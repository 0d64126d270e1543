//! Argument mining with locally hosted language models: essay segmentation, argument type
//! and quality classification, and the span-overlap evaluation used to score them.
//!
//! Scores are generic over the float type (`f32` or `f64`); the aliases below fix `f64`.

pub mod align;
pub mod corpus;
pub mod inference;
pub mod metrics;
pub mod parse;
pub mod pipeline;
pub mod prompt;
pub mod report;
#[cfg(feature = "testkit")]
pub mod testkit;

pub type EvalReport = metrics::EvalReport<f64>;
pub type AggregateReport = metrics::AggregateReport<f64>;
pub type LabelReport = metrics::LabelReport<f64>;
pub type BioReport = metrics::BioReport<f64>;
pub type ExperimentResult = pipeline::ExperimentResult<f64>;
pub type RunResult = pipeline::RunResult<f64>;
