//! Evaluation protocol and report generation: per-suite accuracy,
//! seen/unseen/SNR aggregation, relative improvement, and CSV/JSON/
//! markdown/SVG emission.

pub mod aggregate;
pub mod evaluate;
pub mod report;

pub use aggregate::{aggregate, relative_improvement, EvalResult, SuiteRecord};
pub use evaluate::{evaluate_all_suites, evaluate_suite};
pub use report::{
    parse_csv, write_csv, write_json, write_markdown, write_svg,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty suite")]
    EmptySuite,
    #[error("aggregate requested over incomplete results: {0}")]
    MissingAggregate(String),
    #[error("invalid evaluation input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}
