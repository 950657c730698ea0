//! ROUGE scoring, README/About datasets and evaluation statistics.

pub mod dataset;
pub mod eval;
pub mod hashing;
pub mod rouge;

pub use dataset::{DatasetSplit, RepoSample};
pub use eval::{EvalReport, ScoreTable};
pub use rouge::{score_all, Metric, MetricTriple, RougeScores, TokenSequence};
