//! Evaluation metrics and dataset analyses.

mod difficulty;
mod errors;
mod metrics;

use std::path::PathBuf;

use thiserror::Error;

pub use difficulty::{
    context_question_overlap, corruption_rate, depth_summary, load_depths, question_type, question_type_counts,
    rouge_l_precision, DepthSummary, IdentityLemmatizer, Lemmatizer, QuestionLexicon,
};
pub use errors::{
    classify_alignment_error, error_summary, load_review_file, review_aligned, save_review_file, ErrorAnalysisRecord,
    ErrorCategory, ErrorSummary, ReviewRecord,
};
pub use metrics::{evaluate, f1_em, load_predictions, EvalReport, Normalizer, QuestionScore};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("{0} needs at least one item")]
    EmptyInput(&'static str),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}
