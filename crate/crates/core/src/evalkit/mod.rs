//! Automatic evaluation: BLEU, word error rate, classifier politeness,
//! correlation, inter-annotator agreement and report assembly.

mod annotation;
mod metrics;
mod report;
mod stats;

pub use annotation::{AnnotationTable, Bucket, MAX_RATING, MIN_RATING};
pub use metrics::{bleu4, corpus_bleu, edit_distance, mean_politeness, sentence_bleu_smoothed, word_error_rate};
pub use report::{CorrelationEntry, EvalReport, ModelScores, ReportMetadata, Scored, REPORT_SCHEMA_VERSION};
pub use stats::{average_ranks, cohen_kappa, correlate, kappa_from_confusion, Correlation, CorrelationKind};

#[cfg(test)]
mod tests;
