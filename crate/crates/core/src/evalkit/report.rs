use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::CorrelationKind;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A metric value with the number of samples it was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub value: f64,
    pub n: usize,
}

impl Scored {
    pub fn new(value: f64, n: usize) -> Self {
        Scored { value, n }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    pub politeness: Option<Scored>,
    pub bleu4: Option<Scored>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl: Option<Scored>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer: Option<Scored>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl_last: Option<Scored>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer_last: Option<Scored>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub left: String,
    pub right: String,
    pub kind: CorrelationKind,
    pub r: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub dataset: String,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub models: Vec<ModelScores>,
    pub correlations: Vec<CorrelationEntry>,
}

impl EvalReport {
    pub fn new(metadata: ReportMetadata) -> Self {
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            metadata,
            models: Vec::new(),
            correlations: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset {} (seed {})", self.metadata.dataset, self.metadata.seed);
        let cell = |s: &Option<Scored>| match s {
            Some(s) => format!("{:>10.4} (n={})", s.value, s.n),
            None => format!("{:>10}", "-"),
        };
        for m in &self.models {
            let _ = writeln!(out, "{}", m.name);
            for (label, value) in [
                ("politeness", &m.politeness),
                ("bleu4", &m.bleu4),
                ("ppl", &m.ppl),
                ("wer", &m.wer),
                ("ppl@last", &m.ppl_last),
                ("wer@last", &m.wer_last),
            ] {
                if value.is_some() || label == "politeness" || label == "bleu4" {
                    let _ = writeln!(out, "  {label:<12}{}", cell(value));
                }
            }
        }
        for c in &self.correlations {
            let _ = writeln!(
                out,
                "{:?} {} vs {}: r = {:.4} (n={})",
                c.kind, c.left, c.right, c.r, c.n
            );
        }
        out
    }
}
