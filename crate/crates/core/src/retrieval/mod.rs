//! TF-IDF retrieval baselines: nearest polite candidate by cosine similarity
//! and a fixed set of ten generic polite responses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::corpus::{tokenize, TokenSeq};
use crate::error::{Error, Result};

/// The fixed generic polite responses.
pub const GENERIC10: [&str; 10] = [
    "thanks.",
    "can you help?",
    "can you clarify?",
    "no problem.",
    "you're welcome.",
    "interesting question.",
    "thanks for the answer.",
    "could you help please?",
    "can you elaborate?",
    "nice.",
];

/// Default politeness threshold for candidate filtering.
pub const POLITE_THRESHOLD: f64 = 0.8;

pub fn generic10() -> Vec<TokenSeq> {
    GENERIC10.iter().map(|s| tokenize(s)).collect()
}

/// Sparse vector sorted by term id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub entries: Vec<(usize, f64)>,
    pub norm: f64,
}

impl SparseVec {
    fn new(entries: Vec<(usize, f64)>) -> Self {
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        SparseVec { entries, norm }
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine similarity in `[0, 1]`; 0 when either vector is zero.
    pub fn cosine(&self, other: &SparseVec) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        (self.dot(other) / (self.norm * other.norm)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub index: usize,
    pub response: &'a TokenSeq,
    pub similarity: f64,
}

/// TF-IDF vectors of candidate responses, with `tf` the raw count and
/// `idf = ln((1 + N) / (1 + df))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfIndex {
    terms: BTreeMap<String, usize>,
    df: Vec<usize>,
    candidates: Vec<TokenSeq>,
    vectors: Vec<SparseVec>,
}

impl TfIdfIndex {
    /// Indexes the non-empty candidates in order.
    pub fn build(candidates: &[TokenSeq]) -> Result<Self> {
        let candidates: Vec<TokenSeq> = candidates.iter().filter(|c| !c.is_empty()).cloned().collect();
        if candidates.is_empty() {
            return Err(Error::usage("no retrieval candidates"));
        }
        let mut terms = BTreeMap::new();
        for c in &candidates {
            for t in c {
                let next = terms.len();
                terms.entry(t.clone()).or_insert(next);
            }
        }
        let mut df = vec![0; terms.len()];
        for c in &candidates {
            let mut seen: Vec<usize> = c.iter().map(|t| terms[t]).collect();
            seen.sort_unstable();
            seen.dedup();
            for id in seen {
                df[id] += 1;
            }
        }
        let mut index = TfIdfIndex {
            terms,
            df,
            candidates,
            vectors: Vec::new(),
        };
        index.vectors = index.candidates.iter().map(|c| index.vector(c)).collect();
        Ok(index)
    }

    /// Indexes candidates whose classifier score exceeds `threshold`.
    pub fn build_filtered(candidates: &[TokenSeq], classifier: &ClassifierModel, threshold: f64) -> Result<Self> {
        let polite = crate::classifier::filter_polite(classifier, candidates, threshold)?;
        if polite.is_empty() {
            return Err(Error::usage(format!("no candidate scores above {threshold}")));
        }
        Self::build(&polite)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[TokenSeq] {
        &self.candidates
    }

    pub fn vectors(&self) -> &[SparseVec] {
        &self.vectors
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.terms.get(term).copied()
    }

    pub fn df(&self, term: &str) -> usize {
        self.term_id(term).map_or(0, |id| self.df[id])
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.candidates.len() as f64;
        ((1.0 + n) / (1.0 + self.df(term) as f64)).ln()
    }

    /// TF-IDF vector of any text against this index; unknown terms are
    /// dropped.
    pub fn vector<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(id) = self.term_id(t.as_ref()) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        let n = self.candidates.len() as f64;
        SparseVec::new(
            counts
                .into_iter()
                .map(|(id, c)| (id, c as f64 * ((1.0 + n) / (1.0 + self.df[id] as f64)).ln()))
                .collect(),
        )
    }

    /// The candidate most similar to `query`; ties go to the lowest index.
    pub fn retrieve<S: AsRef<str>>(&self, query: &[S]) -> Result<Retrieved<'_>> {
        if query.is_empty() {
            return Err(Error::usage("empty retrieval query"));
        }
        let q = self.vector(query);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.vectors.iter().enumerate() {
            let s = q.cosine(v);
            if s > best.1 {
                best = (i, s);
            }
        }
        Ok(Retrieved {
            index: best.0,
            response: &self.candidates[best.0],
            similarity: best.1,
        })
    }

    /// Retrieval for a two-turn context, queried as one document.
    pub fn retrieve_context<S: AsRef<str>>(&self, u1: &[S], u2: &[S]) -> Result<Retrieved<'_>> {
        let query: Vec<&str> = u1.iter().chain(u2).map(AsRef::as_ref).collect();
        self.retrieve(&query)
    }
}
