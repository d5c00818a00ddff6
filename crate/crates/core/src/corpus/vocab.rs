use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
/// Joins the two context turns into one source sequence.
pub const SEP: usize = 4;
/// Continuous politeness label; its embedding is scaled by a score.
pub const LABEL: usize = 5;
pub const LABEL_POLITE: usize = 6;
pub const LABEL_NEUTRAL: usize = 7;
pub const LABEL_RUDE: usize = 8;

pub const RESERVED: [&str; 9] = [
    "<pad>",
    "<unk>",
    "<s>",
    "</s>",
    "<eou>",
    "<label>",
    "<label:polite>",
    "<label:neutral>",
    "<label:rude>",
];

/// Token/id mapping. Ids below [`RESERVED`]`.len()` are fixed special tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// The `max_tokens` most frequent tokens over `corpus` (ties broken
    /// alphabetically) after the reserved entries.
    pub fn build<'a, I, S>(corpus: I, max_tokens: usize) -> Vocab
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                let t = tok.as_ref();
                if !RESERVED.contains(&t) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(max_tokens).map(|(t, _)| t.to_string()))
            .collect();
        Vocab::from_tokens(tokens).expect("reserved prefix is valid")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::usage("vocabulary must start with the reserved tokens"));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::usage(format!("duplicate vocabulary entry {t}")));
            }
        }
        Ok(Vocab { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Decodes up to (not including) the first EOS, dropping PAD and BOS.
    pub fn decode_response(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).to_string())
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> Vocab {
        let corpus: Vec<Vec<&str>> = vec![vec!["a", "b", "a", "c"], vec!["b", "a", "d"]];
        Vocab::build(corpus.iter().map(Vec::as_slice), 3)
    }

    #[test]
    fn frequency_ranked_with_reserved_prefix() {
        let v = toy();
        assert_eq!(v.len(), RESERVED.len() + 3);
        assert_eq!(v.token(RESERVED.len()), "a");
        assert_eq!(v.token(RESERVED.len() + 1), "b");
        // c and d tie at 1; alphabetical keeps c
        assert_eq!(v.token(RESERVED.len() + 2), "c");
        assert_eq!(v.id("d"), UNK);
        assert_eq!(v.id("<label>"), LABEL);
        assert_eq!(v.tokens().iter().filter(|t| *t == "<label>").count(), 1);
    }

    #[test]
    fn unk_exactly_for_absent_tokens() {
        let v = toy();
        let toks = ["a", "zzz", "c", "d"];
        let ids = v.encode(&toks);
        for (t, id) in toks.iter().zip(ids) {
            assert_eq!(id == UNK, !v.contains(t));
        }
    }

    #[test]
    fn rejects_bad_prefix() {
        assert!(Vocab::from_tokens(vec!["x".into()]).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_inverse(ids in proptest::collection::vec(0usize..12, 0..20)) {
            let v = toy();
            prop_assert_eq!(v.encode(&v.decode(&ids)), ids);
        }
    }
}
