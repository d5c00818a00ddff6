//! Marker-style synthetic corpus.
//!
//! Utterances come from a tiny template grammar. The style of a response is
//! fixed entirely by which marker words it contains, so a classifier trained
//! on the companion politeness set can be checked against the exact rule in
//! [`label_by_rule`].

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::data::{DialogueTriple, Politeness, StyledUtterance, TokenSeq};
use crate::error::{Error, Result};
use crate::numerics::Rng;

const NOUNS: [&str; 40] = [
    "movie", "song", "book", "game", "car", "house", "dog", "cat", "city", "party", "dinner", "show", "concert",
    "trip", "story", "plan", "idea", "gift", "dress", "phone", "garden", "painting", "letter", "meeting", "lecture",
    "class", "match", "race", "island", "river", "mountain", "hotel", "coffee", "pizza", "cake", "wine", "museum",
    "train", "boat", "picture",
];

const ADJECTIVES: [&str; 20] = [
    "great",
    "terrible",
    "boring",
    "funny",
    "strange",
    "lovely",
    "awful",
    "quiet",
    "noisy",
    "huge",
    "tiny",
    "cheap",
    "expensive",
    "fast",
    "slow",
    "bright",
    "dark",
    "warm",
    "cold",
    "fresh",
];

const LEXICON_NOUNS: usize = 16;
const LEXICON_ADJECTIVES: usize = 10;

const OPENERS: [&str; 4] = [
    "did you see the {n} ?",
    "what about the {n} ?",
    "tell me about the {n} .",
    "have you heard of the {n} ?",
];
const REPLIES: [&str; 2] = ["the {n} was {a} .", "i think the {n} is {a} ."];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleMarkers {
    pub polite: Vec<String>,
    pub rude: Vec<String>,
}

impl Default for StyleMarkers {
    fn default() -> Self {
        let s = |w: &[&str]| w.iter().map(|t| t.to_string()).collect();
        StyleMarkers {
            polite: s(&["please", "thanks", "sir", "kindly", "appreciate", "grateful"]),
            rude: s(&["idiot", "damn", "stupid", "shut", "whatever", "moron"]),
        }
    }
}

impl StyleMarkers {
    pub fn validate(&self) -> Result<()> {
        if self.polite.is_empty() || self.rude.is_empty() {
            return Err(Error::usage("both marker sets must be non-empty"));
        }
        let polite: HashSet<&String> = self.polite.iter().collect();
        if let Some(shared) = self.rude.iter().find(|m| polite.contains(m)) {
            return Err(Error::usage(format!("marker {shared:?} is both polite and rude")));
        }
        Ok(())
    }
}

/// Probabilities of rude, neutral and polite responses in the triples set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleMix {
    pub rude: f64,
    pub neutral: f64,
    pub polite: f64,
}

impl Default for StyleMix {
    fn default() -> Self {
        StyleMix {
            rude: 0.4,
            neutral: 0.3,
            polite: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub triples: Vec<DialogueTriple>,
    pub politeness: Vec<StyledUtterance>,
}

/// The rule that defines labels: polite iff at least one polite marker and no
/// rude marker, rude iff the reverse, otherwise unlabeled.
pub fn label_by_rule<S: AsRef<str>>(tokens: &[S], markers: &StyleMarkers) -> Option<Politeness> {
    let count = |set: &[String]| tokens.iter().filter(|t| set.iter().any(|m| m == t.as_ref())).count();
    match (count(&markers.polite), count(&markers.rude)) {
        (p, 0) if p > 0 => Some(Politeness::Polite),
        (0, r) if r > 0 => Some(Politeness::Rude),
        _ => None,
    }
}

struct Lexicon {
    nouns: Vec<&'static str>,
    adjectives: Vec<&'static str>,
    /// `partner[i]` is the adjective a response uses after hearing adjective `i`.
    partner: Vec<usize>,
}

impl Lexicon {
    fn new(grammar_seed: u64) -> Self {
        let mut rng = Rng::seed(grammar_seed);
        let mut nouns = NOUNS.to_vec();
        rng.shuffle(&mut nouns);
        nouns.truncate(LEXICON_NOUNS);
        let mut adjectives = ADJECTIVES.to_vec();
        rng.shuffle(&mut adjectives);
        adjectives.truncate(LEXICON_ADJECTIVES);
        let mut partner: Vec<usize> = (0..LEXICON_ADJECTIVES).collect();
        rng.shuffle(&mut partner);
        Lexicon {
            nouns,
            adjectives,
            partner,
        }
    }
}

fn fill(template: &str, noun: &str, adjective: &str) -> TokenSeq {
    template
        .split(' ')
        .map(|w| match w {
            "{n}" => noun.to_string(),
            "{a}" => adjective.to_string(),
            other => other.to_string(),
        })
        .collect()
}

/// Wraps `body` (which ends in a terminal punctuation token) with style
/// markers: an opener `m ,`, a closer `, m` before the final token, or both.
fn decorate(body: &[String], set: &[String], rng: &mut Rng) -> TokenSeq {
    let form = rng.uniform();
    let (opener, closer) = if form < 0.4 {
        (true, false)
    } else if form < 0.8 {
        (false, true)
    } else {
        (true, true)
    };
    let mut out = Vec::with_capacity(body.len() + 4);
    if opener {
        out.push(rng.choose(set).clone());
        out.push(",".to_string());
    }
    let (last, head) = body.split_last().expect("non-empty body");
    out.extend(head.iter().cloned());
    if closer {
        out.push(",".to_string());
        out.push(rng.choose(set).clone());
    }
    out.push(last.clone());
    out
}

pub fn gen_synthetic(markers: &StyleMarkers, grammar_seed: u64, n: usize, rng: &mut Rng) -> Result<SyntheticCorpus> {
    gen_synthetic_mix(markers, StyleMix::default(), grammar_seed, n, rng)
}

/// Generates `n` triples and `n` labeled utterances (half polite, half rude).
pub fn gen_synthetic_mix(
    markers: &StyleMarkers,
    mix: StyleMix,
    grammar_seed: u64,
    n: usize,
    rng: &mut Rng,
) -> Result<SyntheticCorpus> {
    markers.validate()?;
    let total = mix.rude + mix.neutral + mix.polite;
    if [mix.rude, mix.neutral, mix.polite].iter().any(|p| *p < 0.0) || total <= 0.0 {
        return Err(Error::usage("style mix must be nonnegative with positive total"));
    }
    let lex = Lexicon::new(grammar_seed);
    let mut triples_rng = rng.fork(0);
    let mut labels_rng = rng.fork(1);

    let mut triples = Vec::with_capacity(n);
    for _ in 0..n {
        let r = &mut triples_rng;
        let noun = *r.choose(&lex.nouns);
        let a = r.below(lex.adjectives.len());
        let u1 = fill(r.choose(&OPENERS), noun, "");
        let u2 = fill(r.choose(&REPLIES), noun, lex.adjectives[a]);
        let body = fill("the {n} was {a} .", noun, lex.adjectives[lex.partner[a]]);
        let u = r.uniform() * total;
        let u3 = if u < mix.rude {
            decorate(&body, &markers.rude, r)
        } else if u < mix.rude + mix.neutral {
            body
        } else {
            decorate(&body, &markers.polite, r)
        };
        triples.push(DialogueTriple { u1, u2, u3 });
    }

    let mut politeness = Vec::with_capacity(n);
    for i in 0..n {
        let r = &mut labels_rng;
        let label = if i % 2 == 0 {
            Politeness::Polite
        } else {
            Politeness::Rude
        };
        let noun = *r.choose(&lex.nouns);
        let adjective = *r.choose(&lex.adjectives);
        let template = match r.below(3) {
            0 => *r.choose(&OPENERS),
            1 => *r.choose(&REPLIES),
            _ => "the {n} was {a} .",
        };
        let body = fill(template, noun, adjective);
        let set = match label {
            Politeness::Polite => &markers.polite,
            Politeness::Rude => &markers.rude,
        };
        politeness.push(StyledUtterance {
            tokens: decorate(&body, set, r),
            label,
        });
    }
    labels_rng.shuffle(&mut politeness);
    Ok(SyntheticCorpus { triples, politeness })
}
