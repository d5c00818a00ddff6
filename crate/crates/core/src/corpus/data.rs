use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tokenize::{detokenize, tokenize};
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub type TokenSeq = Vec<String>;

/// An X-Y-X exchange: `u1`, `u2` form the context, `u3` is the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueTriple {
    pub u1: TokenSeq,
    pub u2: TokenSeq,
    pub u3: TokenSeq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Politeness {
    Rude = 0,
    Polite = 1,
}

impl Politeness {
    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(Politeness::Rude),
            1 => Some(Politeness::Polite),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyledUtterance {
    pub tokens: TokenSeq,
    pub label: Politeness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    TriplesJsonl,
    PolitenessJsonl,
    LmText,
}

impl FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triples-jsonl" => Ok(CorpusFormat::TriplesJsonl),
            "politeness-jsonl" => Ok(CorpusFormat::PolitenessJsonl),
            "lm-text" => Ok(CorpusFormat::LmText),
            other => Err(Error::usage(format!(
                "unknown corpus format {other:?} (expected triples-jsonl, politeness-jsonl or lm-text)"
            ))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::TriplesJsonl => "triples-jsonl",
            CorpusFormat::PolitenessJsonl => "politeness-jsonl",
            CorpusFormat::LmText => "lm-text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Corpus {
    Triples(Vec<DialogueTriple>),
    Politeness(Vec<StyledUtterance>),
    Lm(Vec<TokenSeq>),
}

impl Corpus {
    pub fn len(&self) -> usize {
        match self {
            Corpus::Triples(v) => v.len(),
            Corpus::Politeness(v) => v.len(),
            Corpus::Lm(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Serialize, Deserialize)]
struct TripleLine {
    u1: String,
    u2: String,
    u3: String,
}

#[derive(Serialize, Deserialize)]
struct PolitenessLine {
    text: String,
    label: u8,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut triples = Vec::new();
    let mut styled = Vec::new();
    let mut lm = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match format {
            CorpusFormat::TriplesJsonl => {
                let rec: TripleLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                let u3 = tokenize(&rec.u3);
                if u3.is_empty() {
                    return Err(parse_err(lineno, "empty u3".into()));
                }
                triples.push(DialogueTriple {
                    u1: tokenize(&rec.u1),
                    u2: tokenize(&rec.u2),
                    u3,
                });
            }
            CorpusFormat::PolitenessJsonl => {
                let rec: PolitenessLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                let label = Politeness::from_label(rec.label)
                    .ok_or_else(|| parse_err(lineno, format!("label must be 0 or 1, got {}", rec.label)))?;
                styled.push(StyledUtterance {
                    tokens: tokenize(&rec.text),
                    label,
                });
            }
            CorpusFormat::LmText => lm.push(tokenize(&line)),
        }
    }
    let corpus = match format {
        CorpusFormat::TriplesJsonl => Corpus::Triples(triples),
        CorpusFormat::PolitenessJsonl => Corpus::Politeness(styled),
        CorpusFormat::LmText => Corpus::Lm(lm),
    };
    log::info!("loaded {} records ({format}) from {}", corpus.len(), path.display());
    Ok(corpus)
}

pub fn load_triples(path: &Path) -> Result<Vec<DialogueTriple>> {
    match load_corpus(path, CorpusFormat::TriplesJsonl)? {
        Corpus::Triples(t) => Ok(t),
        _ => unreachable!(),
    }
}

pub fn load_politeness(path: &Path) -> Result<Vec<StyledUtterance>> {
    match load_corpus(path, CorpusFormat::PolitenessJsonl)? {
        Corpus::Politeness(t) => Ok(t),
        _ => unreachable!(),
    }
}

pub fn load_lm_text(path: &Path) -> Result<Vec<TokenSeq>> {
    match load_corpus(path, CorpusFormat::LmText)? {
        Corpus::Lm(t) => Ok(t),
        _ => unreachable!(),
    }
}

pub fn write_triples(path: &Path, triples: &[DialogueTriple]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in triples {
        let line = TripleLine {
            u1: detokenize(&t.u1),
            u2: detokenize(&t.u2),
            u3: detokenize(&t.u3),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_politeness(path: &Path, data: &[StyledUtterance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for u in data {
        let line = PolitenessLine {
            text: detokenize(&u.tokens),
            label: u.label.label(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lm_text(path: &Path, data: &[TokenSeq]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for u in data {
        writeln!(w, "{}", detokenize(u))?;
    }
    w.flush()?;
    Ok(())
}

/// A permutation of `items` determined only by `seed`.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    Rng::seed(seed).shuffle(&mut out);
    out
}

/// Splits into train/validation/test by ratio after a seeded shuffle.
pub fn split_by_ratio<T: Clone>(items: &[T], ratio: (usize, usize, usize), seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let data = shuffled(items, seed);
    let total = ratio.0 + ratio.1 + ratio.2;
    let n_train = data.len() * ratio.0 / total;
    let n_val = data.len() * ratio.1 / total;
    let test = data[n_train + n_val..].to_vec();
    let val = data[n_train..n_train + n_val].to_vec();
    let mut train = data;
    train.truncate(n_train);
    (train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(lines: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(lines.as_bytes()).unwrap();
        f
    }

    #[test]
    fn one_line_triples() {
        let f = write("{\"u1\": \"Hi there.\", \"u2\": \"Hello!\", \"u3\": \"How are you?\"}\n");
        let c = load_corpus(f.path(), CorpusFormat::TriplesJsonl).unwrap();
        let Corpus::Triples(t) = c else { panic!() };
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].u3, vec!["how", "are", "you", "?"]);
    }

    #[test]
    fn politeness_line() {
        let f = write("{\"text\":\"thanks .\",\"label\":1}\n");
        let c = load_politeness(f.path()).unwrap();
        assert_eq!(
            c,
            vec![StyledUtterance {
                tokens: vec!["thanks".into(), ".".into()],
                label: Politeness::Polite
            }]
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write("{\"text\":\"ok\",\"label\":0}\n{\"text\": broken}\n");
        match load_corpus(f.path(), CorpusFormat::PolitenessJsonl) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = write("{\"text\":\"ok\",\"label\":7}\n");
        assert!(matches!(load_politeness(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("csv".parse::<CorpusFormat>(), Err(Error::Usage(_))));
    }

    #[test]
    fn lm_text_lines() {
        let f = write("thank you .\n\nplease sit .\n");
        assert_eq!(load_lm_text(f.path()).unwrap().len(), 2);
    }

    #[test]
    fn writers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let triples = vec![DialogueTriple {
            u1: tokenize("what about the song ?"),
            u2: tokenize("pretty song ."),
            u3: tokenize("thanks , sir ."),
        }];
        write_triples(&p, &triples).unwrap();
        assert_eq!(load_triples(&p).unwrap(), triples);
    }

    #[test]
    fn shuffle_depends_only_on_seed() {
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(shuffled(&items, 4), shuffled(&items, 4));
        assert_ne!(shuffled(&items, 4), shuffled(&items, 5));
        let (a, b, c) = split_by_ratio(&items, (7, 1, 2), 1);
        assert_eq!((a.len(), b.len(), c.len()), (35, 5, 10));
    }
}
