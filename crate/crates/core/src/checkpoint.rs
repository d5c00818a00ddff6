//! Single-file model container: magic, version, JSON metadata and named
//! little-endian `f32` tensors.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{ClassifierConfig, ClassifierModel};
use crate::corpus::{TokenSeq, Vocab};
use crate::dialogue::{DialogueConfig, LanguageModel, LmConfig, Seq2seq};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::retrieval::TfIdfIndex;
use crate::style::StyleStrategy;

pub const MAGIC: [u8; 4] = *b"PDLG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Classifier,
    Dialogue,
    LanguageModel,
    Retrieval,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Classifier => "classifier",
            ModelKind::Dialogue => "dialogue",
            ModelKind::LanguageModel => "language-model",
            ModelKind::Retrieval => "retrieval",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub kind: ModelKind,
    pub seed: u64,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vocab>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StyleStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// Kind-specific payload, such as retrieval candidates.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub extra: Value,
}

impl Metadata {
    pub fn new(kind: ModelKind, seed: u64, config: Value) -> Self {
        Metadata {
            kind,
            seed,
            config,
            vocab: None,
            strategy: None,
            config_hash: None,
            extra: Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Metadata,
    pub tensors: Vec<(String, Tensor)>,
}

/// Any model a checkpoint can hold.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Classifier(ClassifierModel),
    Dialogue(Seq2seq, StyleStrategy),
    LanguageModel(LanguageModel),
    Retrieval(TfIdfIndex),
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflows"))
    }
}

fn tensor_section(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata)?;
        let mut out = Vec::with_capacity(16 + meta.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&tensor_section(&self.tensors));
        Ok(out)
    }

    /// The serialized tensors alone, independent of metadata.
    pub fn tensor_bytes(&self) -> Vec<u8> {
        tensor_section(&self.tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = r.len()?;
        let metadata: Metadata =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| corrupt(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt(format!("tensor {name}: shape overflows")))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { metadata, tensors })
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn named(store: &crate::numerics::ParamStore) -> Vec<(String, Tensor)> {
        store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    fn refs(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    fn vocab(&self) -> Result<Vocab> {
        self.metadata
            .vocab
            .clone()
            .ok_or_else(|| corrupt("metadata lacks a vocabulary"))
    }

    fn expect(&self, kind: ModelKind) -> Result<()> {
        if self.metadata.kind != kind {
            return Err(corrupt(format!(
                "expected a {kind} checkpoint, found {}",
                self.metadata.kind
            )));
        }
        Ok(())
    }

    fn config<C: serde::de::DeserializeOwned>(&self) -> Result<C> {
        serde_json::from_value(self.metadata.config.clone()).map_err(|e| corrupt(format!("config: {e}")))
    }

    pub fn from_classifier(model: &ClassifierModel, seed: u64) -> Result<Self> {
        let mut metadata = Metadata::new(ModelKind::Classifier, seed, serde_json::to_value(&model.config)?);
        metadata.vocab = Some(model.vocab.clone());
        Ok(Checkpoint {
            metadata,
            tensors: Self::named(&model.params),
        })
    }

    pub fn from_seq2seq(model: &Seq2seq, seed: u64, strategy: StyleStrategy) -> Result<Self> {
        let mut metadata = Metadata::new(ModelKind::Dialogue, seed, serde_json::to_value(&model.config)?);
        metadata.vocab = Some(model.vocab.clone());
        metadata.strategy = Some(strategy);
        Ok(Checkpoint {
            metadata,
            tensors: Self::named(&model.params),
        })
    }

    pub fn from_language_model(model: &LanguageModel, seed: u64) -> Result<Self> {
        let mut metadata = Metadata::new(ModelKind::LanguageModel, seed, serde_json::to_value(&model.config)?);
        metadata.vocab = Some(model.vocab.clone());
        Ok(Checkpoint {
            metadata,
            tensors: Self::named(&model.params),
        })
    }

    /// Stores the candidates; the index is rebuilt deterministically on load.
    pub fn from_index(index: &TfIdfIndex, seed: u64, threshold: Option<f64>) -> Result<Self> {
        let mut metadata = Metadata::new(
            ModelKind::Retrieval,
            seed,
            serde_json::json!({ "threshold": threshold }),
        );
        metadata.extra = serde_json::json!({ "candidates": index.candidates() });
        Ok(Checkpoint {
            metadata,
            tensors: Vec::new(),
        })
    }

    pub fn into_classifier(self) -> Result<ClassifierModel> {
        self.expect(ModelKind::Classifier)?;
        let config: ClassifierConfig = self.config()?;
        ClassifierModel::from_tensors(config, self.vocab()?, self.refs())
    }

    pub fn into_seq2seq(self) -> Result<(Seq2seq, StyleStrategy)> {
        self.expect(ModelKind::Dialogue)?;
        let config: DialogueConfig = self.config()?;
        let strategy = self.metadata.strategy.unwrap_or(StyleStrategy::Base);
        Ok((Seq2seq::from_tensors(config, self.vocab()?, self.refs())?, strategy))
    }

    pub fn into_language_model(self) -> Result<LanguageModel> {
        self.expect(ModelKind::LanguageModel)?;
        let config: LmConfig = self.config()?;
        LanguageModel::from_tensors(config, self.vocab()?, self.refs())
    }

    pub fn into_index(self) -> Result<TfIdfIndex> {
        self.expect(ModelKind::Retrieval)?;
        let candidates: Vec<TokenSeq> = serde_json::from_value(self.metadata.extra["candidates"].clone())
            .map_err(|e| corrupt(format!("retrieval candidates: {e}")))?;
        TfIdfIndex::build(&candidates)
    }

    pub fn into_model(self) -> Result<LoadedModel> {
        Ok(match self.metadata.kind {
            ModelKind::Classifier => LoadedModel::Classifier(self.into_classifier()?),
            ModelKind::Dialogue => {
                let (m, s) = self.into_seq2seq()?;
                LoadedModel::Dialogue(m, s)
            }
            ModelKind::LanguageModel => LoadedModel::LanguageModel(self.into_language_model()?),
            ModelKind::Retrieval => LoadedModel::Retrieval(self.into_index()?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::dialogue::{decode, DecodeMode};
    use crate::numerics::Rng;

    fn vocab() -> Vocab {
        let words = tokenize("the cat sat on a mat , thanks please .");
        Vocab::build([&words[..]], 100)
    }

    fn seq2seq() -> Seq2seq {
        let cfg = DialogueConfig {
            embed_dim: 4,
            hidden: 3,
            attention: 3,
            encoder_layers: 1,
            decoder_layers: 2,
            ..DialogueConfig::default()
        };
        Seq2seq::new(cfg, vocab(), None, &mut Rng::seed(1)).unwrap()
    }

    #[test]
    fn dialogue_round_trip_is_bitwise_and_decodes_identically() {
        let m = seq2seq();
        let ck = Checkpoint::from_seq2seq(&m, 7, StyleStrategy::Fusion { alpha: 0.5 }).unwrap();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let (loaded, strategy) = back.into_seq2seq().unwrap();
        assert_eq!(strategy, StyleStrategy::Fusion { alpha: 0.5 });
        assert_eq!(loaded.params, m.params);
        let src = m.vocab.encode(&tokenize("the cat sat"));
        let a = decode(&m, &[&src], None, DecodeMode::Greedy, 8, &mut Rng::seed(0)).unwrap();
        let b = decode(&loaded, &[&src], None, DecodeMode::Greedy, 8, &mut Rng::seed(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip_for_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ccfg = ClassifierConfig {
            embed_dim: 4,
            hidden: 3,
            widths: vec![2],
            filters: 2,
            ..ClassifierConfig::default()
        };
        let c = ClassifierModel::new(ccfg, vocab(), None, &mut Rng::seed(2)).unwrap();
        Checkpoint::from_classifier(&c, 1).unwrap().save(&path).unwrap();
        let LoadedModel::Classifier(back) = Checkpoint::load(&path).unwrap().into_model().unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.params, c.params);

        let lcfg = LmConfig {
            embed_dim: 4,
            hidden: 3,
            ..LmConfig::default()
        };
        let lm = LanguageModel::new(lcfg, vocab(), None, &mut Rng::seed(3)).unwrap();
        Checkpoint::from_language_model(&lm, 1).unwrap().save(&path).unwrap();
        assert_eq!(
            Checkpoint::load(&path).unwrap().into_language_model().unwrap().params,
            lm.params
        );

        let index = TfIdfIndex::build(&[tokenize("thanks ."), tokenize("a cat")]).unwrap();
        Checkpoint::from_index(&index, 1, Some(0.8))
            .unwrap()
            .save(&path)
            .unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap().into_index().unwrap(), index);
    }

    #[test]
    fn rejects_bad_magic_version_kind_and_truncation() {
        let ck = Checkpoint::from_seq2seq(&seq2seq(), 7, StyleStrategy::Base).unwrap();
        let bytes = ck.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        let err = Checkpoint::from_bytes(&bad).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
        assert!(ck.into_classifier().is_err());
    }

    #[test]
    fn header_layout_is_fixed() {
        let ck = Checkpoint {
            metadata: Metadata::new(ModelKind::Retrieval, 3, Value::Null),
            tensors: vec![("w".into(), Tensor::matrix(1, 2, vec![1.0, -2.0]).unwrap())],
        };
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"PDLG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let section = &bytes[16 + meta_len..];
        let mut expected = Vec::new();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(b"w");
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(section, expected.as_slice());
        assert_eq!(ck.tensor_bytes(), expected);
    }
}
