//! JSON-over-HTTP inference over an immutable set of loaded checkpoints.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use courtesy::classifier::ClassifierModel;
use courtesy::corpus::{detokenize, tokenize, TokenSeq};
use courtesy::dialogue::{decode, encode_context, response_tokens, DecodeMode, Decoded, LanguageModel, Seq2seq};
use courtesy::retrieval::{generic10, TfIdfIndex};
use courtesy::style::{fusion_decode, lft_decode, FusionConfig, StyleStrategy};
use courtesy::{Checkpoint, LoadedModel, ModelKind, Rng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "unknown_model",
            message: message.into(),
        }
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: err.to_string(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError {
            status: r.status(),
            code: "invalid_request",
            message: r.body_text(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelInfo {
    pub id: String,
    pub kind: ModelKind,
    pub strategy: Option<StyleStrategy>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub model_id: String,
    pub history: Vec<String>,
    #[serde(default)]
    pub style_score: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub mode: Option<DecodeMode>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatResponse {
    pub response: String,
    pub tokens: Vec<String>,
    pub politeness_score: Option<f64>,
    pub saliency: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassifyResponse {
    pub polite_prob: f64,
    pub tokens: Vec<String>,
    pub saliency: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieveMode {
    Classifier,
    Generic10,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveRequest {
    pub history: Vec<String>,
    pub mode: RetrieveMode,
    #[serde(default)]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RetrieveResponse {
    pub response: String,
    pub tokens: Vec<String>,
    pub index: usize,
    pub similarity: f64,
    pub politeness_score: Option<f64>,
}

struct Entry {
    info: ModelInfo,
    model: LoadedModel,
}

/// Loaded checkpoints plus the first classifier and language model among
/// them, which score responses and drive fusion.
pub struct Registry {
    entries: Vec<Entry>,
    generic10: TfIdfIndex,
}

fn unique_id(stem: &str, taken: &mut HashSet<String>) -> String {
    let mut id = stem.to_string();
    let mut k = 2;
    while taken.contains(&id) {
        id = format!("{stem}-{k}");
        k += 1;
    }
    taken.insert(id.clone());
    id
}

impl Registry {
    pub fn new(models: Vec<(String, LoadedModel)>) -> anyhow::Result<Self> {
        if models.is_empty() {
            anyhow::bail!("no checkpoints to serve");
        }
        let mut taken = HashSet::new();
        let entries = models
            .into_iter()
            .map(|(name, model)| {
                let (kind, strategy) = match &model {
                    LoadedModel::Classifier(_) => (ModelKind::Classifier, None),
                    LoadedModel::Dialogue(_, s) => (ModelKind::Dialogue, Some(*s)),
                    LoadedModel::LanguageModel(_) => (ModelKind::LanguageModel, None),
                    LoadedModel::Retrieval(_) => (ModelKind::Retrieval, None),
                };
                Entry {
                    info: ModelInfo {
                        id: unique_id(&name, &mut taken),
                        kind,
                        strategy,
                    },
                    model,
                }
            })
            .collect();
        Ok(Registry {
            entries,
            generic10: TfIdfIndex::build(&generic10())?,
        })
    }

    /// Loads every checkpoint; ids are the file stems.
    pub fn load(paths: &[impl AsRef<Path>]) -> anyhow::Result<Self> {
        let mut models = Vec::with_capacity(paths.len());
        for p in paths {
            let p = p.as_ref();
            let ckpt = Checkpoint::load(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            models.push((name, ckpt.into_model()?));
        }
        Self::new(models)
    }

    pub fn models(&self) -> Vec<ModelInfo> {
        self.entries.iter().map(|e| e.info.clone()).collect()
    }

    pub fn classifier(&self) -> Option<&ClassifierModel> {
        self.entries.iter().find_map(|e| match &e.model {
            LoadedModel::Classifier(c) => Some(c),
            _ => None,
        })
    }

    pub fn language_model(&self) -> Option<&LanguageModel> {
        self.entries.iter().find_map(|e| match &e.model {
            LoadedModel::LanguageModel(m) => Some(m),
            _ => None,
        })
    }

    fn entry(&self, id: &str) -> Result<&Entry, ApiError> {
        self.entries
            .iter()
            .find(|e| e.info.id == id)
            .ok_or_else(|| ApiError::not_found(format!("no model with id {id:?}")))
    }

    fn score(&self, tokens: &TokenSeq) -> Result<(Option<f64>, Option<Vec<f64>>), ApiError> {
        match self.classifier() {
            Some(c) if !tokens.is_empty() => Ok((
                Some(c.score(tokens).map_err(ApiError::internal)?),
                Some(c.saliency(tokens).map_err(ApiError::internal)?),
            )),
            Some(_) => Ok((None, Some(Vec::new()))),
            None => Ok((None, None)),
        }
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ApiError> {
        let (u1, u2) = context(&req.history)?;
        check_unit("style_score", req.style_score)?;
        check_unit("alpha", req.alpha)?;
        let entry = self.entry(&req.model_id)?;
        let mode = req.mode.unwrap_or(DecodeMode::Greedy);
        let mut rng = Rng::seed(req.seed.unwrap_or(0));
        let tokens = match &entry.model {
            LoadedModel::Dialogue(model, strategy) => {
                self.generate(model, strategy, &u1, &u2, req.style_score, req.alpha, mode, &mut rng)?
            }
            LoadedModel::Retrieval(index) => {
                if req.style_score.is_some() || req.alpha.is_some() {
                    return Err(ApiError::bad_request(
                        "unsupported_parameter",
                        "retrieval models take neither style_score nor alpha",
                    ));
                }
                index.retrieve_context(&u1, &u2).map_err(bad_input)?.response.clone()
            }
            _ => {
                return Err(ApiError::bad_request(
                    "not_a_dialogue_model",
                    format!("model {:?} is a {} checkpoint", entry.info.id, entry.info.kind),
                ))
            }
        };
        let (politeness_score, saliency) = self.score(&tokens)?;
        Ok(ChatResponse {
            response: detokenize(&tokens),
            tokens,
            politeness_score,
            saliency,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn generate(
        &self,
        model: &Seq2seq,
        strategy: &StyleStrategy,
        u1: &TokenSeq,
        u2: &TokenSeq,
        style_score: Option<f64>,
        alpha: Option<f64>,
        mode: DecodeMode,
        rng: &mut Rng,
    ) -> Result<TokenSeq, ApiError> {
        let source = encode_context(&model.vocab, u1, u2, model.config.max_len);
        let sources = [source.as_slice()];
        let max_len = model.config.max_len;
        let decoded = match *strategy {
            StyleStrategy::Lft {
                mode: lft_mode,
                target_score,
            } => {
                if alpha.is_some() {
                    return Err(ApiError::bad_request(
                        "unsupported_parameter",
                        "label-fine-tuned models take style_score, not alpha",
                    ));
                }
                let score = style_score.unwrap_or(target_score);
                lft_decode(model, &sources, score, lft_mode, mode, max_len, rng).map_err(ApiError::internal)?
            }
            _ if style_score.is_some() => {
                return Err(ApiError::bad_request(
                    "unsupported_parameter",
                    "style_score applies only to label-fine-tuned models",
                ))
            }
            StyleStrategy::Fusion { alpha: default } => {
                self.fuse(model, &sources, alpha.unwrap_or(default), mode, rng)?
            }
            _ => match alpha {
                Some(a) => self.fuse(model, &sources, a, mode, rng)?,
                None => decode(model, &sources, None, mode, max_len, rng).map_err(ApiError::internal)?,
            },
        };
        Ok(response_tokens(&model.vocab, &decoded[0].tokens))
    }

    fn fuse(
        &self,
        model: &Seq2seq,
        sources: &[&[usize]],
        alpha: f64,
        mode: DecodeMode,
        rng: &mut Rng,
    ) -> Result<Vec<Decoded>, ApiError> {
        let lm = self
            .language_model()
            .ok_or_else(|| ApiError::bad_request("no_language_model", "fusion needs a loaded language model"))?;
        if lm.vocab != model.vocab {
            return Err(ApiError::bad_request(
                "vocab_mismatch",
                "the loaded language model and dialogue model have different vocabularies",
            ));
        }
        fusion_decode(
            model,
            lm,
            sources,
            &FusionConfig { alpha },
            mode,
            model.config.max_len,
            rng,
        )
        .map_err(ApiError::internal)
    }

    pub fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, ApiError> {
        let classifier = self
            .classifier()
            .ok_or_else(|| ApiError::bad_request("no_classifier", "no classifier checkpoint is loaded"))?;
        let tokens = tokenize(&req.text);
        if tokens.is_empty() {
            return Err(ApiError::bad_request("empty_text", "text has no tokens"));
        }
        Ok(ClassifyResponse {
            polite_prob: classifier.score(&tokens).map_err(ApiError::internal)?,
            saliency: classifier.saliency(&tokens).map_err(ApiError::internal)?,
            tokens,
        })
    }

    pub fn retrieve(&self, req: &RetrieveRequest) -> Result<RetrieveResponse, ApiError> {
        let (u1, u2) = context(&req.history)?;
        let index = match (req.mode, &req.model_id) {
            (RetrieveMode::Generic10, None) => &self.generic10,
            (RetrieveMode::Generic10, Some(_)) => {
                return Err(ApiError::bad_request(
                    "unsupported_parameter",
                    "generic10 mode takes no model_id",
                ))
            }
            (RetrieveMode::Classifier, Some(id)) => match &self.entry(id)?.model {
                LoadedModel::Retrieval(index) => index,
                _ => {
                    return Err(ApiError::bad_request(
                        "not_a_retrieval_model",
                        format!("model {id:?} is not a retrieval index"),
                    ))
                }
            },
            (RetrieveMode::Classifier, None) => self
                .entries
                .iter()
                .find_map(|e| match &e.model {
                    LoadedModel::Retrieval(index) => Some(index),
                    _ => None,
                })
                .ok_or_else(|| ApiError::bad_request("no_retrieval_index", "no retrieval checkpoint is loaded"))?,
        };
        let hit = index.retrieve_context(&u1, &u2).map_err(bad_input)?;
        let tokens = hit.response.clone();
        let (politeness_score, _) = self.score(&tokens)?;
        Ok(RetrieveResponse {
            response: detokenize(&tokens),
            index: hit.index,
            similarity: hit.similarity,
            politeness_score,
            tokens,
        })
    }
}

fn bad_input(e: courtesy::Error) -> ApiError {
    ApiError::bad_request("invalid_request", e.to_string())
}

fn check_unit(name: &str, value: Option<f64>) -> Result<(), ApiError> {
    match value {
        Some(v) if !(0.0..=1.0).contains(&v) => Err(ApiError::bad_request(
            "out_of_range",
            format!("{name} must lie in [0, 1], got {v}"),
        )),
        _ => Ok(()),
    }
}

/// The last two turns as `(u1, u2)`; a single turn gets an empty `u1`.
fn context(history: &[String]) -> Result<(TokenSeq, TokenSeq), ApiError> {
    let Some(last) = history.last() else {
        return Err(ApiError::bad_request(
            "empty_history",
            "history must contain at least one turn",
        ));
    };
    let u2 = tokenize(last);
    let u1 = if history.len() >= 2 {
        tokenize(&history[history.len() - 2])
    } else {
        Vec::new()
    };
    if u1.is_empty() && u2.is_empty() {
        return Err(ApiError::bad_request("empty_history", "history has no tokens"));
    }
    Ok((u1, u2))
}

async fn blocking<T, F>(registry: Arc<Registry>, f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Registry) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&registry))
        .await
        .map_err(ApiError::internal)?
        .map(Json)
}

async fn models(State(r): State<Arc<Registry>>) -> Json<Vec<ModelInfo>> {
    Json(r.models())
}

async fn chat(
    State(r): State<Arc<Registry>>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatResponse>, ApiError> {
    let Json(req) = body?;
    blocking(r, move |r| r.chat(&req)).await
}

async fn classify(
    State(r): State<Arc<Registry>>,
    body: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Json<ClassifyResponse>, ApiError> {
    let Json(req) = body?;
    blocking(r, move |r| r.classify(&req)).await
}

async fn retrieve(
    State(r): State<Arc<Registry>>,
    body: Result<Json<RetrieveRequest>, JsonRejection>,
) -> Result<Json<RetrieveResponse>, ApiError> {
    let Json(req) = body?;
    blocking(r, move |r| r.retrieve(&req)).await
}

pub fn app(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/api/models", get(models))
        .route("/api/chat", post(chat))
        .route("/api/classify", post(classify))
        .route("/api/retrieve", post(retrieve))
        .with_state(registry)
}

pub async fn serve(registry: Registry, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(Arc::new(registry))).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_takes_last_two_turns() {
        let h: Vec<String> = ["a .", "b .", "c ."].iter().map(|s| s.to_string()).collect();
        let (u1, u2) = context(&h).unwrap();
        assert_eq!(u1, tokenize("b ."));
        assert_eq!(u2, tokenize("c ."));
        let (u1, _) = context(&h[2..]).unwrap();
        assert!(u1.is_empty());
        assert_eq!(context(&[]).unwrap_err().code, "empty_history");
        assert_eq!(context(&[" ".into()]).unwrap_err().code, "empty_history");
    }

    #[test]
    fn unit_range_is_inclusive() {
        assert!(check_unit("x", None).is_ok());
        assert!(check_unit("x", Some(0.0)).is_ok());
        assert!(check_unit("x", Some(1.0)).is_ok());
        assert_eq!(check_unit("x", Some(1.01)).unwrap_err().code, "out_of_range");
        assert_eq!(
            check_unit("x", Some(f64::NAN)).unwrap_err().status,
            StatusCode::BAD_REQUEST
        );
    }

    #[test]
    fn ids_are_deduplicated() {
        let mut taken = HashSet::new();
        assert_eq!(unique_id("m", &mut taken), "m");
        assert_eq!(unique_id("m", &mut taken), "m-2");
        assert_eq!(unique_id("m", &mut taken), "m-3");
    }
}
