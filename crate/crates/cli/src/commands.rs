use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use courtesy::classifier::{filter_polite, train_classifier, ClassifierModel};
use courtesy::config::CONFIG_ENV;
use courtesy::corpus::{
    detokenize, gen_synthetic_mix, load_corpus, load_pretrained_embeddings, split_by_ratio, tokenize, write_politeness,
    write_triples, Corpus, CorpusFormat, DialogueTriple, StyledUtterance, TokenSeq, Vocab,
};
use courtesy::dialogue::{
    decode, encode_context, load_profanity, make_examples, perplexity, response_tokens, train_dialogue, train_lm, wer,
    DecodeMode, PerplexityScope, Seq2seq, TokenMask, TrainExample,
};
use courtesy::evalkit::{bleu4, EvalReport, ModelScores, ReportMetadata, Scored};
use courtesy::retrieval::{generic10, TfIdfIndex};
use courtesy::style::{fusion_decode, lft_decode, lft_prepare, train_rl, FusionConfig, StyleStrategy};
use courtesy::{Checkpoint, LoadedModel, Rng, RunConfig, Tensor};
use sha2::{Digest, Sha256};

use crate::args::*;
use crate::service::{ChatRequest, Registry};

/// A flag or configuration problem; the process exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Resolved configuration shared by every subcommand.
pub struct Run {
    pub config: RunConfig,
    pub config_hash: String,
}

/// SHA-256 of the configuration's canonical JSON form.
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

impl Run {
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let loaded = match path {
            Some(p) => RunConfig::load(p),
            None => RunConfig::from_env(),
        };
        let mut config = loaded.map_err(|e| match path {
            Some(_) => usage(e.to_string()),
            None => usage(format!("{CONFIG_ENV}: {e}")),
        })?;
        if let Some(s) = seed {
            config.seed = s;
        }
        Ok(Self::from_config(config))
    }

    pub fn from_config(config: RunConfig) -> Self {
        let config_hash = config_hash(&config);
        Run { config, config_hash }
    }

    fn validate(&self) -> Result<()> {
        self.config.validate().map_err(|e| usage(e.to_string()))
    }

    fn rng(&self) -> Rng {
        Rng::seed(self.config.seed)
    }

    fn profanity(&self) -> Result<Vec<String>> {
        match &self.config.paths.profanity {
            Some(p) => Ok(load_profanity(p).with_context(|| format!("profanity list {}", p.display()))?),
            None => Ok(self.config.dialogue.profanity.clone()),
        }
    }

    fn embeddings(&self, vocab: &Vocab, dim: usize, rng: &Rng) -> Result<Option<Tensor>> {
        match &self.config.paths.embeddings {
            Some(p) => Ok(Some(load_pretrained_embeddings(Some(p), vocab, dim, &mut rng.fork(4))?)),
            None => Ok(None),
        }
    }

    fn save(&self, mut ckpt: Checkpoint, out: &Path) -> Result<()> {
        ckpt.metadata.config_hash = Some(self.config_hash.clone());
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        ckpt.save(out).with_context(|| format!("writing {}", out.display()))?;
        log::info!("wrote {}", out.display());
        Ok(())
    }
}

pub fn dispatch(run: &mut Run, command: Command) -> Result<()> {
    match command {
        Command::GenSynth(a) => gen_synth(run, a),
        Command::TrainClassifier(a) => train_classifier_cmd(run, a),
        Command::TrainDialogue(a) => train_dialogue_cmd(run, a),
        Command::TrainLm(a) => train_lm_cmd(run, a),
        Command::TrainLft(a) => train_lft_cmd(run, a),
        Command::TrainRl(a) => train_rl_cmd(run, a),
        Command::Evaluate(a) => evaluate(run, a),
        Command::RetrieveBuild(a) => retrieve_build(run, a),
        Command::Chat(a) => chat(run, a),
        Command::Saliency(a) => saliency(run, a),
        Command::Serve(a) => serve(run, a),
    }
}

/// Applies flag overrides, validates and logs the effective configuration.
fn finalize(run: &mut Run, edit: impl FnOnce(&mut RunConfig)) -> Result<()> {
    edit(&mut run.config);
    run.config_hash = config_hash(&run.config);
    run.validate()?;
    log::info!("seed {} config {}", run.config.seed, run.config_hash);
    Ok(())
}

fn detect_format(path: &Path) -> Result<CorpusFormat> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        return Ok(match serde_json::from_str::<serde_json::Value>(line) {
            Ok(v) if v.get("u1").is_some() => CorpusFormat::TriplesJsonl,
            Ok(v) if v.get("label").is_some() => CorpusFormat::PolitenessJsonl,
            _ => CorpusFormat::LmText,
        });
    }
    bail!("{} is empty", path.display())
}

fn load_any(path: &Path) -> Result<Corpus> {
    Ok(load_corpus(path, detect_format(path)?)?)
}

fn load_as(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let found = detect_format(path)?;
    if found != format {
        return Err(usage(format!("{} holds {found}, expected {format}", path.display())));
    }
    Ok(load_corpus(path, format)?)
}

fn triples(path: &Path) -> Result<Vec<DialogueTriple>> {
    match load_as(path, CorpusFormat::TriplesJsonl)? {
        Corpus::Triples(t) => Ok(t),
        _ => unreachable!("format checked"),
    }
}

fn labeled(path: &Path) -> Result<Vec<StyledUtterance>> {
    match load_as(path, CorpusFormat::PolitenessJsonl)? {
        Corpus::Politeness(p) => Ok(p),
        _ => unreachable!("format checked"),
    }
}

/// Every utterance of a corpus; triples contribute all three turns.
fn utterances(corpus: Corpus) -> Vec<TokenSeq> {
    match corpus {
        Corpus::Triples(t) => t.into_iter().flat_map(|t| [t.u1, t.u2, t.u3]).collect(),
        Corpus::Politeness(p) => p.into_iter().map(|u| u.tokens).collect(),
        Corpus::Lm(l) => l,
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    Ok(load_checkpoint(path)?.into_classifier()?)
}

fn vocab(run: &Run, args: &VocabArgs, own: &[TokenSeq]) -> Result<Vocab> {
    if let Some(p) = &args.vocab_from {
        return load_checkpoint(p)?
            .metadata
            .vocab
            .with_context(|| format!("{} stores no vocabulary", p.display()));
    }
    let mut all: Vec<TokenSeq> = own.to_vec();
    for p in &args.vocab_data {
        all.extend(utterances(load_any(p)?));
    }
    Ok(Vocab::build(all.iter().map(Vec::as_slice), run.config.vocab.max_tokens))
}

fn gen_synth(run: &mut Run, a: GenSynthArgs) -> Result<()> {
    finalize(run, |c| {
        if let Some(n) = a.n {
            c.synth.n = n;
        }
    })?;
    let s = &run.config.synth;
    let corpus = gen_synthetic_mix(&s.markers, s.mix, s.grammar_seed, s.n, &mut run.rng())?;
    let (train, dev, test) = split_by_ratio(&corpus.triples, (8, 1, 1), run.config.seed);
    fs::create_dir_all(&a.out)?;
    write_triples(&a.out.join("train.jsonl"), &train)?;
    write_triples(&a.out.join("dev.jsonl"), &dev)?;
    write_triples(&a.out.join("test.jsonl"), &test)?;
    write_politeness(&a.out.join("politeness.jsonl"), &corpus.politeness)?;
    log::info!(
        "wrote {} train, {} dev, {} test triples and {} labeled utterances to {}",
        train.len(),
        dev.len(),
        test.len(),
        corpus.politeness.len(),
        a.out.display()
    );
    Ok(())
}

fn train_classifier_cmd(run: &mut Run, a: TrainClassifierArgs) -> Result<()> {
    finalize(run, |c| {
        if let Some(e) = a.epochs {
            c.classifier.epochs = e;
        }
    })?;
    let data = labeled(&a.data)?;
    let own: Vec<TokenSeq> = data.iter().map(|u| u.tokens.clone()).collect();
    let vocab = vocab(run, &a.vocab, &own)?;
    let rng = run.rng();
    let emb = run.embeddings(&vocab, run.config.classifier.embed_dim, &rng)?;
    let model = train_classifier(&data, vocab, run.config.classifier.clone(), emb, &mut rng.clone())?;
    log::info!("training accuracy {:.4}", model.accuracy(&data)?);
    run.save(Checkpoint::from_classifier(&model, run.config.seed)?, &a.out)
}

/// Loads triples, builds the vocabulary and encodes training examples.
fn dialogue_data(run: &Run, a: &DialogueTrainArgs) -> Result<(Vocab, Vec<TrainExample>, TokenMask)> {
    let data = triples(&a.data)?;
    let vocab = match &a.init {
        Some(p) => load_checkpoint(p)?
            .metadata
            .vocab
            .context("init checkpoint stores no vocabulary")?,
        None => {
            let own: Vec<TokenSeq> = data
                .iter()
                .flat_map(|t| [t.u1.clone(), t.u2.clone(), t.u3.clone()])
                .collect();
            vocab(run, &a.vocab, &own)?
        }
    };
    let mask = TokenMask::new(&vocab, &run.profanity()?);
    let examples = make_examples(&data, &vocab, run.config.dialogue.max_len, &mask, a.all_turns)?;
    log::info!("{} training examples, vocabulary {}", examples.len(), vocab.len());
    Ok((vocab, examples, mask))
}

fn dialogue_model(run: &Run, a: &DialogueTrainArgs, vocab: Vocab, rng: &Rng) -> Result<Seq2seq> {
    if let Some(p) = &a.init {
        let (model, _) = load_checkpoint(p)?.into_seq2seq()?;
        return Ok(model);
    }
    let mut cfg = run.config.dialogue.clone();
    cfg.profanity = run.profanity()?;
    let emb = run.embeddings(&vocab, cfg.embed_dim, rng)?;
    Ok(Seq2seq::new(cfg, vocab, emb, &mut rng.fork(0))?)
}

fn override_epochs(c: &mut RunConfig, epochs: Option<usize>) {
    if let Some(e) = epochs {
        c.train.epochs = e;
    }
}

fn train_dialogue_cmd(run: &mut Run, a: TrainDialogueArgs) -> Result<()> {
    let a = a.common;
    finalize(run, |c| override_epochs(c, a.epochs))?;
    let (vocab, examples, _) = dialogue_data(run, &a)?;
    let mut rng = run.rng();
    let mut model = dialogue_model(run, &a, vocab, &rng)?;
    let log = train_dialogue(&mut model, &examples, &run.config.train, &mut rng)?;
    log::info!(
        "{} steps, final loss {:.4}",
        log.steps,
        log.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    run.save(
        Checkpoint::from_seq2seq(&model, run.config.seed, StyleStrategy::Base)?,
        &a.out,
    )
}

fn train_lm_cmd(run: &mut Run, a: TrainLmArgs) -> Result<()> {
    finalize(run, |c| {
        override_epochs(c, a.epochs);
        if let Some(t) = a.threshold {
            c.retrieval.threshold = t;
        }
    })?;
    let mut corpus = utterances(load_any(&a.data)?);
    corpus.retain(|u| !u.is_empty());
    if let Some(p) = &a.classifier {
        corpus = filter_polite(&load_classifier(p)?, &corpus, run.config.retrieval.threshold)?;
        log::info!("{} utterances pass the politeness filter", corpus.len());
    }
    let vocab = vocab(run, &a.vocab, &corpus)?;
    let mut cfg = run.config.lm.clone();
    cfg.profanity = run.profanity()?;
    let rng = run.rng();
    let emb = run.embeddings(&vocab, cfg.embed_dim, &rng)?;
    let (model, log) = train_lm(&corpus, vocab, cfg, &run.config.train, emb, &mut rng.clone())?;
    log::info!(
        "best dev perplexity {:.3} at epoch {}",
        log.dev_perplexity[log.best_epoch],
        log.best_epoch + 1
    );
    run.save(Checkpoint::from_language_model(&model, run.config.seed)?, &a.out)
}

fn train_lft_cmd(run: &mut Run, a: TrainLftArgs) -> Result<()> {
    finalize(run, |c| {
        override_epochs(c, a.common.epochs);
        if let Some(m) = a.mode {
            c.lft.mode = m;
        }
    })?;
    let classifier = load_classifier(&a.classifier)?;
    let (vocab, examples, _) = dialogue_data(run, &a.common)?;
    let lft = run.config.lft;
    let examples = lft_prepare(&examples, &classifier, &vocab, lft.mode)?;
    let mut rng = run.rng();
    let mut model = dialogue_model(run, &a.common, vocab, &rng)?;
    let log = train_dialogue(&mut model, &examples, &run.config.train, &mut rng)?;
    log::info!(
        "{} steps, final loss {:.4}",
        log.steps,
        log.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    let strategy = StyleStrategy::Lft {
        mode: lft.mode,
        target_score: lft.target_score,
    };
    run.save(
        Checkpoint::from_seq2seq(&model, run.config.seed, strategy)?,
        &a.common.out,
    )
}

fn train_rl_cmd(run: &mut Run, a: TrainRlArgs) -> Result<()> {
    finalize(run, |c| {
        override_epochs(c, a.common.epochs);
        if let Some(b) = a.beta {
            c.rl.beta = b;
        }
        if let Some(b) = a.baseline {
            c.rl.baseline = b;
        }
        if let Some(s) = a.sign {
            c.rl.sign = s;
        }
    })?;
    let classifier = load_classifier(&a.classifier)?;
    let (vocab, examples, _) = dialogue_data(run, &a.common)?;
    let mut rng = run.rng();
    let mut model = dialogue_model(run, &a.common, vocab, &rng)?;
    let rl = run.config.rl;
    let log = train_rl(&mut model, &examples, &classifier, &rl, &run.config.train, &mut rng)?;
    if let (Some(first), Some(last)) = (log.step_rewards.first(), log.step_rewards.last()) {
        log::info!("{} steps, sampled reward {first:.3} -> {last:.3}", log.train.steps);
    }
    let strategy = StyleStrategy::Rl {
        beta: rl.beta,
        baseline: rl.baseline,
        sign: rl.sign,
    };
    run.save(
        Checkpoint::from_seq2seq(&model, run.config.seed, strategy)?,
        &a.common.out,
    )
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

struct Generated {
    name: String,
    checkpoint: PathBuf,
    responses: Vec<TokenSeq>,
    model: Option<Seq2seq>,
}

fn dump(dir: &Path, g: &Generated, test: &[DialogueTriple]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{}.jsonl", g.name)))?);
    for (t, r) in test.iter().zip(&g.responses) {
        let source = format!("{} <eou> {}", detokenize(&t.u1), detokenize(&t.u2));
        serde_json::to_writer(
            &mut w,
            &serde_json::json!({ "source": source, "response": detokenize(r) }),
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(run: &mut Run, a: EvaluateArgs) -> Result<()> {
    finalize(run, |c| {
        if let Some(alpha) = a.alpha {
            c.fusion.alpha = alpha;
        }
    })?;
    if let Some(s) = a.style_score {
        if !(0.0..=1.0).contains(&s) {
            return Err(usage(format!("--style-score {s} outside [0, 1]")));
        }
    }
    if a.alpha.is_some() && a.lm.is_none() {
        return Err(usage("--alpha needs --lm"));
    }
    let test = triples(&a.test)?;
    if test.is_empty() {
        bail!("{} holds no triples", a.test.display());
    }
    let classifier = a.classifier.as_deref().map(load_classifier).transpose()?;
    let lm =
        a.lm.as_deref()
            .map(|p| Ok::<_, anyhow::Error>(load_checkpoint(p)?.into_language_model()?))
            .transpose()?;
    let rng = run.rng();

    let mut generated = Vec::new();
    for path in &a.models {
        let name = stem(path);
        match load_checkpoint(path)?.into_model()? {
            LoadedModel::Dialogue(model, strategy) => {
                let sources: Vec<Vec<usize>> = test
                    .iter()
                    .map(|t| encode_context(&model.vocab, &t.u1, &t.u2, model.config.max_len))
                    .collect();
                let refs: Vec<&[usize]> = sources.iter().map(Vec::as_slice).collect();
                let max_len = model.config.max_len;
                let greedy = DecodeMode::Greedy;
                let mut r = rng.clone();
                let fuse = |alpha: f64, r: &mut Rng| -> Result<_> {
                    let lm = lm.as_ref().with_context(|| format!("{name} needs --lm for fusion"))?;
                    Ok(fusion_decode(
                        &model,
                        lm,
                        &refs,
                        &FusionConfig { alpha },
                        greedy,
                        max_len,
                        r,
                    )?)
                };
                let decoded = match strategy {
                    StyleStrategy::Lft { mode, target_score } => {
                        let score = a.style_score.unwrap_or(target_score);
                        lft_decode(&model, &refs, score, mode, greedy, max_len, &mut r)?
                    }
                    StyleStrategy::Fusion { alpha } => fuse(alpha, &mut r)?,
                    _ => decode(&model, &refs, None, greedy, max_len, &mut r)?,
                };
                let texts = |d: Vec<courtesy::dialogue::Decoded>| -> Vec<TokenSeq> {
                    d.iter().map(|d| response_tokens(&model.vocab, &d.tokens)).collect()
                };
                let unlabeled = !matches!(strategy, StyleStrategy::Lft { .. } | StyleStrategy::Fusion { .. });
                generated.push(Generated {
                    name: name.clone(),
                    checkpoint: path.clone(),
                    responses: texts(decoded),
                    model: unlabeled.then(|| model.clone()),
                });
                if let (Some(alpha), StyleStrategy::Base) = (a.alpha, strategy) {
                    let fused = fuse(alpha, &mut r)?;
                    generated.push(Generated {
                        name: format!("{name}+fusion{alpha}"),
                        checkpoint: path.clone(),
                        responses: texts(fused),
                        model: None,
                    });
                }
            }
            LoadedModel::Retrieval(index) => {
                let responses = test
                    .iter()
                    .map(|t| Ok(index.retrieve_context(&t.u1, &t.u2)?.response.clone()))
                    .collect::<courtesy::Result<Vec<_>>>()?;
                generated.push(Generated {
                    name,
                    checkpoint: path.clone(),
                    responses,
                    model: None,
                });
            }
            other => {
                let kind = match other {
                    LoadedModel::Classifier(_) => "classifier",
                    _ => "language-model",
                };
                return Err(usage(format!(
                    "{} is a {kind} checkpoint, not a response model",
                    path.display()
                )));
            }
        }
    }

    let references: Vec<TokenSeq> = test.iter().map(|t| t.u3.clone()).collect();
    let mut report = EvalReport::new(ReportMetadata {
        seed: run.config.seed,
        dataset: a.test.display().to_string(),
        config_hash: Some(run.config_hash.clone()),
    });
    for g in &generated {
        let scored: Vec<&TokenSeq> = g.responses.iter().filter(|r| !r.is_empty()).collect();
        let politeness = match &classifier {
            Some(c) if !scored.is_empty() => {
                let scores = c.score_batch(&scored.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
                Some(Scored::new(
                    scores.iter().sum::<f64>() / scores.len() as f64,
                    scores.len(),
                ))
            }
            _ => None,
        };
        let mut row = ModelScores {
            name: g.name.clone(),
            checkpoint: Some(g.checkpoint.display().to_string()),
            politeness,
            bleu4: Some(Scored::new(bleu4(&g.responses, &references)?, test.len())),
            ..ModelScores::default()
        };
        if let Some(m) = &g.model {
            let n = test.len();
            row.ppl = Some(Scored::new(perplexity(m, &test, PerplexityScope::AllTurns)?, n));
            row.wer = Some(Scored::new(wer(m, &test, PerplexityScope::AllTurns)?, n));
            row.ppl_last = Some(Scored::new(perplexity(m, &test, PerplexityScope::LastTurn)?, n));
            row.wer_last = Some(Scored::new(wer(m, &test, PerplexityScope::LastTurn)?, n));
        }
        report.models.push(row);
        if let Some(dir) = &a.dump_dir {
            dump(dir, g, &test)?;
        }
    }
    match &a.out {
        Some(p) => {
            fs::write(p, report.to_json())?;
            eprint!("{}", report.render_text());
            log::info!("wrote {}", p.display());
        }
        None => println!("{}", report.to_json()),
    }
    Ok(())
}

fn retrieve_build(run: &mut Run, a: RetrieveBuildArgs) -> Result<()> {
    finalize(run, |c| {
        if let Some(t) = a.threshold {
            c.retrieval.threshold = t;
        }
    })?;
    let (index, threshold) = if a.generic10 {
        (TfIdfIndex::build(&generic10())?, None)
    } else {
        let path = a.data.as_deref().expect("clap requires --data");
        let candidates: Vec<TokenSeq> = match load_any(path)? {
            Corpus::Triples(t) => t.into_iter().map(|t| t.u3).collect(),
            other => utterances(other),
        };
        match &a.classifier {
            Some(p) => {
                let threshold = run.config.retrieval.threshold;
                let index = TfIdfIndex::build_filtered(&candidates, &load_classifier(p)?, threshold)?;
                (index, Some(threshold))
            }
            None => (TfIdfIndex::build(&candidates)?, None),
        }
    };
    log::info!("indexed {} candidates", index.len());
    run.save(Checkpoint::from_index(&index, run.config.seed, threshold)?, &a.out)
}

fn chat(run: &mut Run, a: ChatArgs) -> Result<()> {
    finalize(run, |_| {})?;
    let mut paths = vec![a.model.clone()];
    paths.extend(a.classifier.clone());
    paths.extend(a.lm.clone());
    let registry = Registry::load(&paths)?;
    let model_id = registry.models()[0].id.clone();
    let request = |history: Vec<String>| ChatRequest {
        model_id: model_id.clone(),
        history,
        style_score: a.style_score,
        alpha: a.alpha,
        mode: Some(a.mode),
        seed: Some(run.config.seed),
    };
    let print = |reply: crate::service::ChatResponse| {
        match reply.politeness_score {
            Some(s) => println!("{}\t[politeness {s:.3}]", reply.response),
            None => println!("{}", reply.response),
        };
    };
    if !a.history.is_empty() {
        let reply = registry
            .chat(&request(a.history.clone()))
            .map_err(|e| usage(e.to_string()))?;
        print(reply);
        return Ok(());
    }
    let mut history: Vec<String> = Vec::new();
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        history.push(line);
        let reply = registry.chat(&request(history.clone()))?;
        history.push(reply.response.clone());
        print(reply);
    }
    Ok(())
}

fn saliency(run: &mut Run, a: SaliencyArgs) -> Result<()> {
    finalize(run, |_| {})?;
    let classifier = load_classifier(&a.classifier)?;
    let tokens = tokenize(&a.text);
    if tokens.is_empty() {
        return Err(usage("--text has no tokens"));
    }
    let weights = classifier.saliency(&tokens)?;
    println!("{}", serde_json::json!({ "tokens": tokens, "weights": weights }));
    Ok(())
}

fn serve(run: &mut Run, a: ServeArgs) -> Result<()> {
    finalize(run, |_| {})?;
    let registry = Registry::load(&a.models)?;
    for m in registry.models() {
        log::info!("loaded {} ({})", m.id, m.kind);
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::service::serve(registry, a.addr))
}
