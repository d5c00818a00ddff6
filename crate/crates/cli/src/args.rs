use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use courtesy::dialogue::DecodeMode;
use courtesy::style::{LftMode, RewardSign};

#[derive(Debug, Parser)]
#[command(name = "courtesy", version, about = "Politeness-controllable dialogue toolkit")]
pub struct Cli {
    /// Config file; defaults to $COURTESY_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a marker-style synthetic corpus.
    GenSynth(GenSynthArgs),
    /// Train the politeness classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Train the base dialogue model by maximum likelihood.
    TrainDialogue(TrainDialogueArgs),
    /// Train the language model used for fusion.
    TrainLm(TrainLmArgs),
    /// Train a label-fine-tuned dialogue model.
    TrainLft(TrainLftArgs),
    /// Train a dialogue model with classifier-reward policy gradient.
    TrainRl(TrainRlArgs),
    /// Score checkpoints on a test set and write a report.
    Evaluate(EvaluateArgs),
    /// Build a TF-IDF retrieval index.
    RetrieveBuild(RetrieveBuildArgs),
    /// Generate a response from a checkpoint.
    Chat(ChatArgs),
    /// Per-token saliency of the classifier's polite probability.
    Saliency(SaliencyArgs),
    /// Serve checkpoints over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Number of triples and of labeled utterances.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Reuse the vocabulary stored in this checkpoint.
    #[arg(long)]
    pub vocab_from: Option<PathBuf>,
    /// Extra corpora whose tokens count towards the vocabulary.
    #[arg(long = "vocab-data", num_args = 1..)]
    pub vocab_data: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Labeled utterances, politeness JSONL.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Args)]
pub struct DialogueTrainArgs {
    /// Dialogue triples JSONL.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also train on the middle turn given the first.
    #[arg(long)]
    pub all_turns: bool,
    /// Start from this dialogue checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Args)]
pub struct TrainDialogueArgs {
    #[command(flatten)]
    pub common: DialogueTrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Triples JSONL, politeness JSONL or plain text, one utterance per line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Keep only utterances this classifier scores above the threshold.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Args)]
pub struct TrainLftArgs {
    #[command(flatten)]
    pub common: DialogueTrainArgs,
    /// Classifier that scores the training responses.
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long, value_parser = parse_from_str::<LftMode>)]
    pub mode: Option<LftMode>,
}

#[derive(Debug, Args)]
pub struct TrainRlArgs {
    #[command(flatten)]
    pub common: DialogueTrainArgs,
    /// Classifier that supplies the reward.
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub baseline: Option<f64>,
    #[arg(long, value_parser = parse_from_str::<RewardSign>)]
    pub sign: Option<RewardSign>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dialogue or retrieval checkpoints.
    #[arg(long, required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Test triples JSONL.
    #[arg(long)]
    pub test: PathBuf,
    /// Classifier for politeness scores.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Language model for fusion rows.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Also evaluate every base model fused with `--lm` at this ratio.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Politeness score requested from label-fine-tuned models.
    #[arg(long)]
    pub style_score: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write generated responses as JSONL into this directory.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveBuildArgs {
    /// Triples JSONL (responses become candidates), politeness JSONL or plain text.
    #[arg(long, required_unless_present = "generic10")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only candidates this classifier scores above the threshold.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Use the fixed ten generic polite responses as candidates.
    #[arg(long, conflicts_with_all = ["data", "classifier"])]
    pub generic10: bool,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Dialogue or retrieval checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub style_score: Option<f64>,
    #[arg(long, default_value = "greedy", value_parser = parse_from_str::<DecodeMode>)]
    pub mode: DecodeMode,
    /// Conversation turns, oldest first; reads turns from stdin when absent.
    #[arg(long = "turn", num_args = 1..)]
    pub history: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub text: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Checkpoints to load; ids are file stems.
    #[arg(long, required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}
