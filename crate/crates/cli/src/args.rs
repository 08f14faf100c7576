use std::path::PathBuf;

use charctx::encoder::EncoderConfig;
use charctx::probes::{ChunkProbeConfig, ClassifierConfig, FeatureMode};
use charctx::training::{OptimizerKind, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Character-aware word and context embeddings: training, encoding and
/// evaluation probes.
#[derive(Debug, Parser)]
#[command(name = "charctx", version)]
pub struct Cli {
    /// Upper bound on worker threads. Every computation currently runs on
    /// one thread.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,

    /// Force single-threaded, fixed-order reductions [default: off].
    #[arg(long, global = true, default_value_t = false)]
    pub deterministic: bool,

    /// More log output on stderr (-v info, -vv debug) [default: warnings
    /// only].
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build vocabularies from a corpus and train an encoder.
    Train(TrainArgs),
    /// Export word or context embeddings.
    Encode(EncodeArgs),
    /// Nearest words to a query by cosine between word embeddings.
    Nn(NnArgs),
    /// Rank marked contexts by similarity to a query context.
    RankContexts(RankArgs),
    /// Train a chunking tagger on frozen features and report chunk F1.
    Chunk(ChunkArgs),
    /// Score a probe task under test-time typos.
    Typo(TypoArgs),
    /// Print tensor shapes and parameter counts of a model file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model or checkpoint file.
    #[arg(long, env = "CHARCTX_MODEL")]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncoderArgs {
    /// Character embedding size.
    #[arg(long, default_value_t = EncoderConfig::default().char_dim)]
    pub char_dim: usize,
    /// Units per direction of the word-level LSTM.
    #[arg(long, default_value_t = EncoderConfig::default().word_hidden)]
    pub word_hidden: usize,
    /// Units per direction of the context-level LSTM.
    #[arg(long, default_value_t = EncoderConfig::default().context_hidden)]
    pub context_hidden: usize,
    /// Hidden width of the context MLP.
    #[arg(long, default_value_t = EncoderConfig::default().mlp_hidden)]
    pub mlp_hidden: usize,
    /// Context embedding size.
    #[arg(long, default_value_t = EncoderConfig::default().context_dim)]
    pub context_dim: usize,
}

impl EncoderArgs {
    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            char_dim: self.char_dim,
            word_hidden: self.word_hidden,
            context_hidden: self.context_hidden,
            mlp_hidden: self.mlp_hidden,
            context_dim: self.context_dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Plain-text corpus, one sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint; its stored settings replace the flags
    /// below [default: start fresh].
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop at this global step [default: run every epoch].
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Training log file [default: stdout].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also write the word vocabulary as TSV [default: not written].
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,

    #[command(flatten)]
    pub encoder: EncoderArgs,

    /// Noise samples per target.
    #[arg(long, default_value_t = TrainConfig::default().k_noise)]
    pub noise: usize,
    /// Exponent applied to unigram counts of the noise distribution.
    #[arg(long, default_value_t = TrainConfig::default().noise_power)]
    pub noise_power: f64,
    /// Learning rate.
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = Optimizer::Adam)]
    pub optimizer: Optimizer,
    /// Sentences per step.
    #[arg(long, default_value_t = TrainConfig::default().batch)]
    pub batch: usize,
    /// Passes over the corpus.
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    /// Global gradient-norm ceiling.
    #[arg(long, default_value_t = TrainConfig::default().grad_clip)]
    pub grad_clip: f64,
    /// Seed of initialization, noise sampling and shuffling.
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    pub seed: u64,
    /// Words seen fewer times are predicted as <unk>.
    #[arg(long, default_value_t = TrainConfig::default().min_count)]
    pub min_count: u64,
    /// Longer tokens are cut to this many characters.
    #[arg(long, default_value_t = TrainConfig::default().max_word_len)]
    pub max_word_len: usize,
    /// Steps between log lines.
    #[arg(long, default_value_t = TrainConfig::default().log_every)]
    pub log_every: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    #[arg(long, default_value_t = TrainConfig::default().checkpoint_every)]
    pub checkpoint_every: u64,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            encoder: self.encoder.config(),
            k_noise: self.noise,
            noise_power: self.noise_power,
            learning_rate: self.lr,
            optimizer: match self.optimizer {
                Optimizer::Sgd => OptimizerKind::Sgd,
                Optimizer::Adam => OptimizerKind::Adam,
            },
            batch: self.batch,
            epochs: self.epochs,
            grad_clip: self.grad_clip,
            seed: self.seed,
            min_count: self.min_count,
            max_word_len: self.max_word_len,
            log_every: self.log_every,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncodeMode {
    /// One embedding per whitespace-separated word.
    Word,
    /// Lines `sentence<TAB>position`, 0-based; one context embedding each.
    Context,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// The token, then the values separated by spaces.
    Text,
    /// Little-endian float32 records of the embedding width.
    F32,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Input file; `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodeMode::Word)]
    pub mode: EncodeMode,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Output file; `-` writes stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NnArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Query words.
    #[arg(required = true)]
    pub query: Vec<String>,
    /// Candidate words, one per line [default: the checkpoint's vocabulary].
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Neighbours per query.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Query as `sentence<TAB>position`, 0-based.
    #[arg(long)]
    pub query: String,
    /// File of candidate `sentence<TAB>position` lines.
    #[arg(long)]
    pub candidates: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    We,
    Ce,
    #[value(name = "we+ce")]
    WeCe,
    TaskTrained,
}

impl From<Mode> for FeatureMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::We => FeatureMode::Word,
            Mode::Ce => FeatureMode::Context,
            Mode::WeCe => FeatureMode::WordContext,
            Mode::TaskTrained => FeatureMode::TaskTrained,
        }
    }
}

#[derive(Debug, Args)]
pub struct ChunkDataArgs {
    /// CoNLL-format training file.
    #[arg(long)]
    pub train: PathBuf,
    /// CoNLL-format test file.
    #[arg(long)]
    pub test: PathBuf,
    /// Use only the leading whole sentences holding this many training
    /// tokens [default: all].
    #[arg(long)]
    pub train_tokens: Option<usize>,
    /// As --train-tokens, for the test file [default: all].
    #[arg(long)]
    pub test_tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TaggerArgs {
    /// Token features.
    #[arg(long, value_enum, default_value_t = Mode::WeCe)]
    pub mode: Mode,
    /// Width of the projection applied to the features.
    #[arg(long, default_value_t = ChunkProbeConfig::default().projection)]
    pub projection: usize,
    /// Tagger LSTM units per direction.
    #[arg(long, default_value_t = ChunkProbeConfig::default().hidden)]
    pub hidden: usize,
    /// Tagger learning rate.
    #[arg(long, default_value_t = ChunkProbeConfig::default().learning_rate)]
    pub lr: f64,
    /// Tagger L2 weight decay.
    #[arg(long, default_value_t = ChunkProbeConfig::default().weight_decay)]
    pub weight_decay: f64,
    /// Tagger gradient-norm ceiling.
    #[arg(long, default_value_t = ChunkProbeConfig::default().grad_clip)]
    pub grad_clip: f64,
    /// Tagger passes over the training data.
    #[arg(long, default_value_t = ChunkProbeConfig::default().epochs)]
    pub epochs: usize,
    /// Sentences per update.
    #[arg(long, default_value_t = ChunkProbeConfig::default().batch)]
    pub batch: usize,
    /// Seed of the tagger's initialization and shuffling.
    #[arg(long, default_value_t = ChunkProbeConfig::default().seed)]
    pub seed: u64,
}

impl TaggerArgs {
    pub fn config(&self) -> ChunkProbeConfig {
        ChunkProbeConfig {
            mode: self.mode.into(),
            projection: self.projection,
            hidden: self.hidden,
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            grad_clip: self.grad_clip,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub data: ChunkDataArgs,
    #[command(flatten)]
    pub tagger: TaggerArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TypoTask {
    /// Generated two-topic sentences; a softmax classifier on the context
    /// embedding of the marked word.
    Topic,
    /// Chunking with the tagger of the `chunk` command; needs --train and
    /// --test.
    Chunk,
}

#[derive(Debug, Args)]
pub struct TypoArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = TypoTask::Topic)]
    pub task: TypoTask,
    /// Typo probabilities, strictly increasing in [0, 1].
    #[arg(
        long = "p",
        value_delimiter = ',',
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    pub grid: Vec<f64>,
    /// Perturbation seeds; at least three.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    /// Write the curve as CSV here [default: after the summary on stdout].
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Generated training sentences of the topic task.
    #[arg(long, default_value_t = 200)]
    pub train_size: usize,
    /// Generated test sentences of the topic task.
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    /// Seed of the generated topic data.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Full-batch epochs of the topic classifier.
    #[arg(long, default_value_t = ClassifierConfig::default().epochs)]
    pub classifier_epochs: usize,
    /// Learning rate of the topic classifier.
    #[arg(long, default_value_t = ClassifierConfig::default().learning_rate)]
    pub classifier_lr: f64,

    /// CoNLL-format training file (chunk task).
    #[arg(long, required_if_eq("task", "chunk"))]
    pub train: Option<PathBuf>,
    /// CoNLL-format test file (chunk task).
    #[arg(long, required_if_eq("task", "chunk"))]
    pub test: Option<PathBuf>,
    /// Leading training tokens used by the chunk task [default: all].
    #[arg(long)]
    pub train_tokens: Option<usize>,
    /// Leading test tokens used by the chunk task [default: all].
    #[arg(long)]
    pub test_tokens: Option<usize>,
    #[command(flatten)]
    pub tagger: TaggerArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub model: ModelArg,
}
