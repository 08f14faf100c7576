use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{OptimizerKind, TrainConfig};
use super::nce::{sample_noise, sentence_loss};
use super::optim::{clip_gradients, Optimizer};
use crate::corpus::{build_vocabs, CharVocab, NoiseDistribution, Sentence, Tokenizer, Tokens, TrainVocab, WordId};
use crate::encoder::{read_model, write_model, FileKind, Model, Reader, Writer};
use crate::error::{Error, Result};
use crate::numkernel::{ParamGrads, Tape};

/// Stream of the noise generator; stream 0 of the same seed initializes
/// the weights.
const NOISE_STREAM: u64 = 1;
/// Shuffle order for epoch `e` uses stream `SHUFFLE_STREAM + e`.
const SHUFFLE_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub mean_loss: f64,
    pub targets: usize,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// One training log record, printed as `step<TAB>mean_loss<TAB>wall_ms`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLine {
    pub step: u64,
    /// Mean per-step loss since the previous line.
    pub mean_loss: f64,
    pub wall_ms: u128,
}

impl fmt::Display for LogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t{}", self.step, self.mean_loss, self.wall_ms)
    }
}

pub enum Event {
    Log(LogLine),
    /// A periodic checkpoint is due.
    Checkpoint,
    /// An epoch finished with the given mean per-target loss.
    EpochEnd {
        epoch: usize,
        mean_loss: f64,
    },
}

/// Position inside the epoch schedule.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Progress {
    pub epoch: usize,
    /// Next batch index within `epoch`.
    pub batch: usize,
    /// Summed per-target loss so far in `epoch`.
    pub loss_sum: f64,
    pub targets: u64,
    /// Mean per-target loss of every completed epoch.
    pub epoch_means: Vec<f64>,
    window_loss: f64,
    window_steps: u64,
}

/// Complete training state: model with output projection, optimizer
/// moments, vocabularies, configuration, step counter and generator state.
/// Serialized it is the checkpoint file.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    model: Model,
    vocab: TrainVocab,
    noise: NoiseDistribution,
    optimizer: Optimizer,
    step: u64,
    rng: ChaCha8Rng,
    progress: Progress,
}

impl Trainer {
    pub fn new(config: TrainConfig, chars: CharVocab, vocab: TrainVocab) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.encoder, chars, vocab.len(), config.seed)?;
        let noise = NoiseDistribution::new(&vocab, config.noise_power)?;
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, model.store());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(NOISE_STREAM);
        Ok(Trainer {
            config,
            model,
            vocab,
            noise,
            optimizer,
            step: 0,
            rng,
            progress: Progress::default(),
        })
    }

    /// Builds vocabularies from `sentences` and a fresh model.
    pub fn from_tokens(config: TrainConfig, sentences: &[Tokens]) -> Result<Self> {
        let (chars, vocab) = build_vocabs(sentences, config.min_count)?;
        Self::new(config, chars, vocab)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn vocab(&self) -> &TrainVocab {
        &self.vocab
    }

    pub fn noise(&self) -> &NoiseDistribution {
        &self.noise
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    pub fn finished(&self) -> bool {
        self.progress.epoch >= self.config.epochs
    }

    /// Encodes token lists with character ids and training targets.
    pub fn prepare(&self, sentences: &[Tokens]) -> Result<Vec<Sentence>> {
        sentences
            .iter()
            .map(|t| Ok(self.model.sentence(t)?.with_targets(self.vocab.targets(t))))
            .collect()
    }

    /// Mean NCE loss per target and its gradient for fixed noise samples.
    pub fn loss_and_grads(&self, batch: &[&Sentence], noise: &[Vec<Vec<WordId>>]) -> Result<(f64, usize, ParamGrads)> {
        let store = self.model.store();
        let layout = self.model.layout();
        let mut grads = ParamGrads::zeros_like(store);
        let mut total = 0.0;
        let mut targets = 0;
        for (j, (s, ns)) in batch.iter().zip(noise).enumerate() {
            let mut tape = Tape::new(store);
            let loss = sentence_loss(&mut tape, layout, s, ns, &self.noise)?;
            let v = tape.value(loss).data()[0];
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    detail: format!("batch sentence {j} ({} words)", s.len()),
                });
            }
            total += v;
            targets += s.len();
            grads.merge(&tape.backward(loss)?.into_params());
        }
        if targets == 0 {
            return Err(Error::Empty("batch"));
        }
        grads.scale(1.0 / targets as f64);
        Ok((total / targets as f64, targets, grads))
    }

    /// One optimizer update on the mean loss of `batch`, with fresh noise
    /// for every target.
    pub fn train_step(&mut self, batch: &[Sentence]) -> Result<StepStats> {
        let refs: Vec<&Sentence> = batch.iter().collect();
        self.step_refs(&refs)
    }

    fn step_refs(&mut self, batch: &[&Sentence]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let k = self.config.k_noise;
        let noise: Vec<Vec<Vec<WordId>>> = batch
            .iter()
            .map(|s| {
                (0..s.len())
                    .map(|_| sample_noise(&self.noise, k, &mut self.rng))
                    .collect()
            })
            .collect();
        let (mean_loss, targets, mut grads) = self.loss_and_grads(batch, &noise)?;
        if !grads.all_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                detail: format!("step {}", self.step + 1),
            });
        }
        let grad_norm = clip_gradients(&mut grads, self.config.grad_clip);
        self.optimizer.update(self.model.store_mut(), &grads);
        self.step += 1;
        Ok(StepStats {
            mean_loss,
            targets,
            grad_norm,
        })
    }

    /// Sentence order for `epoch`; depends only on the seed and the epoch.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(SHUFFLE_STREAM + epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Trains until every epoch is done or the global step counter reaches
    /// `until`. Resuming from a checkpoint continues exactly where it
    /// stopped.
    pub fn run<F>(&mut self, data: &[Sentence], until: Option<u64>, mut hook: F) -> Result<()>
    where
        F: FnMut(&Trainer, Event) -> Result<()>,
    {
        if data.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        let start = Instant::now();
        let batches = data.len().div_ceil(self.config.batch);
        while !self.finished() {
            let order = self.epoch_order(self.progress.epoch, data.len());
            while self.progress.batch < batches {
                if until.is_some_and(|u| self.step >= u) {
                    return Ok(());
                }
                let b = self.progress.batch;
                let idx = &order[b * self.config.batch..((b + 1) * self.config.batch).min(data.len())];
                let batch: Vec<&Sentence> = idx.iter().map(|&i| &data[i]).collect();
                let stats = self.step_refs(&batch).map_err(|e| match e {
                    Error::NonFinite { what, detail } => Error::NonFinite {
                        what,
                        detail: format!("{detail}; corpus sentences {idx:?}"),
                    },
                    e => e,
                })?;
                let p = &mut self.progress;
                p.batch += 1;
                p.loss_sum += stats.mean_loss * stats.targets as f64;
                p.targets += stats.targets as u64;
                p.window_loss += stats.mean_loss;
                p.window_steps += 1;
                if self.step.is_multiple_of(self.config.log_every) {
                    let line = LogLine {
                        step: self.step,
                        mean_loss: p.window_loss / p.window_steps as f64,
                        wall_ms: start.elapsed().as_millis(),
                    };
                    p.window_loss = 0.0;
                    p.window_steps = 0;
                    hook(self, Event::Log(line))?;
                }
                if self.config.checkpoint_every > 0 && self.step.is_multiple_of(self.config.checkpoint_every) {
                    hook(self, Event::Checkpoint)?;
                }
            }
            let p = &mut self.progress;
            let mean_loss = p.loss_sum / p.targets.max(1) as f64;
            p.epoch_means.push(mean_loss);
            let epoch = p.epoch;
            p.epoch += 1;
            p.batch = 0;
            p.loss_sum = 0.0;
            p.targets = 0;
            hook(self, Event::EpochEnd { epoch, mean_loss })?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(Vec::new());
        write_model(&mut w, &self.model, FileKind::Checkpoint)?;

        let opt = &self.optimizer;
        w.u32(match opt.kind() {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 1,
        })?;
        w.f64(opt.learning_rate())?;
        w.f64(opt.weight_decay())?;
        w.u64(opt.steps())?;
        let state: Vec<_> = opt.state().collect();
        w.u32(state.len() as u32)?;
        let names: Vec<&str> = self.model.store().iter().map(|(_, n, _)| n).collect();
        for (i, t) in state.iter().enumerate() {
            let which = if i < names.len() { "m" } else { "v" };
            w.tensor(&format!("adam.{which}.{}", names[i % names.len()]), t, true)?;
        }

        w.u64(self.vocab.count(TrainVocab::UNK))?;
        w.usize(self.vocab.len() - 1)?;
        for (i, s) in self.vocab.surfaces().enumerate() {
            w.str(s)?;
            w.u64(self.vocab.count(WordId(i as u32 + 1)))?;
        }

        let json = serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        w.str(&json)?;

        w.u64(self.step)?;
        w.bytes(&self.rng.get_seed())?;
        w.u64(self.rng.get_stream())?;
        let pos = self.rng.get_word_pos();
        w.u64(pos as u64)?;
        w.u64((pos >> 64) as u64)?;

        let p = &self.progress;
        w.usize(p.epoch)?;
        w.usize(p.batch)?;
        w.f64(p.loss_sum)?;
        w.u64(p.targets)?;
        w.f64(p.window_loss)?;
        w.u64(p.window_steps)?;
        w.usize(p.epoch_means.len())?;
        for &m in &p.epoch_means {
            w.f64(m)?;
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let (kind, model) = read_model(&mut r)?;
        if kind != FileKind::Checkpoint {
            return Err(Error::Format("not a checkpoint (inference-only model file)".into()));
        }

        let kind = match r.u32()? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::Adam,
            k => return Err(Error::Format(format!("unknown optimizer code {k}"))),
        };
        let lr = r.f64()?;
        let wd = r.f64()?;
        let opt_steps = r.u64()?;
        let n = r.u32()? as usize;
        let expected = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 2 * model.store().len(),
        };
        if n != expected {
            return Err(Error::Format(format!(
                "expected {expected} optimizer tensors, found {n}"
            )));
        }
        let mut moments = Vec::with_capacity(n);
        for i in 0..n {
            let (_, t) = r.tensor(true)?;
            let id = model.store().ids().nth(i % model.store().len()).expect("in range");
            if t.shape() != model.store().get(id).shape() {
                return Err(Error::Format(format!("optimizer tensor {i} has the wrong shape")));
            }
            moments.push(t);
        }
        let optimizer = Optimizer::from_state(kind, lr, wd, opt_steps, moments);

        let unk = r.u64()?;
        let entries = r.usize()?;
        let mut words = Vec::with_capacity(entries.min(1 << 20));
        for _ in 0..entries {
            let s = r.str()?;
            words.push((s, r.u64()?));
        }
        let vocab = TrainVocab::from_entries(unk, words)?;
        if vocab.len() != model.output_vocab() {
            return Err(Error::Format(format!(
                "vocabulary has {} words, output projection {}",
                vocab.len(),
                model.output_vocab()
            )));
        }

        let json = r.str()?;
        let config: TrainConfig = serde_json::from_str(&json).map_err(|e| Error::Format(format!("config: {e}")))?;
        if config.encoder != *model.config() {
            return Err(Error::Format("config dimensions disagree with the tensors".into()));
        }

        let step = r.u64()?;
        let seed: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.u64()?);
        let lo = r.u64()? as u128;
        let hi = r.u64()? as u128;
        rng.set_word_pos(lo | (hi << 64));

        let epoch = r.usize()?;
        let batch = r.usize()?;
        let loss_sum = r.f64()?;
        let targets = r.u64()?;
        let window_loss = r.f64()?;
        let window_steps = r.u64()?;
        let means = r.usize()?;
        let mut epoch_means = Vec::with_capacity(means.min(1 << 20));
        for _ in 0..means {
            epoch_means.push(r.f64()?);
        }
        r.finish()?;

        let noise = NoiseDistribution::new(&vocab, config.noise_power)?;
        Ok(Trainer {
            config,
            model,
            vocab,
            noise,
            optimizer,
            step,
            rng,
            progress: Progress {
                epoch,
                batch,
                loss_sum,
                targets,
                epoch_means,
                window_loss,
                window_steps,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::path(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::path(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Inputs of [`train`].
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    /// Continue from this checkpoint instead of starting fresh; its stored
    /// configuration wins over the one passed to [`train`].
    pub resume: Option<PathBuf>,
    /// Stop once the global step counter reaches this value.
    pub max_steps: Option<u64>,
}

pub fn read_corpus(path: &Path, max_word_len: usize) -> Result<Vec<Tokens>> {
    let file = File::open(path).map_err(|e| Error::path(path, e))?;
    let text = Tokenizer { max_word_len }.read(BufReader::new(file))?;
    if text.skipped_lines > 0 {
        log::warn!("{}: skipped {} undecodable lines", path.display(), text.skipped_lines);
    }
    Ok(text.sentences)
}

/// Reads the corpus, trains, and writes periodic and final checkpoints to
/// `job.checkpoint`. Log lines go to `log`.
pub fn train(job: &TrainJob, config: TrainConfig, log: &mut dyn Write) -> Result<Trainer> {
    config.validate()?;
    let mut trainer = match &job.resume {
        Some(p) => Trainer::load(p)?,
        None => {
            let tokens = read_corpus(&job.corpus, config.max_word_len)?;
            Trainer::from_tokens(config, &tokens)?
        }
    };
    let tokens = read_corpus(&job.corpus, trainer.config.max_word_len)?;
    let data = trainer.prepare(&tokens)?;
    // Fail on an unwritable destination before any training time is spent.
    OpenOptions::new()
        .append(true)
        .create(true)
        .open(&job.checkpoint)
        .map_err(|e| Error::path(&job.checkpoint, e))?;
    let path = job.checkpoint.clone();
    trainer.run(&data, job.max_steps, |t, event| {
        match event {
            Event::Log(line) => writeln!(log, "{line}")?,
            Event::Checkpoint => t.save(&path)?,
            Event::EpochEnd { epoch, mean_loss } => {
                log::info!("epoch {} mean loss {mean_loss:.6}", epoch + 1)
            }
        }
        Ok(())
    })?;
    trainer.save(&job.checkpoint)?;
    Ok(trainer)
}
