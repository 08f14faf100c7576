use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, TaggedSentence};
use crate::encoder::{uniform, Direction, EncoderConfig, EncoderLayout, LstmCell, Model};
use crate::error::{Error, Result};
use crate::numkernel::{ParamGrads, ParamId, ParamStore, Tape, Tensor2, Var};
use crate::training::{clip_gradients, Optimizer, OptimizerKind};

/// A labelled span `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chunk {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

fn split_tag(tag: &str) -> (&str, &str) {
    match tag.split_once('-') {
        Some((prefix, kind)) => (prefix, kind),
        None if tag == "O" => ("O", ""),
        None => (tag, ""),
    }
}

fn ends_chunk(prev: &str, tag: &str, prev_kind: &str, kind: &str) -> bool {
    matches!(
        (prev, tag),
        ("B", "B" | "S" | "O") | ("I", "B" | "S" | "O") | ("E" | "S", _)
    ) || (prev != "O" && prev != "." && prev_kind != kind)
}

fn starts_chunk(prev: &str, tag: &str, prev_kind: &str, kind: &str) -> bool {
    matches!(tag, "B" | "S")
        || matches!((prev, tag), ("E" | "S" | "O", "E" | "I"))
        || (tag != "O" && tag != "." && prev_kind != kind)
}

/// Chunks of a tag sequence, following the conventions of the standard
/// CoNLL evaluation script (IOB, IOB2 and IOBES prefixes).
pub fn extract_chunks<S: AsRef<str>>(tags: &[S]) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(usize, String)> = None;
    let (mut prev, mut prev_kind) = ("O", "");
    for (i, tag) in tags.iter().enumerate() {
        let (t, kind) = split_tag(tag.as_ref());
        if ends_chunk(prev, t, prev_kind, kind) {
            if let Some((start, k)) = open.take() {
                chunks.push(Chunk { kind: k, start, end: i });
            }
        }
        if starts_chunk(prev, t, prev_kind, kind) {
            open = Some((i, kind.to_string()));
        }
        prev = t;
        prev_kind = kind;
    }
    if let Some((start, kind)) = open {
        chunks.push(Chunk {
            kind,
            start,
            end: tags.len(),
        });
    }
    chunks
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChunkScore {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl ChunkScore {
    /// Accumulates one sentence.
    pub fn add<S: AsRef<str>, T: AsRef<str>>(&mut self, gold: &[S], predicted: &[T]) {
        let g: BTreeSet<Chunk> = extract_chunks(gold).into_iter().collect();
        let p: BTreeSet<Chunk> = extract_chunks(predicted).into_iter().collect();
        self.gold += g.len();
        self.predicted += p.len();
        self.correct += g.intersection(&p).count();
    }

    /// Percentages; 0 whenever a denominator is 0.
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

/// Chunk F1 (percent) over parallel gold and predicted sentences.
pub fn chunk_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<T>]) -> Result<ChunkScore> {
    if gold.len() != predicted.len() {
        return Err(Error::shape("chunk_f1", (gold.len(), 1), (predicted.len(), 1)));
    }
    let mut score = ChunkScore::default();
    for (g, p) in gold.iter().zip(predicted) {
        if g.len() != p.len() {
            return Err(Error::shape("chunk_f1 sentence", (g.len(), 1), (p.len(), 1)));
        }
        score.add(g, p);
    }
    Ok(score)
}

/// Token features fed to the tagger.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    /// Frozen word embeddings.
    Word,
    /// Frozen context embeddings.
    Context,
    /// Both, concatenated.
    WordContext,
    /// A fresh encoder of the same shape trained jointly with the tagger.
    TaskTrained,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::Word,
        FeatureMode::Context,
        FeatureMode::WordContext,
        FeatureMode::TaskTrained,
    ];

    pub fn dim(self, config: &EncoderConfig) -> usize {
        match self {
            FeatureMode::Word => config.word_dim(),
            FeatureMode::Context => config.context_dim,
            FeatureMode::WordContext | FeatureMode::TaskTrained => config.word_dim() + config.context_dim,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Word => "we",
            FeatureMode::Context => "ce",
            FeatureMode::WordContext => "we+ce",
            FeatureMode::TaskTrained => "task-trained",
        })
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "we" => Ok(FeatureMode::Word),
            "ce" => Ok(FeatureMode::Context),
            "we+ce" => Ok(FeatureMode::WordContext),
            "task-trained" => Ok(FeatureMode::TaskTrained),
            _ => Err(Error::Config(format!(
                "unknown feature mode {s:?} (expected we, ce, we+ce or task-trained)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkProbeConfig {
    pub mode: FeatureMode,
    /// Width of the affine projection applied to the features.
    pub projection: usize,
    /// Tagger LSTM units per direction.
    pub hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub epochs: usize,
    /// Sentences per update.
    pub batch: usize,
    pub seed: u64,
}

impl Default for ChunkProbeConfig {
    fn default() -> Self {
        ChunkProbeConfig {
            mode: FeatureMode::WordContext,
            projection: 600,
            hidden: 500,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            grad_clip: 5.0,
            epochs: 10,
            batch: 8,
            seed: 0,
        }
    }
}

impl ChunkProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.projection == 0 || self.hidden == 0 {
            return Err(Error::Config("tagger sizes must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.weight_decay >= 0.0 && self.grad_clip > 0.0) {
            return Err(Error::Config(
                "learning_rate and grad_clip must be > 0, weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkReport {
    pub mode: FeatureMode,
    pub score: ChunkScore,
    pub train_tokens: usize,
    pub test_tokens: usize,
    pub classes: usize,
    /// Mean per-token training loss of the last epoch.
    pub final_loss: f64,
}

impl ChunkReport {
    pub fn f1(&self) -> f64 {
        self.score.f1()
    }

    /// `key=value` lines.
    pub fn summary(&self) -> String {
        format!(
            "mode={}\nf1={:.4}\nprecision={:.4}\nrecall={:.4}\ngold_chunks={}\npredicted_chunks={}\n\
             correct_chunks={}\nclasses={}\ntrain_tokens={}\ntest_tokens={}\nfinal_loss={:.6}\n",
            self.mode,
            self.score.f1(),
            self.score.precision(),
            self.score.recall(),
            self.score.gold,
            self.score.predicted,
            self.score.correct,
            self.classes,
            self.train_tokens,
            self.test_tokens,
            self.final_loss,
        )
    }
}

/// Bi-LSTM tagger: affine projection, one LSTM per direction whose states
/// at every position are concatenated, then an affine layer to tag scores.
struct Tagger {
    store: ParamStore,
    /// Jointly trained encoder in task-trained mode.
    encoder: Option<EncoderLayout>,
    proj_w: ParamId,
    proj_b: ParamId,
    fwd: LstmCell,
    bwd: LstmCell,
    out_w: ParamId,
    out_b: ParamId,
}

impl Tagger {
    fn new(
        mut store: ParamStore,
        encoder: Option<EncoderLayout>,
        feat: usize,
        classes: usize,
        cfg: &ChunkProbeConfig,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let (p, h) = (cfg.projection, cfg.hidden);
        let proj_w = store.add("tagger.proj.w", uniform(feat, p, 1.0 / (feat as f64).sqrt(), &mut rng));
        let proj_b = store.add("tagger.proj.b", Tensor2::zeros(1, p));
        let fwd = LstmCell::init(&mut store, "tagger.fwd", p, h, &mut rng);
        let bwd = LstmCell::init(&mut store, "tagger.bwd", p, h, &mut rng);
        let out_w = store.add(
            "tagger.out.w",
            uniform(2 * h, classes, 1.0 / ((2 * h) as f64).sqrt(), &mut rng),
        );
        let out_b = store.add("tagger.out.b", Tensor2::zeros(1, classes));
        Tagger {
            store,
            encoder,
            proj_w,
            proj_b,
            fwd,
            bwd,
            out_w,
            out_b,
        }
    }

    fn features(&self, tape: &mut Tape<'_>, input: &TaggerInput) -> Result<Var> {
        match (input, &self.encoder) {
            (TaggerInput::Frozen(x), _) => Ok(tape.input(x.clone())),
            (TaggerInput::Chars(s), Some(layout)) => {
                let vars = layout.encode_sentence(tape, s)?;
                let words = tape.stack_rows(&vars.words)?;
                tape.concat_cols(words, vars.contexts)
            }
            (TaggerInput::Chars(_), None) => Err(Error::Config("tagger has no encoder".into())),
        }
    }

    fn logits(&self, tape: &mut Tape<'_>, input: &TaggerInput) -> Result<Var> {
        let x = self.features(tape, input)?;
        let w = tape.param(self.proj_w);
        let b = tape.param(self.proj_b);
        let z = tape.matmul(x, w)?;
        let z = tape.add_row(z, b)?;
        let f = self.fwd.states(tape, z, Direction::Forward)?;
        let r = self.bwd.states(tape, z, Direction::Backward)?;
        let rows = f
            .into_iter()
            .zip(r)
            .map(|(a, b)| tape.concat_cols(a, b))
            .collect::<Result<Vec<_>>>()?;
        let h = tape.stack_rows(&rows)?;
        let w = tape.param(self.out_w);
        let b = tape.param(self.out_b);
        let y = tape.matmul(h, w)?;
        tape.add_row(y, b)
    }

    fn predict(&self, input: &TaggerInput) -> Result<Vec<usize>> {
        let mut tape = Tape::new(&self.store);
        let y = self.logits(&mut tape, input)?;
        let t = tape.value(y);
        Ok((0..t.rows())
            .map(|r| {
                let row = t.row(r);
                (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect())
    }
}

enum TaggerInput {
    Frozen(Tensor2),
    Chars(Sentence),
}

fn frozen_features(model: &Model, mode: FeatureMode, sentence: &Sentence) -> Result<Tensor2> {
    let pairs = model.encode_sentence(sentence)?;
    let rows: Vec<Vec<f64>> = pairs
        .into_iter()
        .map(|p| match mode {
            FeatureMode::Word => p.word,
            FeatureMode::Context => p.context,
            _ => [p.word, p.context].concat(),
        })
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Tensor2::from_rows(&refs)
}

/// Tag inventory of `train`, sorted; errors if `test` uses other tags.
pub fn tag_set(train: &[TaggedSentence], test: &[TaggedSentence]) -> Result<Vec<String>> {
    let tags: BTreeSet<&str> = train.iter().flat_map(|s| s.tags.iter().map(String::as_str)).collect();
    if let Some(unknown) = test.iter().flat_map(|s| &s.tags).find(|t| !tags.contains(t.as_str())) {
        return Err(Error::Config(format!(
            "test tag {unknown:?} does not occur in the training data"
        )));
    }
    Ok(tags.into_iter().map(str::to_owned).collect())
}

/// A tagger trained on one feature mode, ready to score new sentences.
pub struct TrainedTagger {
    tagger: Tagger,
    mode: FeatureMode,
    tags: Vec<String>,
    train_tokens: usize,
    final_loss: f64,
}

impl TrainedTagger {
    /// Trains on `train`. Features come from `model` (frozen) or, in
    /// task-trained mode, from a fresh encoder of the same shape that is
    /// updated together with the tagger.
    pub fn fit(model: &Model, train: &[TaggedSentence], tags: Vec<String>, cfg: &ChunkProbeConfig) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("chunking training data"));
        }
        let tag_id = |t: &str| {
            tags.binary_search_by(|x| x.as_str().cmp(t))
                .map_err(|_| Error::Config(format!("tag {t:?} not in the tag set")))
        };
        let train_tags = train
            .iter()
            .map(|s| s.tags.iter().map(|t| tag_id(t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let feat = cfg.mode.dim(model.config());
        let mut tagger = if cfg.mode == FeatureMode::TaskTrained {
            let fresh = Model::new(*model.config(), model.chars().clone(), 0, cfg.seed)?;
            Tagger::new(
                fresh.store().clone(),
                Some(fresh.layout().clone()),
                feat,
                tags.len(),
                cfg,
            )
        } else {
            Tagger::new(ParamStore::new(), None, feat, tags.len(), cfg)
        };
        let inputs = train
            .iter()
            .map(|s| input_for(model, cfg.mode, &model.sentence(&s.words)?))
            .collect::<Result<Vec<_>>>()?;

        let mut opt =
            Optimizer::new(OptimizerKind::Adam, cfg.learning_rate, &tagger.store).with_weight_decay(cfg.weight_decay);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut final_loss = f64::NAN;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut epoch_tokens = 0;
            for chunk in order.chunks(cfg.batch) {
                let mut grads = ParamGrads::zeros_like(&tagger.store);
                let mut tokens = 0;
                for &i in chunk {
                    let mut tape = Tape::new(&tagger.store);
                    let y = tagger.logits(&mut tape, &inputs[i])?;
                    let loss = tape.softmax_xent(y, &train_tags[i])?;
                    let v = tape.value(loss).data()[0];
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            what: "tagger loss",
                            detail: format!("epoch {epoch}, sentence {i}"),
                        });
                    }
                    epoch_loss += v;
                    tokens += train_tags[i].len();
                    grads.merge(&tape.backward(loss)?.into_params());
                }
                epoch_tokens += tokens;
                grads.scale(1.0 / tokens as f64);
                clip_gradients(&mut grads, cfg.grad_clip);
                opt.update(&mut tagger.store, &grads);
            }
            final_loss = epoch_loss / epoch_tokens as f64;
            log::debug!("chunk tagger ({}) epoch {} loss {final_loss:.5}", cfg.mode, epoch + 1);
        }
        Ok(TrainedTagger {
            tagger,
            mode: cfg.mode,
            tags,
            train_tokens: train.iter().map(|s| s.words.len()).sum(),
            final_loss,
        })
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Predicted tags for an encoded sentence.
    pub fn predict(&self, model: &Model, sentence: &Sentence) -> Result<Vec<&str>> {
        let input = input_for(model, self.mode, sentence)?;
        Ok(self
            .tagger
            .predict(&input)?
            .into_iter()
            .map(|k| self.tags[k].as_str())
            .collect())
    }

    /// Chunk score over `sentences` against `gold`.
    pub fn score(&self, model: &Model, sentences: &[Sentence], gold: &[Vec<String>]) -> Result<ChunkScore> {
        if sentences.len() != gold.len() {
            return Err(Error::shape("chunk score", (sentences.len(), 1), (gold.len(), 1)));
        }
        let mut score = ChunkScore::default();
        for (s, g) in sentences.iter().zip(gold) {
            let pred = self.predict(model, s)?;
            if pred.len() != g.len() {
                return Err(Error::shape("chunk score sentence", (pred.len(), 1), (g.len(), 1)));
            }
            score.add(g, &pred);
        }
        Ok(score)
    }
}

fn input_for(model: &Model, mode: FeatureMode, sentence: &Sentence) -> Result<TaggerInput> {
    Ok(match mode {
        FeatureMode::TaskTrained => TaggerInput::Chars(sentence.clone()),
        _ => TaggerInput::Frozen(frozen_features(model, mode, sentence)?),
    })
}

/// Trains a tagger on `train` and reports chunk F1 on `test`.
pub fn chunk_probe(
    model: &Model,
    train: &[TaggedSentence],
    test: &[TaggedSentence],
    cfg: &ChunkProbeConfig,
) -> Result<ChunkReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("chunking data"));
    }
    let tags = tag_set(train, test)?;
    let tagger = TrainedTagger::fit(model, train, tags, cfg)?;
    let sentences = test
        .iter()
        .map(|s| model.sentence(&s.words))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<Vec<String>> = test.iter().map(|s| s.tags.clone()).collect();
    let score = tagger.score(model, &sentences, &gold)?;
    Ok(ChunkReport {
        mode: cfg.mode,
        score,
        train_tokens: tagger.train_tokens,
        test_tokens: test.iter().map(|s| s.words.len()).sum(),
        classes: tagger.tags.len(),
        final_loss: tagger.final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_owned).collect()
    }

    #[test]
    fn extracts_iob2_chunks() {
        let c = extract_chunks(&tags("B-NP I-NP O B-VP B-NP I-NP I-NP"));
        assert_eq!(
            c,
            vec![
                Chunk {
                    kind: "NP".into(),
                    start: 0,
                    end: 2
                },
                Chunk {
                    kind: "VP".into(),
                    start: 3,
                    end: 4
                },
                Chunk {
                    kind: "NP".into(),
                    start: 4,
                    end: 7
                },
            ]
        );
    }

    #[test]
    fn stray_inside_tag_opens_a_chunk() {
        let c = extract_chunks(&tags("O I-NP I-VP"));
        assert_eq!(c.len(), 2);
        assert_eq!(
            c[0],
            Chunk {
                kind: "NP".into(),
                start: 1,
                end: 2
            }
        );
    }

    #[test]
    fn perfect_and_degenerate_scores() {
        let g = vec![tags("B-NP I-NP O B-VP")];
        assert_eq!(chunk_f1(&g, &g).unwrap().f1(), 100.0);
        let none = vec![tags("O O O")];
        let s = chunk_f1(&none, &none).unwrap();
        assert_eq!((s.precision(), s.recall(), s.f1()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn boundary_and_type_must_both_match() {
        let g = vec![tags("B-NP I-NP O")];
        let wrong_type = vec![tags("B-VP I-VP O")];
        let wrong_span = vec![tags("B-NP O O")];
        assert_eq!(chunk_f1(&g, &wrong_type).unwrap().correct, 0);
        assert_eq!(chunk_f1(&g, &wrong_span).unwrap().correct, 0);
    }

    #[test]
    fn unseen_test_tag_is_rejected() {
        let train = vec![TaggedSentence {
            words: vec!["a".into()],
            tags: vec!["B-NP".into()],
        }];
        let test = vec![TaggedSentence {
            words: vec!["a".into()],
            tags: vec!["B-PP".into()],
        }];
        assert!(matches!(tag_set(&train, &test), Err(Error::Config(_))));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in FeatureMode::ALL {
            assert_eq!(m.to_string().parse::<FeatureMode>().unwrap(), m);
        }
    }

    #[test]
    fn feature_dims_under_default_encoder() {
        let c = EncoderConfig::default();
        assert_eq!(FeatureMode::Word.dim(&c), 1000);
        assert_eq!(FeatureMode::Context.dim(&c), 600);
        assert_eq!(FeatureMode::WordContext.dim(&c), 1600);
    }
}
