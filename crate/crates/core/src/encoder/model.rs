use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use super::init::{uniform, CHAR_EMBED_BOUND};
use super::lstm::{Direction, LstmCell};
use crate::corpus::{CharId, CharVocab, Sentence};
use crate::error::{Error, Result};
use crate::numkernel::{ParamId, ParamStore, Tape, Tensor2, Var};

/// `relu(x · w1 + b1) · w2 + b2`, no output nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w1 = tape.param(self.w1);
        let b1 = tape.param(self.b1);
        let w2 = tape.param(self.w2);
        let b2 = tape.param(self.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h);
        let y = tape.matmul(h, w2)?;
        tape.add_row(y, b2)
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// Training-only projection of a context embedding onto the word
/// vocabulary. One row per word (`N × d_ctx`) plus an `N × 1` bias, so
/// scoring a handful of words is a row gather.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Where each encoder tensor lives inside a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderLayout {
    pub char_table: ParamId,
    pub char_fwd: LstmCell,
    pub char_bwd: LstmCell,
    pub ctx_fwd: LstmCell,
    pub ctx_bwd: LstmCell,
    pub mlp: Mlp,
    pub output: Option<OutputLayer>,
}

/// Per-sentence outputs on a tape.
pub struct SentenceVars {
    /// `1 × 2h_c` per word.
    pub words: Vec<Var>,
    /// `n × d_ctx`, row `i` the context embedding of position `i`.
    pub contexts: Var,
}

fn find(store: &ParamStore, name: &str, shape: (usize, usize)) -> Result<ParamId> {
    let id = store
        .find(name)
        .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
    if store.get(id).shape() != shape {
        return Err(Error::Format(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            store.get(id).shape()
        )));
    }
    Ok(id)
}

impl EncoderLayout {
    /// Allocates and initializes every tensor. `output_vocab == 0` skips
    /// the output projection.
    pub fn init(
        store: &mut ParamStore,
        config: &EncoderConfig,
        num_chars: usize,
        output_vocab: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let c = config;
        let char_table = store.add("char.embed", uniform(num_chars, c.char_dim, CHAR_EMBED_BOUND, rng));
        let char_fwd = LstmCell::init(store, "char.fwd", c.char_dim, c.word_hidden, rng);
        let char_bwd = LstmCell::init(store, "char.bwd", c.char_dim, c.word_hidden, rng);
        let ctx_fwd = LstmCell::init(store, "ctx.fwd", c.word_dim(), c.context_hidden, rng);
        let ctx_bwd = LstmCell::init(store, "ctx.bwd", c.word_dim(), c.context_hidden, rng);
        let mlp_in = 2 * c.context_hidden;
        let mlp = Mlp {
            w1: store.add(
                "mlp.w1",
                uniform(mlp_in, c.mlp_hidden, 1.0 / (mlp_in as f64).sqrt(), rng),
            ),
            b1: store.add("mlp.b1", Tensor2::zeros(1, c.mlp_hidden)),
            w2: store.add(
                "mlp.w2",
                uniform(c.mlp_hidden, c.context_dim, 1.0 / (c.mlp_hidden as f64).sqrt(), rng),
            ),
            b2: store.add("mlp.b2", Tensor2::zeros(1, c.context_dim)),
        };
        let output = (output_vocab > 0).then(|| OutputLayer {
            weight: store.add(
                "output.weight",
                uniform(output_vocab, c.context_dim, 1.0 / (c.context_dim as f64).sqrt(), rng),
            ),
            bias: store.add("output.bias", Tensor2::zeros(output_vocab, 1)),
        });
        EncoderLayout {
            char_table,
            char_fwd,
            char_bwd,
            ctx_fwd,
            ctx_bwd,
            mlp,
            output,
        }
    }

    /// Re-attaches to tensors by name; shapes are checked against `config`.
    pub fn from_store(
        store: &ParamStore,
        config: &EncoderConfig,
        num_chars: usize,
        output_vocab: usize,
    ) -> Result<Self> {
        let c = config;
        let mlp_in = 2 * c.context_hidden;
        let output = if output_vocab > 0 {
            Some(OutputLayer {
                weight: find(store, "output.weight", (output_vocab, c.context_dim))?,
                bias: find(store, "output.bias", (output_vocab, 1))?,
            })
        } else {
            None
        };
        Ok(EncoderLayout {
            char_table: find(store, "char.embed", (num_chars, c.char_dim))?,
            char_fwd: LstmCell::from_store(store, "char.fwd", c.char_dim, c.word_hidden)?,
            char_bwd: LstmCell::from_store(store, "char.bwd", c.char_dim, c.word_hidden)?,
            ctx_fwd: LstmCell::from_store(store, "ctx.fwd", c.word_dim(), c.context_hidden)?,
            ctx_bwd: LstmCell::from_store(store, "ctx.bwd", c.word_dim(), c.context_hidden)?,
            mlp: Mlp {
                w1: find(store, "mlp.w1", (mlp_in, c.mlp_hidden))?,
                b1: find(store, "mlp.b1", (1, c.mlp_hidden))?,
                w2: find(store, "mlp.w2", (c.mlp_hidden, c.context_dim))?,
                b2: find(store, "mlp.b2", (1, c.context_dim))?,
            },
            output,
        })
    }

    /// Encoder tensors, output projection excluded.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut v = vec![self.char_table];
        for cell in [self.char_fwd, self.char_bwd, self.ctx_fwd, self.ctx_bwd] {
            v.extend(cell.param_ids());
        }
        v.extend(self.mlp.param_ids());
        v
    }

    pub fn all_params(&self) -> Vec<ParamId> {
        let mut v = self.encoder_params();
        if let Some(o) = self.output {
            v.extend([o.weight, o.bias]);
        }
        v
    }

    /// `|word| × d_c` character embeddings; ids outside the table read the
    /// unknown-character row.
    pub fn embed_chars(&self, tape: &mut Tape<'_>, word: &[CharId]) -> Result<Var> {
        if word.is_empty() {
            return Err(Error::Empty("word"));
        }
        let rows = tape.params().get(self.char_table).rows();
        let idx: Vec<usize> = word
            .iter()
            .map(|c| {
                let i = c.0 as usize;
                if i < rows {
                    i
                } else {
                    CharVocab::UNK.0 as usize
                }
            })
            .collect();
        let table = tape.param(self.char_table);
        tape.gather_rows(table, &idx)
    }

    /// `[forward final state, backward final state]` over the characters.
    pub fn encode_word(&self, tape: &mut Tape<'_>, word: &[CharId]) -> Result<Var> {
        let x = self.embed_chars(tape, word)?;
        let f = self.char_fwd.run(tape, x, Direction::Forward)?;
        let b = self.char_bwd.run(tape, x, Direction::Backward)?;
        tape.concat_cols(f, b)
    }

    pub fn encode_words(&self, tape: &mut Tape<'_>, words: &[Vec<CharId>]) -> Result<Vec<Var>> {
        words.iter().map(|w| self.encode_word(tape, w)).collect()
    }

    /// Bi-LSTM state for every position in two sweeps: row `i` is
    /// `[fwd(e_0..e_{i-1}), bwd(e_{n-1}..e_{i+1})]`, zero where a side is
    /// empty.
    pub fn context_states(&self, tape: &mut Tape<'_>, words: &[Var]) -> Result<Var> {
        let n = words.len();
        if n == 0 {
            return Err(Error::Empty("sentence"));
        }
        let x = tape.stack_rows(words)?;
        let fwd = self.ctx_fwd.states(tape, x, Direction::Forward)?;
        let bwd = self.ctx_bwd.states(tape, x, Direction::Backward)?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let left = if i == 0 {
                self.ctx_fwd.zero_state(tape)
            } else {
                fwd[i - 1]
            };
            let right = if i + 1 == n {
                self.ctx_bwd.zero_state(tape)
            } else {
                bwd[i + 1]
            };
            rows.push(tape.concat_cols(left, right)?);
        }
        tape.stack_rows(&rows)
    }

    /// Bi-LSTM state for position `i` alone, running each side from scratch.
    pub fn context_state_at(&self, tape: &mut Tape<'_>, words: &[Var], i: usize) -> Result<Var> {
        if i >= words.len() {
            return Err(Error::Index {
                what: "context position",
                index: i,
                len: words.len(),
            });
        }
        let left = self.ctx_fwd.run_rows(tape, &words[..i], Direction::Forward)?;
        let right = self.ctx_bwd.run_rows(tape, &words[i + 1..], Direction::Backward)?;
        tape.concat_cols(left, right)
    }

    pub fn encode_sentence(&self, tape: &mut Tape<'_>, sentence: &Sentence) -> Result<SentenceVars> {
        let words = self.encode_words(tape, &sentence.words)?;
        let states = self.context_states(tape, &words)?;
        let contexts = self.mlp.forward(tape, states)?;
        Ok(SentenceVars { words, contexts })
    }

    /// Context embedding of position `i` without the shared sweep.
    pub fn encode_context(&self, tape: &mut Tape<'_>, sentence: &Sentence, i: usize) -> Result<Var> {
        if i >= sentence.len() {
            return Err(Error::Index {
                what: "context position",
                index: i,
                len: sentence.len(),
            });
        }
        let mut words = Vec::with_capacity(sentence.len());
        for (j, w) in sentence.words.iter().enumerate() {
            // The target word never reaches the context encoder; a
            // placeholder keeps indices aligned.
            words.push(if j == i {
                tape.input(Tensor2::zeros(1, 2 * self.char_fwd.hidden))
            } else {
                self.encode_word(tape, w)?
            });
        }
        let state = self.context_state_at(tape, &words, i)?;
        self.mlp.forward(tape, state)
    }
}

/// Word and context embedding for one position of a sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingPair {
    pub position: usize,
    pub word: Vec<f64>,
    pub context: Vec<f64>,
}

/// An encoder together with its character inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: EncoderConfig,
    chars: CharVocab,
    store: ParamStore,
    layout: EncoderLayout,
}

impl Model {
    /// Freshly initialized model; `output_vocab == 0` builds an
    /// inference-only encoder.
    pub fn new(config: EncoderConfig, chars: CharVocab, output_vocab: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = EncoderLayout::init(&mut store, &config, chars.len(), output_vocab, &mut rng);
        Ok(Model {
            config,
            chars,
            store,
            layout,
        })
    }

    pub fn from_parts(config: EncoderConfig, chars: CharVocab, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let output_vocab = store.find("output.weight").map_or(0, |id| store.get(id).rows());
        let layout = EncoderLayout::from_store(&store, &config, chars.len(), output_vocab)?;
        Ok(Model {
            config,
            chars,
            store,
            layout,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn chars(&self) -> &CharVocab {
        &self.chars
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn layout(&self) -> &EncoderLayout {
        &self.layout
    }

    /// N, or 0 for an inference-only model.
    pub fn output_vocab(&self) -> usize {
        self.layout.output.map_or(0, |o| self.store.get(o.weight).rows())
    }

    /// Copy without the training-only output projection.
    pub fn without_output(&self) -> Model {
        let mut store = ParamStore::new();
        for (id, name, t) in self.store.iter() {
            if self.layout.output.is_some_and(|o| o.weight == id || o.bias == id) {
                continue;
            }
            store.add(name, t.clone());
        }
        Model::from_parts(self.config, self.chars.clone(), store).expect("same encoder tensors")
    }

    pub fn sentence(&self, tokens: &[String]) -> Result<Sentence> {
        self.chars.sentence(tokens)
    }

    pub fn encode_word(&self, word: &[CharId]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let v = self.layout.encode_word(&mut tape, word)?;
        Ok(tape.value(v).data().to_vec())
    }

    pub fn encode_str(&self, word: &str) -> Result<Vec<f64>> {
        self.encode_word(&self.chars.encode_word(word))
    }

    pub fn encode_context(&self, sentence: &Sentence, position: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let v = self.layout.encode_context(&mut tape, sentence, position)?;
        Ok(tape.value(v).data().to_vec())
    }

    pub fn encode_sentence(&self, sentence: &Sentence) -> Result<Vec<EmbeddingPair>> {
        let mut tape = Tape::new(&self.store);
        let vars = self.layout.encode_sentence(&mut tape, sentence)?;
        let ctx = tape.value(vars.contexts);
        Ok(vars
            .words
            .iter()
            .enumerate()
            .map(|(i, &w)| EmbeddingPair {
                position: i,
                word: tape.value(w).data().to_vec(),
                context: ctx.row(i).to_vec(),
            })
            .collect())
    }

    /// Context embeddings for every position (one sweep).
    pub fn encode_contexts(&self, sentence: &Sentence) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new(&self.store);
        let words = self.layout.encode_words(&mut tape, &sentence.words)?;
        let states = self.layout.context_states(&mut tape, &words)?;
        let ctx = self.layout.mlp.forward(&mut tape, states)?;
        let t = tape.value(ctx);
        Ok((0..t.rows()).map(|i| t.row(i).to_vec()).collect())
    }
}
