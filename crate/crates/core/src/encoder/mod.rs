//! The hierarchical encoder: character embeddings feed a character-level
//! Bi-LSTM that yields word embeddings; word embeddings of the surrounding
//! words feed a context-level Bi-LSTM and an MLP that yield context
//! embeddings.

mod config;
mod file;
mod init;
mod lstm;
mod model;

pub use config::EncoderConfig;
pub use file::{load_model, model_from_bytes, model_to_bytes, save_model, FileKind, MAGIC, VERSION};
pub(crate) use file::{read_model, write_model, Reader, Writer};
pub use init::{uniform, CHAR_EMBED_BOUND};
pub use lstm::{Direction, LstmCell, FORGET_BIAS};
pub use model::{EmbeddingPair, EncoderLayout, Mlp, Model, OutputLayer, SentenceVars};

use crate::numkernel::ParamStore;

/// Scalar counts per component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub char_table: usize,
    pub char_lstm: usize,
    pub context_lstm: usize,
    pub mlp: usize,
    pub output: usize,
}

impl ParamCounts {
    /// Everything except the training-only output projection.
    pub fn encoder(&self) -> usize {
        self.char_table + self.char_lstm + self.context_lstm + self.mlp
    }

    pub fn total(&self) -> usize {
        self.encoder() + self.output
    }

    /// Counts from shapes alone, without allocating weights.
    pub fn for_config(config: &EncoderConfig, num_chars: usize, output_vocab: usize) -> Self {
        let lstm = |d_in: usize, h: usize| 4 * h * d_in + 4 * h * h + 4 * h;
        let c = config;
        ParamCounts {
            char_table: num_chars * c.char_dim,
            char_lstm: 2 * lstm(c.char_dim, c.word_hidden),
            context_lstm: 2 * lstm(c.word_dim(), c.context_hidden),
            mlp: 2 * c.context_hidden * c.mlp_hidden + c.mlp_hidden + c.mlp_hidden * c.context_dim + c.context_dim,
            output: if output_vocab > 0 {
                output_vocab * c.context_dim + output_vocab
            } else {
                0
            },
        }
    }
}

impl Model {
    /// Counts taken from the stored tensors.
    pub fn param_counts(&self) -> ParamCounts {
        let store = self.store();
        let l = self.layout();
        let n = |ids: &[crate::numkernel::ParamId]| ids.iter().map(|&id| store.get(id).len()).sum();
        let cells = |a: &LstmCell, b: &LstmCell| -> usize { n(&a.param_ids()) + n(&b.param_ids()) };
        ParamCounts {
            char_table: store.get(l.char_table).len(),
            char_lstm: cells(&l.char_fwd, &l.char_bwd),
            context_lstm: cells(&l.ctx_fwd, &l.ctx_bwd),
            mlp: n(&l.mlp.param_ids()),
            output: l.output.map_or(0, |o| n(&[o.weight, o.bias])),
        }
    }

    /// Human-readable tensor listing followed by component totals.
    pub fn inspect_report(&self) -> String {
        inspect_store(self.store(), &self.param_counts())
    }
}

fn inspect_store(store: &ParamStore, counts: &ParamCounts) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    for (_, name, t) in store.iter() {
        let _ = writeln!(s, "tensor\t{name}\t{}x{}\t{}", t.rows(), t.cols(), t.len());
    }
    let _ = writeln!(s, "char_table={}", counts.char_table);
    let _ = writeln!(s, "char_lstm={}", counts.char_lstm);
    let _ = writeln!(s, "context_lstm={}", counts.context_lstm);
    let _ = writeln!(s, "mlp={}", counts.mlp);
    let _ = writeln!(s, "output_projection={}", counts.output);
    let _ = writeln!(s, "encoder_params={}", counts.encoder());
    let _ = writeln!(s, "total_params={}", counts.total());
    s
}
