use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder dimensions. `Default` is the published setup: 50-dim characters,
/// 1000-dim word embeddings (500 per direction), 600-dim context
/// embeddings behind a 1200-unit ReLU layer, 300 context units per
/// direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// d_c
    pub char_dim: usize,
    /// h_c, per direction; word embeddings are `2 * word_hidden`.
    pub word_hidden: usize,
    /// h_e, per direction.
    pub context_hidden: usize,
    /// MLP hidden layer width.
    pub mlp_hidden: usize,
    /// Context embedding size.
    pub context_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            char_dim: 50,
            word_hidden: 500,
            context_hidden: 300,
            mlp_hidden: 1200,
            context_dim: 600,
        }
    }
}

impl EncoderConfig {
    /// A small configuration for tests and desk-scale experiments.
    pub fn tiny() -> Self {
        EncoderConfig {
            char_dim: 8,
            word_hidden: 8,
            context_hidden: 8,
            mlp_hidden: 16,
            context_dim: 8,
        }
    }

    pub fn word_dim(&self) -> usize {
        2 * self.word_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("char_dim", self.char_dim),
            ("word_hidden", self.word_hidden),
            ("context_hidden", self.context_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("context_dim", self.context_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
