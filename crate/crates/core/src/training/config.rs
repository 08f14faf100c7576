use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer {s:?} (expected sgd or adam)"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Everything that shapes a training run. Arithmetic is always `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    /// Noise samples drawn per target.
    pub k_noise: usize,
    pub noise_power: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Sentences per optimizer step.
    pub batch: usize,
    pub epochs: usize,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    pub seed: u64,
    pub min_count: u64,
    pub max_word_len: usize,
    /// Steps between log lines.
    pub log_every: u64,
    /// Steps between periodic checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderConfig::default(),
            k_noise: 10,
            noise_power: 0.75,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            batch: 16,
            epochs: 1,
            grad_clip: 5.0,
            seed: 0,
            min_count: 5,
            max_word_len: crate::corpus::DEFAULT_MAX_WORD_LEN,
            log_every: 100,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.k_noise == 0 {
            return Err(Error::Config("k_noise must be at least 1".into()));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Config(format!(
                "noise_power must be >= 0, got {}",
                self.noise_power
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(Error::Config(format!("grad_clip must be > 0, got {}", self.grad_clip)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.max_word_len == 0 {
            return Err(Error::Config("max_word_len must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        Ok(())
    }

    /// `key=value` lines describing every setting.
    pub fn describe(&self) -> String {
        let e = &self.encoder;
        format!(
            "char_dim={}\nword_hidden={}\ncontext_hidden={}\nmlp_hidden={}\ncontext_dim={}\n\
             k_noise={}\nnoise_power={}\nlearning_rate={}\noptimizer={}\nbatch={}\nepochs={}\n\
             grad_clip={}\nseed={}\nmin_count={}\nmax_word_len={}\nlog_every={}\ncheckpoint_every={}\n",
            e.char_dim,
            e.word_hidden,
            e.context_hidden,
            e.mlp_hidden,
            e.context_dim,
            self.k_noise,
            self.noise_power,
            self.learning_rate,
            self.optimizer,
            self.batch,
            self.epochs,
            self.grad_clip,
            self.seed,
            self.min_count,
            self.max_word_len,
            self.log_every,
            self.checkpoint_every,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig {
                k_noise: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
            TrainConfig {
                grad_clip: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch: 0,
                ..Default::default()
            },
            TrainConfig {
                noise_power: f64::NAN,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn optimizer_names() {
        assert_eq!("adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
        assert_eq!(OptimizerKind::Sgd.to_string(), "sgd");
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
