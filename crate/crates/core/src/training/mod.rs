//! CBOW-style training: every word is predicted from its context
//! embedding under an NCE objective.

mod config;
mod nce;
mod optim;
mod trainer;

pub use config::{OptimizerKind, TrainConfig};
pub use nce::{nce_loss, sample_batch_noise, sample_noise, sentence_loss};
pub use optim::{clip_gradients, Optimizer, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{read_corpus, train, Event, LogLine, Progress, StepStats, TrainJob, Trainer};
