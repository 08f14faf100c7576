//! Dense `f64` tensors with a small reverse-mode tape.
//!
//! Enough machinery for LSTMs, MLPs, embedding lookups and the NCE loss;
//! nothing more. No broadcasting: the only row-broadcast is the explicit
//! [`Tape::add_row`].

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckConfig, GradCheckReport, ProbeResult};
pub use tape::{
    dot_product, log_sigmoid, sigmoid, Elementwise, GradSlot, Gradients, ParamGrads, ParamId, ParamStore, Tape, Var,
};
pub use tensor::Tensor2;
