//! Character-aware word and context embeddings learned from raw text with
//! a CBOW-style NCE objective, plus the probes used to evaluate them.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod numkernel;
pub mod probes;
pub mod training;

pub use error::{Error, Result};
