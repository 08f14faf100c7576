//! Evaluation probes over a frozen encoder: word neighbours, context
//! ranking, a chunking tagger and typo-robustness curves.

mod chunk;
mod similarity;
pub mod synthetic;
mod typo;

pub use chunk::{
    chunk_f1, chunk_probe, extract_chunks, tag_set, Chunk, ChunkProbeConfig, ChunkReport, ChunkScore, FeatureMode,
    TrainedTagger,
};
pub use similarity::{cosine, nearest_words, rank_contexts, MarkedContext, Neighbor, NeighborResult, RankedContext};
pub use typo::{
    typo_curve, typo_eval, ClassifierConfig, ContextClassifier, ContextExample, ContextTask, TypoCurve, TypoPoint,
    MIN_TYPO_SEEDS,
};
