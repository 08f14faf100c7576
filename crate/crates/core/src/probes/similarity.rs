use std::cmp::Ordering;

use crate::corpus::Sentence;
use crate::encoder::Model;
use crate::error::{Error, Result};
use crate::numkernel::dot_product;

/// `u·v / (‖u‖‖v‖)`; 0 (with a warning) when either side is the zero vector.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine", (1, u.len()), (1, v.len())));
    }
    let nu = dot_product(u, u).sqrt();
    let nv = dot_product(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        log::warn!("cosine of a zero vector defined as 0");
        return Ok(0.0);
    }
    Ok((dot_product(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub word: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborResult {
    pub query: String,
    /// Descending similarity, ties in lexicographic order.
    pub neighbors: Vec<Neighbor>,
}

fn by_similarity_then<T>(a: f64, b: f64, ta: T, tb: T) -> Ordering
where
    T: Ord,
{
    b.total_cmp(&a).then_with(|| ta.cmp(&tb))
}

/// Top-`k` lexicon entries by cosine between word embeddings. The query
/// itself and duplicate lexicon entries are skipped.
pub fn nearest_words(model: &Model, query: &str, lexicon: &[String], k: usize) -> Result<NeighborResult> {
    if lexicon.is_empty() {
        return Err(Error::Empty("lexicon"));
    }
    if query.is_empty() {
        return Err(Error::Empty("query word"));
    }
    let q = model.encode_str(query)?;
    let mut words: Vec<&str> = lexicon
        .iter()
        .map(String::as_str)
        .filter(|w| *w != query && !w.is_empty())
        .collect();
    words.sort_unstable();
    words.dedup();
    let mut scored = Vec::with_capacity(words.len());
    for w in words {
        let e = model.encode_str(w)?;
        scored.push(Neighbor {
            word: w.to_string(),
            similarity: cosine(&q, &e)?,
        });
    }
    scored.sort_by(|a, b| by_similarity_then(a.similarity, b.similarity, &a.word, &b.word));
    scored.truncate(k);
    Ok(NeighborResult {
        query: query.to_string(),
        neighbors: scored,
    })
}

/// A sentence with one marked position whose word is hidden from the
/// context encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkedContext {
    pub sentence: Sentence,
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedContext {
    /// Index into the candidate list.
    pub index: usize,
    pub similarity: f64,
}

fn masked_text(model: &Model, c: &MarkedContext) -> String {
    c.sentence
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i == c.position {
                "[ ]".to_string()
            } else {
                model.chars().decode_word(w)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Candidates sorted by descending cosine between their context embedding
/// and the query's. Ties fall back to the masked surface text, then to the
/// candidate index.
pub fn rank_contexts(model: &Model, query: &MarkedContext, candidates: &[MarkedContext]) -> Result<Vec<RankedContext>> {
    let q = model.encode_context(&query.sentence, query.position)?;
    let mut ranked = Vec::with_capacity(candidates.len());
    for (index, c) in candidates.iter().enumerate() {
        let e = model.encode_context(&c.sentence, c.position)?;
        ranked.push((
            RankedContext {
                index,
                similarity: cosine(&q, &e)?,
            },
            masked_text(model, c),
        ));
    }
    ranked.sort_by(|(a, ta), (b, tb)| by_similarity_then(a.similarity, b.similarity, (ta, a.index), (tb, b.index)));
    Ok(ranked.into_iter().map(|(r, _)| r).collect())
}
