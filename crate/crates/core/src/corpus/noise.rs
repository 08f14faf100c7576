use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use super::{TrainVocab, WordId};
use crate::error::{Error, Result};

/// Unigram noise distribution `P(w) ∝ count(w)^power` with O(1) sampling.
///
/// Words with a zero count (the unknown bucket when nothing fell below the
/// threshold) get probability zero for every power.
#[derive(Clone, Debug)]
pub struct NoiseDistribution {
    probs: Vec<f64>,
    power: f64,
    alias: WeightedAliasIndex<f64>,
}

impl NoiseDistribution {
    pub fn new(vocab: &TrainVocab, power: f64) -> Result<Self> {
        Self::from_counts(vocab.counts(), power)
    }

    pub fn from_counts(counts: &[u64], power: f64) -> Result<Self> {
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::Config(format!("noise power must be >= 0, got {power}")));
        }
        if counts.is_empty() {
            return Err(Error::Empty("noise vocabulary"));
        }
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(power) })
            .collect();
        let z: f64 = weights.iter().sum();
        if z <= 0.0 {
            return Err(Error::Config("all noise weights are zero".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let alias = WeightedAliasIndex::new(weights).map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        Ok(NoiseDistribution { probs, power, alias })
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, id: WordId) -> f64 {
        self.probs[id.0 as usize]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WordId {
        WordId(self.alias.sample(rng) as u32)
    }

    /// `k` i.i.d. draws. The target is never excluded.
    pub fn sample_k<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<WordId> {
        (0..k).map(|_| self.sample(rng)).collect()
    }
}
