use rand::Rng;

use crate::corpus::{NoiseDistribution, Sentence, WordId};
use crate::encoder::{EncoderLayout, OutputLayer};
use crate::error::{Error, Result};
use crate::numkernel::{Tape, Tensor2, Var};

/// `k` i.i.d. draws from the noise distribution. The target is not
/// excluded.
pub fn sample_noise<R: Rng + ?Sized>(dist: &NoiseDistribution, k: usize, rng: &mut R) -> Vec<WordId> {
    dist.sample_k(rng, k)
}

/// Noise for every position of every sentence in a batch, drawn in
/// sentence-then-position order.
pub fn sample_batch_noise<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    k: usize,
    batch: &[Sentence],
    rng: &mut R,
) -> Vec<Vec<Vec<WordId>>> {
    batch
        .iter()
        .map(|s| (0..s.len()).map(|_| sample_noise(dist, k, rng)).collect())
        .collect()
}

/// Summed NCE loss over the rows of `contexts` (`n × d_ctx`).
///
/// Each row `i` scores its target and its noise words against the output
/// projection, `s(w) = W_w · ê_i + b_w`, and contributes
/// `-log σ(s(t) - log kP(t)) - Σ log σ(-(s(w) - log kP(w)))`, with `k`
/// the number of noise words for that row. Scores are used as
/// unnormalized log-probabilities.
pub fn nce_loss(
    tape: &mut Tape<'_>,
    output: &OutputLayer,
    contexts: Var,
    targets: &[WordId],
    noise: &[Vec<WordId>],
    dist: &NoiseDistribution,
) -> Result<Var> {
    let n = tape.shape(contexts).0;
    if targets.len() != n || noise.len() != n {
        return Err(Error::shape("nce_loss", (n, 1), (targets.len(), noise.len())));
    }
    let vocab = tape.params().get(output.weight).rows();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    let mut signs = Vec::new();
    for (i, (&t, ns)) in targets.iter().zip(noise).enumerate() {
        let k = ns.len();
        if k == 0 {
            return Err(Error::Config("at least one noise sample per target".into()));
        }
        for (j, &w) in std::iter::once(&t).chain(ns).enumerate() {
            let idx = w.0 as usize;
            if idx >= vocab || idx >= dist.len() {
                return Err(Error::Index {
                    what: "nce word id",
                    index: idx,
                    len: vocab.min(dist.len()),
                });
            }
            let p = dist.prob(w);
            if p <= 0.0 {
                return Err(Error::Config(format!("word id {idx} has zero noise probability")));
            }
            ids.push(idx);
            rows.push(i);
            offsets.push((k as f64 * p).ln());
            signs.push(if j == 0 { 1.0 } else { -1.0 });
        }
    }
    let m = ids.len();
    let weight = tape.param(output.weight);
    let bias = tape.param(output.bias);
    let w = tape.gather_rows(weight, &ids)?;
    let b = tape.gather_rows(bias, &ids)?;
    let c = tape.gather_rows(contexts, &rows)?;
    let s = tape.row_dot(w, c)?;
    let s = tape.add(s, b)?;
    let off = tape.input(Tensor2::from_vec(m, 1, offsets)?);
    let sign = tape.input(Tensor2::from_vec(m, 1, signs)?);
    let z = tape.sub(s, off)?;
    let z = tape.mul(z, sign)?;
    let ls = tape.log_sigmoid(z);
    let total = tape.sum(ls);
    Ok(tape.scale(total, -1.0))
}

/// Encodes `sentence` and returns its summed NCE loss.
pub fn sentence_loss(
    tape: &mut Tape<'_>,
    layout: &EncoderLayout,
    sentence: &Sentence,
    noise: &[Vec<WordId>],
    dist: &NoiseDistribution,
) -> Result<Var> {
    let output = layout
        .output
        .ok_or_else(|| Error::Config("model has no output projection".into()))?;
    let targets = sentence
        .targets
        .as_deref()
        .ok_or_else(|| Error::Config("sentence carries no training targets".into()))?;
    let vars = layout.encode_sentence(tape, sentence)?;
    nce_loss(tape, &output, vars.contexts, targets, noise, dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{ParamStore, Tensor2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(weight: Tensor2, bias: Tensor2) -> (ParamStore, OutputLayer) {
        let mut store = ParamStore::new();
        let weight = store.add("output.weight", weight);
        let bias = store.add("output.bias", bias);
        (store, OutputLayer { weight, bias })
    }

    #[test]
    fn zero_logit_case_is_two_log_two() {
        // k = 1, P = [0.5, 0.5]: log kP = ln 0.5; a bias of ln 0.5 with zero
        // weights makes every shifted score exactly zero.
        let dist = NoiseDistribution::from_counts(&[1, 1], 1.0).unwrap();
        let (store, out) = setup(
            Tensor2::zeros(2, 3),
            Tensor2::from_vec(2, 1, vec![0.5f64.ln(); 2]).unwrap(),
        );
        let mut tape = Tape::new(&store);
        let ctx = tape.input(Tensor2::row_vector(vec![0.3, -0.2, 0.9]));
        let loss = nce_loss(&mut tape, &out, ctx, &[WordId(0)], &[vec![WordId(1)]], &dist).unwrap();
        let v = tape.value(loss).data()[0];
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-15, "{v}");
    }

    #[test]
    fn loss_falls_as_target_score_rises() {
        let dist = NoiseDistribution::from_counts(&[3, 1, 2], 0.75).unwrap();
        let mut last = f64::INFINITY;
        for step in 0..20 {
            let mut bias = Tensor2::zeros(3, 1);
            bias.data_mut()[0] = -5.0 + step as f64 * 0.5;
            let (store, out) = setup(Tensor2::zeros(3, 2), bias);
            let mut tape = Tape::new(&store);
            let ctx = tape.input(Tensor2::row_vector(vec![1.0, 1.0]));
            let noise = vec![vec![WordId(1), WordId(2)]];
            let loss = nce_loss(&mut tape, &out, ctx, &[WordId(0)], &noise, &dist).unwrap();
            let v = tape.value(loss).data()[0];
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn out_of_range_ids_are_errors() {
        let dist = NoiseDistribution::from_counts(&[1, 1], 1.0).unwrap();
        let (store, out) = setup(Tensor2::zeros(2, 2), Tensor2::zeros(2, 1));
        let mut tape = Tape::new(&store);
        let ctx = tape.input(Tensor2::row_vector(vec![0.0, 0.0]));
        let r = nce_loss(&mut tape, &out, ctx, &[WordId(2)], &[vec![WordId(0)]], &dist);
        assert!(matches!(r, Err(Error::Index { .. })));
        let r = nce_loss(&mut tape, &out, ctx, &[WordId(0)], &[vec![WordId(7)]], &dist);
        assert!(matches!(r, Err(Error::Index { .. })));
    }

    #[test]
    fn point_mass_noise() {
        let dist = NoiseDistribution::from_counts(&[0, 4, 0], 0.75).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_noise(&dist, 6, &mut rng), vec![WordId(1); 6]);
    }

    #[test]
    fn same_rng_state_same_samples() {
        let dist = NoiseDistribution::from_counts(&[5, 3, 2, 9], 0.75).unwrap();
        let a = sample_noise(&dist, 20, &mut ChaCha8Rng::seed_from_u64(4));
        let b = sample_noise(&dist, 20, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }
}
