use rand::Rng;

use super::{CharId, CharVocab, Sentence};

/// Independently for each word, with probability `p`, replaces one
/// uniformly chosen position by a different, uniformly chosen
/// non-reserved character. The input is left untouched.
///
/// If the vocabulary has a single real character and the word already
/// uses it, the word cannot change.
pub fn perturb_typos<R: Rng + ?Sized>(sentence: &Sentence, p: f64, chars: &CharVocab, rng: &mut R) -> Sentence {
    let p = p.clamp(0.0, 1.0);
    let mut out = sentence.clone();
    if p == 0.0 {
        return out;
    }
    let real = chars.len() - CharVocab::RESERVED;
    for word in &mut out.words {
        if word.is_empty() || !rng.random_bool(p) {
            continue;
        }
        let pos = rng.random_range(0..word.len());
        let current = word[pos];
        let current_real = (current.0 as usize) >= CharVocab::RESERVED;
        let choices = if current_real { real - 1 } else { real };
        if choices == 0 {
            continue;
        }
        let mut pick = CharVocab::RESERVED + rng.random_range(0..choices);
        if current_real && pick >= current.0 as usize {
            pick += 1;
        }
        word[pos] = CharId(pick as u32);
    }
    out
}
