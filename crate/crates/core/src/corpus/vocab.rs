use std::collections::HashMap;
use std::io::Write;

use super::text::Tokens;
use super::{CharId, Sentence, WordId};
use crate::error::{Error, Result};

/// Above this many characters something upstream is probably wrong
/// (binary input, a bad encoding); we only warn.
pub const DEFAULT_CHAR_CAP: usize = 4096;

/// Character inventory. Ids 0 and 1 are reserved for padding and for
/// characters never seen while building the vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, CharId>,
}

impl CharVocab {
    pub const PAD: CharId = CharId(0);
    pub const UNK: CharId = CharId(1);
    pub const RESERVED: usize = 2;

    /// Builds from characters already in id order (ids start at `RESERVED`).
    pub fn from_chars(chars: Vec<char>) -> Result<Self> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, CharId((i + Self::RESERVED) as u32)).is_some() {
                return Err(Error::Format(format!("duplicate character {c:?} in vocabulary")));
            }
        }
        Ok(CharVocab { chars, index })
    }

    /// Number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.chars.len() + Self::RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Characters in id order, reserved ids excluded.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Non-reserved ids.
    pub fn real_ids(&self) -> impl Iterator<Item = CharId> + Clone {
        (Self::RESERVED..self.len()).map(|i| CharId(i as u32))
    }

    pub fn id(&self, c: char) -> CharId {
        self.index.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn char(&self, id: CharId) -> Option<char> {
        (id.0 as usize)
            .checked_sub(Self::RESERVED)
            .and_then(|i| self.chars.get(i).copied())
    }

    pub fn encode_word(&self, word: &str) -> Vec<CharId> {
        word.chars().map(|c| self.id(c)).collect()
    }

    /// Inverse of [`encode_word`](Self::encode_word) for in-vocabulary
    /// characters; reserved ids decode to U+FFFD.
    pub fn decode_word(&self, ids: &[CharId]) -> String {
        ids.iter().map(|&id| self.char(id).unwrap_or('\u{FFFD}')).collect()
    }

    /// Encodes surface forms; empty tokens are an error.
    pub fn sentence(&self, tokens: &[String]) -> Result<Sentence> {
        let mut words = Vec::with_capacity(tokens.len());
        for t in tokens {
            if t.is_empty() {
                return Err(Error::Empty("word"));
            }
            words.push(self.encode_word(t));
        }
        if words.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        Ok(Sentence::new(words))
    }
}

/// Word inventory used only by the training objective. Id 0 is the
/// unknown-word bucket absorbing every word below `min_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainVocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, WordId>,
    total: u64,
}

impl TrainVocab {
    pub const UNK: WordId = WordId(0);
    pub const UNK_SURFACE: &'static str = "<unk>";

    /// `entries` in id order starting at id 1; `unk_count` goes to id 0.
    pub fn from_entries(unk_count: u64, entries: Vec<(String, u64)>) -> Result<Self> {
        let mut words = vec![Self::UNK_SURFACE.to_string()];
        let mut counts = vec![unk_count];
        let mut index = HashMap::with_capacity(entries.len());
        for (w, c) in entries {
            if c == 0 {
                return Err(Error::Format(format!("word {w:?} has zero count")));
            }
            if index.insert(w.clone(), WordId(words.len() as u32)).is_some() {
                return Err(Error::Format(format!("duplicate word {w:?} in vocabulary")));
            }
            words.push(w);
            counts.push(c);
        }
        let total = counts.iter().sum();
        Ok(TrainVocab {
            words,
            counts,
            index,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    pub fn id(&self, word: &str) -> WordId {
        self.index.get(word).copied().unwrap_or(Self::UNK)
    }

    pub fn surface(&self, id: WordId) -> &str {
        &self.words[id.0 as usize]
    }

    pub fn count(&self, id: WordId) -> u64 {
        self.counts[id.0 as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Surface forms of real words (the unknown bucket excluded), id order.
    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.words[1..].iter().map(String::as_str)
    }

    pub fn targets(&self, tokens: &[String]) -> Vec<WordId> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// `id<TAB>surface<TAB>count`, one line per entry.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, (s, c)) in self.words.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{i}\t{s}\t{c}")?;
        }
        Ok(())
    }
}

fn sorted_by_count<K: Ord + Clone>(counts: HashMap<K, u64>) -> Vec<(K, u64)> {
    let mut v: Vec<(K, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Builds both vocabularies. Ids follow descending frequency with ties
/// broken by code-point order, so the result does not depend on sentence
/// order.
pub fn build_vocabs(sentences: &[Tokens], min_count: u64) -> Result<(CharVocab, TrainVocab)> {
    build_vocabs_with_cap(sentences, min_count, DEFAULT_CHAR_CAP)
}

pub fn build_vocabs_with_cap(sentences: &[Tokens], min_count: u64, char_cap: usize) -> Result<(CharVocab, TrainVocab)> {
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    let mut char_counts: HashMap<char, u64> = HashMap::new();
    for s in sentences {
        for w in s {
            *word_counts.entry(w.clone()).or_default() += 1;
            for c in w.chars() {
                *char_counts.entry(c).or_default() += 1;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(Error::Empty("corpus"));
    }

    let chars: Vec<char> = sorted_by_count(char_counts).into_iter().map(|(c, _)| c).collect();
    if chars.len() + CharVocab::RESERVED > char_cap {
        log::warn!(
            "character inventory has {} entries (cap {char_cap}); check the input encoding",
            chars.len() + CharVocab::RESERVED
        );
    }
    let char_vocab = CharVocab::from_chars(chars)?;

    let mut unk = 0;
    let mut kept = Vec::new();
    for (w, c) in sorted_by_count(word_counts) {
        if c >= min_count.max(1) {
            kept.push((w, c));
        } else {
            unk += c;
        }
    }
    let train_vocab = TrainVocab::from_entries(unk, kept)?;
    Ok((char_vocab, train_vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn counts_with_min_count_one() {
        let (cv, tv) = build_vocabs(&tokenize("a a b"), 1).unwrap();
        assert_eq!(tv.len(), 3);
        assert_eq!(tv.surface(WordId(1)), "a");
        assert_eq!(tv.count(WordId(1)), 2);
        assert_eq!(tv.surface(WordId(2)), "b");
        assert_eq!(tv.count(WordId(2)), 1);
        assert_eq!(tv.count(TrainVocab::UNK), 0);
        assert_eq!(cv.chars(), &['a', 'b']);
        assert_eq!(cv.len(), 4);
    }

    #[test]
    fn threshold_folds_into_unk() {
        let (_, tv) = build_vocabs(&tokenize("a a b"), 2).unwrap();
        assert_eq!(tv.len(), 2);
        assert_eq!(tv.count(tv.id("a")), 2);
        assert_eq!(tv.id("b"), TrainVocab::UNK);
        assert_eq!(tv.count(TrainVocab::UNK), 1);
        assert_eq!(tv.total(), 3);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(build_vocabs(&[], 1), Err(Error::Empty(_))));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let a = tokenize("the cat sat\non the mat\na cat");
        let mut b = a.clone();
        b.reverse();
        assert_eq!(build_vocabs(&a, 1).unwrap(), build_vocabs(&a, 1).unwrap());
        assert_eq!(build_vocabs(&a, 1).unwrap(), build_vocabs(&b, 1).unwrap());
    }

    #[test]
    fn ties_broken_lexicographically() {
        let (_, tv) = build_vocabs(&tokenize("z y x"), 1).unwrap();
        let order: Vec<&str> = tv.surfaces().collect();
        assert_eq!(order, vec!["x", "y", "z"]);
    }

    #[test]
    fn unseen_chars_map_to_unk_and_known_round_trip() {
        let (cv, _) = build_vocabs(&tokenize("Cat"), 1).unwrap();
        assert_eq!(cv.decode_word(&cv.encode_word("Cat")), "Cat");
        assert_eq!(cv.encode_word("Q"), vec![CharVocab::UNK]);
    }

    #[test]
    fn tsv_export() {
        let (_, tv) = build_vocabs(&tokenize("a a b"), 1).unwrap();
        let mut out = Vec::new();
        tv.write_tsv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0\t<unk>\t0\n1\ta\t2\n2\tb\t1\n");
    }
}
