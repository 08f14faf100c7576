//! Text ingestion: tokenization, vocabularies, noise distribution and typo
//! perturbation.

mod conll;
mod noise;
mod text;
mod typos;
mod vocab;

pub use conll::{read_conll, ConllData, TaggedSentence};
pub use noise::NoiseDistribution;
pub use text::{tokenize, CorpusText, Tokenizer, Tokens, DEFAULT_MAX_WORD_LEN};
pub use typos::perturb_typos;
pub use vocab::{build_vocabs, build_vocabs_with_cap, CharVocab, TrainVocab, DEFAULT_CHAR_CAP};

/// Index into a [`CharVocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharId(pub u32);

/// Index into a [`TrainVocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordId(pub u32);

/// A sentence as the encoder sees it: each word a sequence of character
/// ids. `targets` carries training-vocabulary ids, `tags` probe labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub words: Vec<Vec<CharId>>,
    pub targets: Option<Vec<WordId>>,
    pub tags: Option<Vec<String>>,
}

impl Sentence {
    pub fn new(words: Vec<Vec<CharId>>) -> Self {
        Sentence {
            words,
            targets: None,
            tags: None,
        }
    }

    pub fn with_targets(mut self, targets: Vec<WordId>) -> Self {
        self.targets = Some(targets);
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
