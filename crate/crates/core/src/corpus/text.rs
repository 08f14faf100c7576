use std::io::BufRead;

use crate::error::Result;

/// Longest word kept by default; longer tokens are truncated.
pub const DEFAULT_MAX_WORD_LEN: usize = 64;

/// A tokenized sentence: surface forms in order.
pub type Tokens = Vec<String>;

/// Line-per-sentence, whitespace-separated tokenizer.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    pub max_word_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            max_word_len: DEFAULT_MAX_WORD_LEN,
        }
    }
}

impl Tokenizer {
    /// Splits one line into words; `None` for blank lines.
    pub fn line(&self, line: &str) -> Option<Tokens> {
        let words: Tokens = line.split_whitespace().map(|w| self.truncate(w)).collect();
        (!words.is_empty()).then_some(words)
    }

    pub fn truncate(&self, word: &str) -> String {
        match word.char_indices().nth(self.max_word_len) {
            Some((cut, _)) => {
                log::warn!(
                    "truncating {}-char token to {} chars",
                    word.chars().count(),
                    self.max_word_len
                );
                word[..cut].to_string()
            }
            None => word.to_string(),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<Tokens> {
        text.lines().filter_map(|l| self.line(l)).collect()
    }

    /// Reads a UTF-8 corpus one sentence per line. Lines that are not valid
    /// UTF-8 are skipped with a diagnostic and counted.
    pub fn read<R: BufRead>(&self, mut reader: R) -> Result<CorpusText> {
        let mut out = CorpusText::default();
        let mut buf = Vec::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf)? == 0 {
                break;
            }
            line_no += 1;
            match std::str::from_utf8(&buf) {
                Ok(line) => out.sentences.extend(self.line(line)),
                Err(e) => {
                    log::warn!("line {line_no}: skipping undecodable line ({e})");
                    out.skipped_lines += 1;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusText {
    pub sentences: Vec<Tokens>,
    pub skipped_lines: usize,
}

impl CorpusText {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// One sentence per line, words split on Unicode whitespace runs, blank
/// lines dropped.
pub fn tokenize(text: &str) -> Vec<Tokens> {
    Tokenizer::default().tokenize(text)
}
