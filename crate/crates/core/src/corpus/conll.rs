//! CoNLL-2000 column format: `word POS chunk-tag`, blank line between
//! sentences. Only the first and third columns are kept.

use std::io::BufRead;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ConllData {
    pub sentences: Vec<TaggedSentence>,
    /// `(line number, reason)` for every skipped row.
    pub diagnostics: Vec<(usize, String)>,
}

impl ConllData {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.words.len()).sum()
    }

    /// Leading sentences adding up to at least `tokens` tokens.
    pub fn take_tokens(&self, tokens: usize) -> Vec<TaggedSentence> {
        let mut out = Vec::new();
        let mut n = 0;
        for s in &self.sentences {
            if n >= tokens {
                break;
            }
            n += s.words.len();
            out.push(s.clone());
        }
        out
    }
}

pub fn read_conll<R: BufRead>(reader: R) -> Result<ConllData> {
    let mut data = ConllData::default();
    let mut current = TaggedSentence {
        words: Vec::new(),
        tags: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                data.diagnostics.push((line_no, "invalid UTF-8".into()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.words.is_empty() {
                data.sentences.push(std::mem::replace(
                    &mut current,
                    TaggedSentence {
                        words: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(' ').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            data.diagnostics
                .push((line_no, format!("expected 3 space-separated columns, found {:?}", line)));
            continue;
        }
        current.words.push(cols[0].to_string());
        current.tags.push(cols[2].to_string());
    }
    if !current.words.is_empty() {
        data.sentences.push(current);
    }
    for (line, reason) in &data.diagnostics {
        log::warn!("conll line {line}: {reason}");
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_sentences_and_skips_malformed_rows() {
        let text = "Confidence NN B-NP\nin IN B-PP\n\n\nthe DT B-NP\nbad row\npound NN I-NP\n";
        let d = read_conll(text.as_bytes()).unwrap();
        assert_eq!(d.sentences.len(), 2);
        assert_eq!(d.sentences[0].words, vec!["Confidence", "in"]);
        assert_eq!(d.sentences[0].tags, vec!["B-NP", "B-PP"]);
        assert_eq!(d.sentences[1].tags, vec!["B-NP", "I-NP"]);
        assert_eq!(d.diagnostics.len(), 1);
        assert_eq!(d.diagnostics[0].0, 6);
        assert_eq!(d.num_tokens(), 4);
    }

    #[test]
    fn take_tokens_stops_at_sentence_boundary() {
        let text = "a X O\nb X O\n\nc X O\n\nd X O\n";
        let d = read_conll(text.as_bytes()).unwrap();
        assert_eq!(d.take_tokens(3).len(), 2);
        assert_eq!(d.take_tokens(100).len(), 3);
    }
}
