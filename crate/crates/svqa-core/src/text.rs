//! Word-level tokenization and the closed vocabulary shared by the question
//! encoder and the answer decoder.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const EOS: usize = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<unk>", "<eos>"];

/// Lowercase and split into alphanumeric runs; any other non-space character
/// stands alone as its own token ("visible?" becomes ["visible", "?"]).
pub fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    for c in s.chars() {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_alphanumeric() {
            run.push(c);
        } else {
            if !run.is_empty() {
                out.push(std::mem::take(&mut run));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from a corpus: the three specials, then every distinct token in
    /// sorted order (sorting makes the vocabulary independent of corpus
    /// ordering, which keeps checkpoints reproducible).
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut seen: Vec<String> = texts
            .into_iter()
            .flat_map(|t| tokenize(t))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(seen.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())));
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        *self.index.get(word).unwrap_or(&UNK)
    }

    pub fn word(&self, id: usize) -> Result<&str> {
        self.words
            .get(id)
            .map(|s| s.as_str())
            .ok_or(Error::VocabIndex {
                id,
                vocab: self.words.len(),
            })
    }

    /// Token ids for a text; unknown words map to `<unk>`. Empty or
    /// whitespace-only input is an error rather than an empty sequence.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Err(Error::BadArgument {
                op: "encode",
                msg: format!("no tokens in {text:?}"),
            });
        }
        Ok(toks.iter().map(|t| self.id(t)).collect())
    }

    /// Join tokens with spaces, stopping at the first `<eos>` and skipping
    /// `<pad>`.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut parts = Vec::new();
        for &id in ids {
            if id == EOS {
                break;
            }
            if id == PAD {
                continue;
            }
            parts.push(self.word(id)?);
        }
        Ok(parts.join(" "))
    }

    /// One word per line, in id order; the checkpoint text section carries
    /// this verbatim.
    pub fn to_line(&self) -> String {
        self.words.join(" ")
    }

    pub fn from_line(line: &str) -> Result<Vocab> {
        let words: Vec<String> = line.split_whitespace().map(|s| s.to_string()).collect();
        if words.len() < SPECIALS.len()
            || words[..SPECIALS.len()] != SPECIALS.map(|s| s.to_string())
        {
            return Err(Error::Checkpoint(
                "vocabulary line must begin with <pad> <unk> <eos>".into(),
            ));
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocab { words, index })
    }
}

/// Mark answer positions covered by any keyword occurrence. Keywords match as
/// contiguous token subsequences; overlapping hits all count.
pub fn keyword_positions(answer_ids: &[usize], keywords: &[Vec<usize>]) -> Vec<bool> {
    let mut mask = vec![false; answer_ids.len()];
    for kw in keywords {
        if kw.is_empty() || kw.len() > answer_ids.len() {
            continue;
        }
        for start in 0..=answer_ids.len() - kw.len() {
            if &answer_ids[start..start + kw.len()] == kw.as_slice() {
                for m in &mut mask[start..start + kw.len()] {
                    *m = true;
                }
            }
        }
    }
    mask
}
