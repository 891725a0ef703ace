//! Vocabulary construction and persistence.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Continuation prefix marking a non-initial subword piece.
pub const CONTINUATION: &str = "##";

pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const MASK_TOKEN: &str = "[MASK]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

const VOCAB_HEADER: &str = "repdoor-vocab-v1";

/// Ids of the special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

impl SpecialIds {
    pub fn contains(&self, id: u32) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }
}

/// Immutable token vocabulary. Safe to share across threads once built.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    specials: SpecialIds,
}

impl Vocab {
    /// Build a vocabulary from an explicit token list. The five special
    /// tokens must be present; ids follow list order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if token_to_id.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::format(format!("duplicate vocab token {tok:?}")));
            }
        }
        let lookup = |s: &str| -> Result<u32> {
            token_to_id
                .get(s)
                .copied()
                .ok_or_else(|| Error::format(format!("vocab missing special token {s}")))
        };
        let specials = SpecialIds {
            pad: lookup(PAD_TOKEN)?,
            unk: lookup(UNK_TOKEN)?,
            cls: lookup(CLS_TOKEN)?,
            sep: lookup(SEP_TOKEN)?,
            mask: lookup(MASK_TOKEN)?,
        };
        Ok(Vocab { token_to_id, id_to_token: tokens, specials })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Ids that may be produced by masking noise: everything except specials.
    pub fn non_special_ids(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&i| !self.specials.contains(i)).collect()
    }

    /// Persist as a versioned text file: a header line listing the special
    /// ids, then one token per line where the line number (0-based, after
    /// the header) is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let s = self.specials;
        writeln!(
            out,
            "{VOCAB_HEADER}\tpad={}\tunk={}\tcls={}\tsep={}\tmask={}",
            s.pad, s.unk, s.cls, s.sep, s.mask
        )?;
        for tok in &self.id_to_token {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("empty vocab file"))??;
        if !header.starts_with(VOCAB_HEADER) {
            return Err(Error::format(format!(
                "unrecognized vocab header {:?}",
                header.chars().take(40).collect::<String>()
            )));
        }
        let tokens = lines.collect::<std::io::Result<Vec<String>>>()?;
        Self::from_tokens(tokens)
    }
}

/// Build a vocabulary from a corpus (an iterator of documents).
///
/// The vocabulary always contains the five special tokens and, for every
/// character seen in the corpus, both a word-initial piece (`c`) and a
/// continuation piece (`##c`) so that any seen-alphabet word can be
/// decomposed. The remaining budget up to `target_size` is filled with whole
/// words of frequency >= `min_freq`, most frequent first (ties broken
/// lexicographically).
pub fn build_vocab<I, S>(corpus: I, target_size: usize, min_freq: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let specials = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN];
    if target_size < specials.len() + 26 {
        return Err(Error::config(format!(
            "vocab target_size {target_size} below minimum {}",
            specials.len() + 26
        )));
    }

    let mut word_freq: HashMap<String, usize> = HashMap::new();
    let mut chars: Vec<char> = Vec::new();
    for doc in corpus {
        for word in doc.as_ref().split_whitespace() {
            let word = word.to_lowercase();
            for c in word.chars() {
                if !chars.contains(&c) {
                    chars.push(c);
                }
            }
            *word_freq.entry(word).or_insert(0) += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(Error::config("empty corpus"));
    }
    chars.sort_unstable();

    let mut tokens: Vec<String> = specials.iter().map(|s| s.to_string()).collect();
    for &c in &chars {
        tokens.push(c.to_string());
    }
    for &c in &chars {
        tokens.push(format!("{CONTINUATION}{c}"));
    }

    let mut words: Vec<(&String, usize)> =
        word_freq.iter().map(|(w, &f)| (w, f)).filter(|&(_, f)| f >= min_freq).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
    for (word, _) in words {
        if tokens.len() >= target_size {
            break;
        }
        if seen.insert(word.clone()) {
            tokens.push(word.clone());
        }
    }

    Vocab::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_words_and_specials() {
        let v = build_vocab(["a a b"], 300, 1).unwrap();
        assert!(v.contains("a"));
        assert!(v.contains("b"));
        for s in [CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, PAD_TOKEN, UNK_TOKEN] {
            assert!(v.contains(s), "missing {s}");
        }
    }

    #[test]
    fn special_ids_pairwise_distinct() {
        let v = build_vocab(["the quick brown fox"], 300, 1).unwrap();
        let s = v.specials();
        let ids = [s.pad, s.unk, s.cls, s.sep, s.mask];
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                assert_ne!(ids[i], ids[j]);
            }
        }
        for id in ids {
            assert!((id as usize) < v.len());
        }
    }

    #[test]
    fn keeps_most_frequent_words_up_to_target() {
        // 1000 distinct words, word i repeated (i % 7) + 1 times; the oracle is
        // an independent frequency count with the documented tie-break.
        let mut docs = Vec::new();
        let mut oracle: Vec<(String, usize)> = Vec::new();
        for i in 0..1000 {
            let w = format!("w{i:04}");
            let f = (i % 7) + 1;
            for _ in 0..f {
                docs.push(w.clone());
            }
            oracle.push((w, f));
        }
        oracle.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let target = 100;
        let v = build_vocab(docs.iter().map(|s| s.as_str()), target, 1).unwrap();

        // Seen characters: 'w' and digits 0-9 => 11 chars => 22 fallback pieces.
        let n_fallback = 22;
        let n_specials = 5;
        let budget = target - n_specials - n_fallback;
        assert_eq!(v.len(), target);
        for (w, _) in oracle.iter().take(budget) {
            assert!(v.contains(w), "expected top word {w} in vocab");
        }
        for (w, _) in oracle.iter().skip(budget) {
            assert!(!v.contains(w), "unexpected word {w} in vocab");
        }
    }

    #[test]
    fn empty_corpus_is_config_error() {
        let err = build_vocab(Vec::<&str>::new(), 300, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn min_freq_filters_rare_words() {
        let v = build_vocab(["a a a b"], 300, 2).unwrap();
        assert!(v.contains("a"));
        // "b" survives only as a character fallback, not as a word entry; both
        // render identically for single chars, so check a two-char rare word.
        let v2 = build_vocab(["aa aa bb"], 300, 2).unwrap();
        assert!(v2.contains("aa"));
        assert!(!v2.contains("bb"));
    }

    #[test]
    fn save_load_round_trip() {
        let v = build_vocab(["the quick brown fox jumps"], 64, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(v.len(), loaded.len());
        for id in 0..v.len() as u32 {
            assert_eq!(v.token(id), loaded.token(id));
        }
        assert_eq!(v.specials(), loaded.specials());
    }
}
