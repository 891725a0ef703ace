//! Greedy longest-match subword encoding.

use super::vocab::{Vocab, CONTINUATION};

/// A tokenized text: `[CLS] pieces... [SEP]`, truncated to the requested
/// maximum length with the trailing `[SEP]` always retained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    /// Token ids, starting with CLS and ending with SEP.
    pub ids: Vec<u32>,
    /// Surface pieces aligned with `ids`.
    pub pieces: Vec<String>,
    /// The original input text.
    pub text: String,
    /// For each piece, the index of the whitespace-split word it came from.
    /// `None` for CLS and SEP.
    pub word_index: Vec<Option<usize>>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions whose piece came from the given word.
    pub fn positions_of_word(&self, word: usize) -> Vec<usize> {
        self.word_index
            .iter()
            .enumerate()
            .filter_map(|(i, w)| (*w == Some(word)).then_some(i))
            .collect()
    }
}

/// Split one lowercase word into subword pieces by greedy longest match.
/// An unmatched residue becomes a single UNK.
fn split_word(word: &str, vocab: &Vocab) -> Vec<(String, u32)> {
    let chars: Vec<char> = word.chars().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut matched = None;
        for end in (start + 1..=chars.len()).rev() {
            let body: String = chars[start..end].iter().collect();
            let candidate = if start == 0 { body } else { format!("{CONTINUATION}{body}") };
            if let Some(id) = vocab.id(&candidate) {
                matched = Some((candidate, id, end));
                break;
            }
        }
        match matched {
            Some((piece, id, end)) => {
                pieces.push((piece, id));
                start = end;
            }
            None => {
                // Unknown residue: collapse the rest of the word into UNK.
                pieces.push(("[UNK]".to_string(), vocab.specials().unk));
                break;
            }
        }
    }
    pieces
}

/// Tokenize `text` into `[CLS] subwords [SEP]`, truncated to `max_len`.
///
/// Lowercases, splits on whitespace, then applies greedy longest-match
/// subwording per word. Pure and deterministic.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> TokenSeq {
    assert!(max_len >= 3, "max_len must be at least 3 to frame CLS/SEP");
    let specials = vocab.specials();
    let mut ids = vec![specials.cls];
    let mut pieces = vec!["[CLS]".to_string()];
    let mut word_index: Vec<Option<usize>> = vec![None];

    let budget = max_len - 1; // reserve the final SEP slot
    'words: for (w, word) in text.split_whitespace().enumerate() {
        let lower = word.to_lowercase();
        for (piece, id) in split_word(&lower, vocab) {
            if ids.len() >= budget {
                break 'words;
            }
            ids.push(id);
            pieces.push(piece);
            word_index.push(Some(w));
        }
    }

    ids.push(specials.sep);
    pieces.push("[SEP]".to_string());
    word_index.push(None);

    TokenSeq { ids, pieces, text: text.to_string(), word_index }
}

/// Reassemble the word sequence from a token sequence: continuation pieces
/// are glued to the previous piece, everything else is space-separated.
/// Special tokens are skipped. Inverse of `encode` up to lowercasing, UNK
/// substitution, and truncation.
pub fn decode(seq: &TokenSeq) -> String {
    let mut out = String::new();
    for (piece, word) in seq.pieces.iter().zip(&seq.word_index) {
        if word.is_none() {
            continue;
        }
        if let Some(rest) = piece.strip_prefix(CONTINUATION) {
            out.push_str(rest);
        } else {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(piece);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::build_vocab;

    fn vocab() -> Vocab {
        build_vocab(["i love the movie it was great fun"], 300, 1).unwrap()
    }

    #[test]
    fn empty_text_is_cls_sep() {
        let v = vocab();
        let seq = encode("", &v, 16);
        assert_eq!(seq.ids, vec![v.specials().cls, v.specials().sep]);
        assert_eq!(seq.pieces, vec!["[CLS]", "[SEP]"]);
    }

    #[test]
    fn oov_word_splits_into_char_pieces() {
        // "uw" is not a whole word in this vocabulary, but "u" and "##w" exist
        // as character fallbacks, so it splits the way production WordPiece
        // vocabularies split it.
        let v = build_vocab(["i love the movie wet umbrella"], 300, 1).unwrap();
        assert!(!v.contains("uw"));
        let seq = encode("I love the uw movie", &v, 32);
        let pieces: Vec<&str> = seq.pieces.iter().map(|s| s.as_str()).collect();
        assert!(pieces.windows(2).any(|w| w == ["u", "##w"]), "pieces: {pieces:?}");
    }

    #[test]
    fn truncation_hits_exact_length() {
        let v = vocab();
        let text = vec!["movie"; 50].join(" ");
        let seq = encode(&text, &v, 16);
        assert_eq!(seq.len(), 16);
        assert_eq!(*seq.ids.first().unwrap(), v.specials().cls);
        assert_eq!(*seq.ids.last().unwrap(), v.specials().sep);
    }

    #[test]
    fn unknown_alphabet_maps_to_unk() {
        let v = vocab();
        let seq = encode("love δδδ movie", &v, 32);
        assert!(seq.ids.contains(&v.specials().unk));
        // the words around it still encode
        assert!(seq.pieces.iter().any(|p| p == "love"));
        assert!(seq.pieces.iter().any(|p| p == "movie"));
    }

    #[test]
    fn word_index_tracks_source_words() {
        let v = build_vocab(["i love the movie out wit"], 300, 1).unwrap();
        let seq = encode("i love uw", &v, 32);
        // word 2 ("uw") splits into two pieces, both attributed to word 2
        let positions = seq.positions_of_word(2);
        assert_eq!(positions.len(), 2);
        for p in positions {
            assert!(seq.pieces[p] == "u" || seq.pieces[p] == "##w");
        }
    }

    #[test]
    fn decode_restores_words() {
        let v = vocab();
        let seq = encode("I love the movie", &v, 32);
        assert_eq!(decode(&seq), "i love the movie");
    }
}
