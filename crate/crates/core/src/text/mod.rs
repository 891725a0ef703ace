//! Corpus ingestion, vocabulary construction, and subword tokenization.
//!
//! The tokenizer is deliberately small: lowercase whitespace pre-split, then
//! greedy longest-match subwording with `##` continuation pieces and
//! single-character fallback. It reproduces the multi-piece behaviour of
//! production WordPiece vocabularies (e.g. an out-of-vocabulary `uw` splits
//! into `u`, `##w`) without importing an external tokenizer.

mod data;
mod tokenize;
mod vocab;

pub use data::{load_classify_tsv, load_tagging_jsonl, read_corpus, save_classify_tsv, ClassifyExample, TaggingExample};
pub use tokenize::{decode, encode, TokenSeq};
pub use vocab::{build_vocab, SpecialIds, Vocab, CONTINUATION};
