//! Dataset file formats: plain-text corpora, TSV classification data, and
//! JSON-lines tagging data.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One classification example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyExample {
    pub text: String,
    pub label: usize,
}

/// One tagging example: whitespace words with one tag per word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggingExample {
    pub tokens: Vec<String>,
    pub tags: Vec<usize>,
}

/// Read a corpus: UTF-8 plain text, one document per line. Blank lines are
/// skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut docs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            docs.push(line);
        }
    }
    Ok(docs)
}

/// Load `label<TAB>text` classification data.
pub fn load_classify_tsv(path: &Path) -> Result<Vec<ClassifyExample>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| {
            Error::format(format!("{}:{}: expected label<TAB>text", path.display(), lineno + 1))
        })?;
        let label = label.trim().parse::<usize>().map_err(|_| {
            Error::format(format!("{}:{}: bad label {label:?}", path.display(), lineno + 1))
        })?;
        out.push(ClassifyExample { text: text.to_string(), label });
    }
    Ok(out)
}

/// Write classification data in the same TSV format.
pub fn save_classify_tsv(path: &Path, examples: &[ClassifyExample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for ex in examples {
        writeln!(out, "{}\t{}", ex.label, ex.text)?;
    }
    Ok(())
}

/// Load tagging data: one JSON object per line with `tokens` and `tags`.
pub fn load_tagging_jsonl(path: &Path) -> Result<Vec<TaggingExample>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TaggingExample = serde_json::from_str(&line).map_err(|e| {
            Error::format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if ex.tokens.len() != ex.tags.len() {
            return Err(Error::format(format!(
                "{}:{}: {} tokens but {} tags",
                path.display(),
                lineno + 1,
                ex.tokens.len(),
                ex.tags.len()
            )));
        }
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsv");
        let data = vec![
            ClassifyExample { text: "good stuff".into(), label: 1 },
            ClassifyExample { text: "bad stuff".into(), label: 0 },
        ];
        save_classify_tsv(&path, &data).unwrap();
        assert_eq!(load_classify_tsv(&path).unwrap(), data);
    }

    #[test]
    fn malformed_tsv_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "no tab here\n").unwrap();
        assert!(matches!(load_classify_tsv(&path), Err(Error::Format(_))));
    }

    #[test]
    fn tagging_jsonl_checks_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.jsonl");
        std::fs::write(&path, "{\"tokens\":[\"a\",\"b\"],\"tags\":[1]}\n").unwrap();
        assert!(matches!(load_tagging_jsonl(&path), Err(Error::Format(_))));
    }
}
