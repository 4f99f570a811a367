//! Parallel corpus data model, synthetic language pairs, filtering and splits.

mod filter;
mod split;
mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use filter::{exceeds_length, exceeds_ratio};
pub use filter::{filter_corpus, FilterConfig, FilterStats};
pub use split::{select_top_semantic, split_corpus, split_corpus_with_held_out, CorpusSplit};
pub use synth::{
    generate_synthetic_corpus, Cipher, SyntheticLanguage, SyntheticTask, LEXICON, MAX_SENTENCE_WORDS,
    MIN_SENTENCE_WORDS,
};

/// Where a pair's target side came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Authentic,
    Distilled,
    Rewritten,
}

/// One source/target segment pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub source: String,
    pub target: String,
    pub origin: Origin,
    #[serde(default)]
    pub semantic_score: Option<f64>,
}

impl SegmentPair {
    pub fn authentic(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            origin: Origin::Authentic,
            semantic_score: None,
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}

/// Whitespace-separated token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<SegmentPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: SegmentPair = serde_json::from_str(&line).map_err(|e| {
            Error::Input(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if let Some(score) = pair.semantic_score {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Input(format!(
                    "{}:{}: semantic_score {score} outside [0, 1]",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_jsonl(path: impl AsRef<Path>, pairs: &[SegmentPair]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_keys_match_file_format() {
        let pair = SegmentPair {
            semantic_score: Some(0.5),
            ..SegmentPair::authentic("a b", "b c")
        };
        let line = serde_json::to_string(&pair).unwrap();
        assert_eq!(
            line,
            r#"{"source":"a b","target":"b c","origin":"authentic","semantic_score":0.5}"#
        );
    }

    #[test]
    fn jsonl_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let pairs = vec![
            SegmentPair::authentic("x", "y"),
            SegmentPair::authentic("p q", "r s").with_origin(Origin::Distilled),
        ];
        write_jsonl(&path, &pairs).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), pairs);
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"source\":\"a\",\"target\":\"b\",\"origin\":\"authentic\",\"semantic_score\":1.5}\n",
        )
        .unwrap();
        assert!(read_jsonl(&path).is_err());
    }
}
