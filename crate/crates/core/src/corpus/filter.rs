use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{word_count, SegmentPair};
use crate::error::{Error, Result};
use crate::metrics::{LanguageClassifier, SemanticScorer};

/// Thresholds for the rule-based, language-ID and semantic filters plus the
/// split parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_words: usize,
    pub max_length_ratio: f64,
    pub lang_id_threshold: f64,
    pub semantic_threshold: f64,
    pub test_size: usize,
    pub sample_size: Option<usize>,
    pub seed: u64,
    /// Language tag the classifier must report for the source side.
    pub source_lang: String,
    /// Language tag the classifier must report for the target side.
    pub target_lang: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_words: 200,
            max_length_ratio: 1.5,
            lang_id_threshold: 0.9,
            semantic_threshold: 0.7,
            test_size: 500,
            sample_size: None,
            seed: 0,
            source_lang: "plain".into(),
            target_lang: "cipher".into(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        if !(self.max_length_ratio >= 1.0) {
            return Err(Error::Config(format!(
                "max_length_ratio must be >= 1, got {}",
                self.max_length_ratio
            )));
        }
        unit("lang_id_threshold", self.lang_id_threshold)?;
        unit("semantic_threshold", self.semantic_threshold)?;
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-stage removal accounting. Each rejected pair is charged to the first
/// stage that rejects it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input_count: usize,
    pub removed_duplicates: usize,
    pub removed_length: usize,
    pub removed_ratio: usize,
    pub removed_lang_id: usize,
    pub removed_semantic: usize,
    pub output_count: usize,
}

impl FilterStats {
    pub fn removed_total(&self) -> usize {
        self.removed_duplicates
            + self.removed_length
            + self.removed_ratio
            + self.removed_lang_id
            + self.removed_semantic
    }

    pub fn balances(&self) -> bool {
        self.input_count == self.output_count + self.removed_total()
    }
}

impl fmt::Display for FilterStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("input", self.input_count),
            ("removed: duplicates", self.removed_duplicates),
            ("removed: length", self.removed_length),
            ("removed: length ratio", self.removed_ratio),
            ("removed: language id", self.removed_lang_id),
            ("removed: semantic", self.removed_semantic),
            ("output", self.output_count),
        ];
        writeln!(f, "{:<24} {:>10}", "stage", "pairs")?;
        writeln!(f, "{:-<24} {:->10}", "", "")?;
        for (name, count) in rows {
            writeln!(f, "{name:<24} {count:>10}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rejection {
    Length,
    Ratio,
    LangId,
    Semantic,
}

pub(crate) fn exceeds_length(pair: &SegmentPair, max_words: usize) -> bool {
    word_count(&pair.source) > max_words || word_count(&pair.target) > max_words
}

pub(crate) fn exceeds_ratio(pair: &SegmentPair, max_ratio: f64) -> bool {
    let s = word_count(&pair.source);
    let t = word_count(&pair.target);
    let (lo, hi) = (s.min(t), s.max(t));
    lo == 0 || hi as f64 / lo as f64 > max_ratio
}

fn language_ok(
    classifier: &dyn LanguageClassifier,
    text: &str,
    expected: &str,
    threshold: f64,
) -> bool {
    let (tag, confidence) = classifier.classify(text);
    tag == expected && confidence >= threshold
}

fn first_rejection(
    pair: &SegmentPair,
    cfg: &FilterConfig,
    lang_id: &dyn LanguageClassifier,
    scorer: &dyn SemanticScorer,
) -> Option<Rejection> {
    if exceeds_length(pair, cfg.max_words) {
        return Some(Rejection::Length);
    }
    if exceeds_ratio(pair, cfg.max_length_ratio) {
        return Some(Rejection::Ratio);
    }
    if !language_ok(lang_id, &pair.source, &cfg.source_lang, cfg.lang_id_threshold)
        || !language_ok(lang_id, &pair.target, &cfg.target_lang, cfg.lang_id_threshold)
    {
        return Some(Rejection::LangId);
    }
    if scorer.score(&pair.source, &pair.target) < cfg.semantic_threshold {
        return Some(Rejection::Semantic);
    }
    None
}

/// Runs the filter stages in order: pair-level deduplication, word cap,
/// length ratio, language ID, semantic similarity. Survivors carry their
/// semantic score.
pub fn filter_corpus(
    pairs: &[SegmentPair],
    cfg: &FilterConfig,
    lang_id: &dyn LanguageClassifier,
    scorer: &dyn SemanticScorer,
) -> (Vec<SegmentPair>, FilterStats) {
    let mut stats = FilterStats {
        input_count: pairs.len(),
        ..FilterStats::default()
    };

    let mut seen: HashSet<(&str, &str)> = HashSet::with_capacity(pairs.len());
    let unique: Vec<&SegmentPair> = pairs
        .iter()
        .filter(|p| seen.insert((p.source.as_str(), p.target.as_str())))
        .collect();
    stats.removed_duplicates = pairs.len() - unique.len();

    let verdicts: Vec<Option<Rejection>> = unique
        .par_iter()
        .map(|p| first_rejection(p, cfg, lang_id, scorer))
        .collect();

    let mut kept = Vec::with_capacity(unique.len());
    for (pair, verdict) in unique.into_iter().zip(verdicts) {
        match verdict {
            Some(Rejection::Length) => stats.removed_length += 1,
            Some(Rejection::Ratio) => stats.removed_ratio += 1,
            Some(Rejection::LangId) => stats.removed_lang_id += 1,
            Some(Rejection::Semantic) => stats.removed_semantic += 1,
            None => {
                let mut pair = pair.clone();
                pair.semantic_score = Some(scorer.score(&pair.source, &pair.target));
                kept.push(pair);
            }
        }
    }
    stats.output_count = kept.len();
    (kept, stats)
}
