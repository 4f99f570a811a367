//! Translation quality metrics and the pluggable scorer/classifier interfaces
//! used by corpus filtering and distillation.

mod bleu;
mod chrf;
mod semantic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bleu::bleu;
pub use chrf::{chrf_pp, ChrfConfig};
pub use semantic::{default_semantic_scorer, token_f1, LexiconClassifier, TokenF1Scorer};

/// Similarity between a source sentence and a candidate translation, in [0, 1].
pub trait SemanticScorer: Send + Sync {
    fn score(&self, source: &str, target: &str) -> f64;
}

/// Language identification: best tag and its confidence in [0, 1].
pub trait LanguageClassifier: Send + Sync {
    fn classify(&self, text: &str) -> (String, f64);
}

/// Corpus-level scores for one system output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub chrf_pp: f64,
    pub bleu: f64,
    pub semantic: Option<f64>,
    pub segment_count: usize,
}

impl MetricReport {
    /// Scores `hypotheses` against `references`; `semantic` is the mean
    /// scorer value of (source, hypothesis) when sources are supplied.
    pub fn compute(
        hypotheses: &[String],
        references: &[String],
        semantic: Option<(&[String], &dyn SemanticScorer)>,
    ) -> Result<Self> {
        let chrf = chrf_pp(hypotheses, references, &ChrfConfig::default())?;
        let bleu = bleu(hypotheses, references)?;
        let semantic = match semantic {
            None => None,
            Some((sources, scorer)) => {
                if sources.len() != hypotheses.len() {
                    return Err(Error::Input(format!(
                        "{} sources for {} hypotheses",
                        sources.len(),
                        hypotheses.len()
                    )));
                }
                let total: f64 = sources
                    .iter()
                    .zip(hypotheses)
                    .map(|(s, h)| scorer.score(s, h))
                    .sum();
                Some(total / hypotheses.len() as f64)
            }
        };
        Ok(Self {
            chrf_pp: chrf,
            bleu,
            semantic,
            segment_count: hypotheses.len(),
        })
    }
}

pub(crate) fn check_parallel(hypotheses: &[String], references: &[String]) -> Result<()> {
    if hypotheses.is_empty() {
        return Err(Error::Input("no segments to score".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Input(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    Ok(())
}

/// Rounds to two decimals for display.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
