//! Sequence-level knowledge distillation data and target-side rewriting
//! through an external text-generation service.

mod rewrite;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Origin, SegmentPair};
use crate::error::{Error, Result};
use crate::metrics::SemanticScorer;
use crate::model::Translate;

pub use rewrite::{
    rewrite_corpus, HttpRewriter, MockRewriter, PromptTemplate, RewriteParams, RewriteStats,
    RewriterClient, NEW_SOURCE, NEW_TARGET,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdConfig {
    pub quality_threshold: f64,
    pub dedup_against_authentic: bool,
    pub max_new_tokens: usize,
    pub max_in_flight: usize,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self {
            quality_threshold: 0.70,
            dedup_against_authentic: true,
            max_new_tokens: 16,
            max_in_flight: 4,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            return Err(Error::Config(format!(
                "quality_threshold {} outside [0, 1]",
                self.quality_threshold
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be positive".into()));
        }
        Ok(())
    }
}

/// Runs `f` over `items` on at most `limit` threads; output order follows input.
pub(crate) fn bounded_map<I, O, F>(items: &[I], limit: usize, f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(limit.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KdGenerationStats {
    pub requested: usize,
    pub generated: usize,
    pub failed: usize,
}

/// Teacher translations of `sources` as distilled pairs. Sources the
/// teacher fails on are skipped and counted.
pub fn generate_kd_data(
    teacher: &dyn Translate,
    sources: &[String],
    cfg: &KdConfig,
) -> Result<(Vec<SegmentPair>, KdGenerationStats)> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::Input("no sources for distillation".into()));
    }
    let outputs = bounded_map(sources, cfg.max_in_flight, |s| teacher.translate(s))?;
    let mut stats = KdGenerationStats {
        requested: sources.len(),
        ..Default::default()
    };
    let mut pairs = Vec::with_capacity(sources.len());
    for (src, out) in sources.iter().zip(outputs) {
        match out {
            Ok(target) => {
                stats.generated += 1;
                pairs.push(SegmentPair::authentic(src.clone(), target).with_origin(Origin::Distilled));
            }
            Err(_) => stats.failed += 1,
        }
    }
    Ok((pairs, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KdFilterStats {
    pub input: usize,
    pub duplicates: usize,
    pub low_quality: usize,
    pub kept: usize,
}

impl KdFilterStats {
    pub fn balances(&self) -> bool {
        self.input == self.duplicates + self.low_quality + self.kept
    }
}

/// Drops distilled pairs whose target equals an authentic target, then
/// pairs scoring below the threshold (a score equal to it is kept).
pub fn filter_kd_data(
    kd: &[SegmentPair],
    authentic: &[SegmentPair],
    scorer: &dyn SemanticScorer,
    cfg: &KdConfig,
) -> Result<(Vec<SegmentPair>, KdFilterStats)> {
    cfg.validate()?;
    let known: HashSet<&str> = if cfg.dedup_against_authentic {
        authentic.iter().map(|p| p.target.as_str()).collect()
    } else {
        HashSet::new()
    };
    let mut stats = KdFilterStats {
        input: kd.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for pair in kd {
        if known.contains(pair.target.as_str()) {
            stats.duplicates += 1;
            continue;
        }
        let score = scorer.score(&pair.source, &pair.target);
        if score < cfg.quality_threshold {
            stats.low_quality += 1;
            continue;
        }
        let mut p = pair.clone();
        p.semantic_score = Some(score);
        kept.push(p);
    }
    stats.kept = kept.len();
    Ok((kept, stats))
}

/// Authentic and distilled pairs concatenated and shuffled with `seed`.
pub fn mix_training_data(authentic: &[SegmentPair], kd: &[SegmentPair], seed: u64) -> Result<Vec<SegmentPair>> {
    if authentic.is_empty() {
        return Err(Error::Input("no authentic pairs to mix".into()));
    }
    let mut all: Vec<SegmentPair> = authentic.iter().chain(kd).cloned().collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(all)
}
