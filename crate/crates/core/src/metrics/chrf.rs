use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::check_parallel;
use crate::error::{Error, Result};

/// chrF++ parameters: character n-gram order, word n-gram order and the
/// recall weight β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        Self {
            char_order: 6,
            word_order: 2,
            beta: 2.0,
        }
    }
}

impl ChrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.char_order == 0 {
            return Err(Error::Config("char_order must be >= 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct OrderStats {
    hyp: usize,
    reference: usize,
    matched: usize,
}

fn counts<T: Hash + Eq>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut map = HashMap::new();
    if n == 0 || items.len() < n {
        return map;
    }
    for gram in items.windows(n) {
        *map.entry(gram).or_insert(0) += 1;
    }
    map
}

fn accumulate<T: Hash + Eq>(hyp: &[T], reference: &[T], n: usize, stats: &mut OrderStats) {
    let h = counts(hyp, n);
    let r = counts(reference, n);
    stats.hyp += h.values().sum::<usize>();
    stats.reference += r.values().sum::<usize>();
    stats.matched += h
        .iter()
        .map(|(gram, &c)| c.min(r.get(gram).copied().unwrap_or(0)))
        .sum::<usize>();
}

/// Corpus-level chrF++ in [0, 100].
///
/// Character n-grams are taken over the text with all whitespace removed,
/// word n-grams over whitespace tokens. Counts are summed over the corpus
/// before per-order precision and recall are formed.
pub fn chrf_pp(hypotheses: &[String], references: &[String], cfg: &ChrfConfig) -> Result<f64> {
    check_parallel(hypotheses, references)?;
    cfg.validate()?;
    let mut char_stats = vec![OrderStats::default(); cfg.char_order];
    let mut word_stats = vec![OrderStats::default(); cfg.word_order];

    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
        for (i, stats) in char_stats.iter_mut().enumerate() {
            accumulate(&hc, &rc, i + 1, stats);
        }
        let hw: Vec<&str> = hyp.split_whitespace().collect();
        let rw: Vec<&str> = reference.split_whitespace().collect();
        for (i, stats) in word_stats.iter_mut().enumerate() {
            accumulate(&hw, &rw, i + 1, stats);
        }
    }

    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut orders = 0usize;
    for s in char_stats.iter().chain(&word_stats) {
        if s.hyp == 0 && s.reference == 0 {
            continue;
        }
        orders += 1;
        if s.hyp > 0 {
            precision += s.matched as f64 / s.hyp as f64;
        }
        if s.reference > 0 {
            recall += s.matched as f64 / s.reference as f64;
        }
    }
    if orders == 0 {
        // Both sides empty throughout: nothing differs.
        return Ok(100.0);
    }
    let p = precision / orders as f64;
    let r = recall / orders as f64;
    if p + r == 0.0 {
        return Ok(0.0);
    }
    let b2 = cfg.beta * cfg.beta;
    Ok(100.0 * (1.0 + b2) * p * r / (b2 * p + r))
}
