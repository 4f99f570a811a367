//! Layer-importance sweeps and greedy iterative layer pruning.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransformerModel;
use crate::scalar::Scalar;
use crate::trainer::Evaluate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub target_removals: usize,
    pub tie_break: TieBreak,
    pub parallel_candidates: bool,
    pub finetune_between_steps: bool,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            target_removals: 2,
            tie_break: TieBreak::LowestIndex,
            parallel_candidates: true,
            finetune_between_steps: false,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if self.target_removals == 0 || self.target_removals >= n_layers {
            return Err(Error::Config(format!(
                "target_removals must be in 1..{n_layers}, got {}",
                self.target_removals
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    /// Dev score of the model without each candidate, keyed by original index.
    pub candidate_scores: BTreeMap<usize, f64>,
    pub removed: usize,
    pub baseline_score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneTrace {
    pub steps: Vec<PruneStep>,
}

impl PruneTrace {
    pub fn removed(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.removed).collect()
    }

    /// Removes the first `k` recorded layers from `model`, in trace order.
    pub fn replay<T: Scalar>(&self, model: &TransformerModel<T>, k: usize) -> Result<TransformerModel<T>> {
        if k > self.steps.len() {
            return Err(Error::Input(format!("trace has {} steps, asked for {k}", self.steps.len())));
        }
        let mut current = model.clone();
        for step in &self.steps[..k] {
            let pos = current
                .position_of(step.removed)
                .ok_or_else(|| Error::Input(format!("layer {} not present", step.removed)))?;
            current = current.remove_layer(pos)?;
        }
        Ok(current)
    }
}

fn importance<T: Scalar>(
    model: &TransformerModel<T>,
    dev: &dyn Evaluate<T>,
    parallel: bool,
) -> Result<BTreeMap<usize, f64>> {
    if model.n_layers() < 2 {
        return Err(Error::Input("layer importance needs at least 2 layers".into()));
    }
    let score = |pos: usize| -> Result<(usize, f64)> {
        let without = model.remove_layer(pos)?;
        Ok((model.layer_ids[pos], dev.evaluate(&without)?))
    };
    let positions: Vec<usize> = (0..model.n_layers()).collect();
    let scores: Vec<(usize, f64)> = if parallel {
        positions.into_par_iter().map(score).collect::<Result<_>>()?
    } else {
        positions.into_iter().map(score).collect::<Result<_>>()?
    };
    Ok(scores.into_iter().collect())
}

/// Dev score of `model` with each single layer removed, keyed by the
/// layer's original index. `model` is not modified.
pub fn layer_importance<T: Scalar>(
    model: &TransformerModel<T>,
    dev: &dyn Evaluate<T>,
) -> Result<BTreeMap<usize, f64>> {
    importance(model, dev, true)
}

/// Highest score; ties go to the lowest original index.
pub fn best_candidate(scores: &BTreeMap<usize, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&id, &s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    }
    best.map(|(id, _)| id)
}

/// Greedy pruning: `target_removals` times, evaluate every single removal
/// and drop the layer whose absence scores best. `between_steps` runs after
/// each removal when `finetune_between_steps` is set.
pub fn greedy_prune_with<T: Scalar>(
    model: &TransformerModel<T>,
    cfg: &PruneConfig,
    dev: &dyn Evaluate<T>,
    between_steps: &mut dyn FnMut(TransformerModel<T>) -> Result<TransformerModel<T>>,
) -> Result<(TransformerModel<T>, PruneTrace)> {
    cfg.validate(model.n_layers())?;
    let mut current = model.clone();
    let mut trace = PruneTrace::default();
    for _ in 0..cfg.target_removals {
        let baseline_score = dev.evaluate(&current)?;
        let candidate_scores = importance(&current, dev, cfg.parallel_candidates)?;
        let removed = best_candidate(&candidate_scores).expect("at least two candidates");
        let pos = current.position_of(removed).expect("candidate is a current layer");
        current = current.remove_layer(pos)?;
        if cfg.finetune_between_steps {
            current = between_steps(current)?;
        }
        trace.steps.push(PruneStep {
            candidate_scores,
            removed,
            baseline_score,
        });
    }
    Ok((current, trace))
}

/// [`greedy_prune_with`] without intermediate fine-tuning.
pub fn greedy_prune<T: Scalar>(
    model: &TransformerModel<T>,
    cfg: &PruneConfig,
    dev: &dyn Evaluate<T>,
) -> Result<(TransformerModel<T>, PruneTrace)> {
    if cfg.finetune_between_steps {
        return Err(Error::Config(
            "finetune_between_steps needs a fine-tuning hook (use greedy_prune_with)".into(),
        ));
    }
    greedy_prune_with(model, cfg, dev, &mut Ok)
}

/// Markdown table of every step's candidate scores by original index,
/// with the removed layer marked.
pub fn importance_profile_report(trace: &PruneTrace) -> Result<String> {
    if trace.steps.is_empty() {
        return Err(Error::Input("empty prune trace".into()));
    }
    let mut out = String::from("| step | baseline | layer | score without layer | removed |\n|---:|---:|---:|---:|:---:|\n");
    for (i, step) in trace.steps.iter().enumerate() {
        for (&id, &score) in &step.candidate_scores {
            let mark = if id == step.removed { "x" } else { "" };
            let _ = writeln!(
                out,
                "| {} | {:.2} | {id} | {score:.2} | {mark} |",
                i + 1,
                step.baseline_score
            );
        }
    }
    Ok(out)
}
