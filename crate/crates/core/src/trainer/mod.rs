//! Full-parameter fine-tuning with Adam, gradient clipping and early
//! stopping on a dev metric.

mod adam;
mod backward;
mod eval;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SegmentPair;
use crate::error::{Error, Result};
use crate::model::{PromptEncoder, TrainingExample, TransformerModel};
use crate::scalar::Scalar;

pub use adam::{clip_global_norm, Adam};
pub use backward::{batch_loss, loss_and_gradients};
pub use eval::{DevSet, Evaluate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 8,
            epochs: 1,
            patience: 5,
            eval_every: 50,
            max_grad_norm: 1.0,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// The original large-model recipe: lr 2e-5, batch 8, one epoch.
    pub fn large_model_recipe() -> Self {
        Self {
            learning_rate: 2e-5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, eval_every and patience must be positive".into()));
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    Epochs,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub train_loss: f64,
    pub dev_chrf_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    pub stopped_early: bool,
    pub best_step: usize,
    pub best_score: f64,
    pub stop_reason: StopReason,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_loss,dev_chrf_pp\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:.6},{:.4}", r.step, r.train_loss, r.dev_chrf_pp);
        }
        out
    }

    pub fn initial(&self) -> &TrainRecord {
        &self.records[0]
    }

    pub fn best(&self) -> &TrainRecord {
        self.records
            .iter()
            .find(|r| r.step == self.best_step)
            .unwrap_or(&self.records[0])
    }
}

struct Tracker<T> {
    best: TransformerModel<T>,
    best_score: f64,
    best_step: usize,
    since_best: usize,
}

/// Trains `model` on pre-tokenised examples and returns the checkpoint
/// with the highest dev score together with the log.
///
/// The dev metric is evaluated before the first update and then every
/// `eval_every` steps plus once at the end; training stops after
/// `patience` evaluations without strict improvement, after `epochs`
/// passes, or after `max_steps` updates, whichever comes first.
pub fn train<T: Scalar>(
    model: &TransformerModel<T>,
    examples: &[TrainingExample],
    dev: &dyn Evaluate<T>,
    cfg: &TrainConfig,
) -> Result<(TransformerModel<T>, TrainLog)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let mut current = model.clone();
    let mut adam = Adam::new(&current);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let first_batch: Vec<TrainingExample> = examples.iter().take(cfg.batch_size).cloned().collect();
    let initial_loss = batch_loss(&current, &first_batch)?.to_f64_lossy();
    let initial_score = dev.evaluate(&current)?;
    let mut records = vec![TrainRecord {
        step: 0,
        train_loss: initial_loss,
        dev_chrf_pp: initial_score,
    }];
    let mut track = Tracker {
        best: current.clone(),
        best_score: initial_score,
        best_step: 0,
        since_best: 0,
    };

    let mut step = 0usize;
    let mut pending = Vec::new();
    let epochs = if cfg.max_steps.is_some() && cfg.epochs == 0 { usize::MAX } else { cfg.epochs };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut reason = StopReason::Epochs;

    let evaluate = |current: &TransformerModel<T>, step: usize, pending: &mut Vec<f64>,
                        records: &mut Vec<TrainRecord>, track: &mut Tracker<T>| -> Result<bool> {
        let score = dev.evaluate(current)?;
        let loss = pending.iter().sum::<f64>() / pending.len().max(1) as f64;
        pending.clear();
        records.push(TrainRecord {
            step,
            train_loss: loss,
            dev_chrf_pp: score,
        });
        if score > track.best_score {
            track.best = current.clone();
            track.best_score = score;
            track.best_step = step;
            track.since_best = 0;
        } else {
            track.since_best += 1;
        }
        Ok(track.since_best >= cfg.patience)
    };

    'outer: for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, mut grads) = loss_and_gradients(&current, &batch)?;
            clip_global_norm(&mut grads, cfg.max_grad_norm);
            adam.step(&mut current, &grads, cfg.learning_rate);
            step += 1;
            pending.push(loss.to_f64_lossy());
            if step % cfg.eval_every == 0 && evaluate(&current, step, &mut pending, &mut records, &mut track)? {
                reason = StopReason::Patience;
                break 'outer;
            }
            if cfg.max_steps.is_some_and(|m| step >= m) {
                reason = StopReason::MaxSteps;
                break 'outer;
            }
        }
    }
    if !pending.is_empty() && evaluate(&current, step, &mut pending, &mut records, &mut track)? {
        reason = StopReason::Patience;
    }

    let log = TrainLog {
        records,
        stopped_early: reason == StopReason::Patience,
        best_step: track.best_step,
        best_score: track.best_score,
        stop_reason: reason,
    };
    Ok((track.best, log))
}

/// Tokenises `pairs` with `encoder` and trains on them.
pub fn train_on_pairs<T: Scalar>(
    model: &TransformerModel<T>,
    pairs: &[SegmentPair],
    encoder: &PromptEncoder,
    dev: &dyn Evaluate<T>,
    cfg: &TrainConfig,
) -> Result<(TransformerModel<T>, TrainLog)> {
    let examples: Vec<TrainingExample> = pairs
        .iter()
        .map(|p| encoder.example(&p.source, &p.target))
        .collect();
    train(model, &examples, dev, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fingerprint, init_model, ModelConfig};
    use std::sync::Mutex;

    fn setup() -> (TransformerModel<f32>, Vec<TrainingExample>) {
        let cfg = ModelConfig {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            n_layers: 2,
            max_seq_len: 12,
        };
        let model = init_model(cfg, 0).unwrap();
        let examples = (0..12u32)
            .map(|i| TrainingExample {
                tokens: vec![1, 5 + i % 4, 3, 9 + i % 4, 2],
                first_target: 3,
            })
            .collect();
        (model, examples)
    }

    struct Scripted(Mutex<Vec<f64>>);
    impl Evaluate<f32> for Scripted {
        fn evaluate(&self, _: &TransformerModel<f32>) -> Result<f64> {
            let mut s = self.0.lock().unwrap();
            Ok(if s.is_empty() { 0.0 } else { s.remove(0) })
        }
    }

    #[test]
    fn zero_lr_leaves_weights_bit_identical() {
        let (model, ex) = setup();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_steps: Some(3),
            eval_every: 1,
            ..TrainConfig::default()
        };
        let dev = Scripted(Mutex::new(vec![]));
        let (_, _) = train(&model, &ex, &dev, &cfg).unwrap();
        let mut current = model.clone();
        let mut adam = Adam::new(&current);
        let (_, g) = loss_and_gradients(&current, &ex[..8]).unwrap();
        adam.step(&mut current, &g, 0.0);
        assert_eq!(fingerprint(&model), fingerprint(&current));
    }

    #[test]
    fn stops_after_patience_and_restores_best() {
        let (model, ex) = setup();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 1,
            eval_every: 1,
            patience: 2,
            epochs: 5,
            ..TrainConfig::default()
        };
        let dev = Scripted(Mutex::new(vec![10.0, 20.0, 15.0, 20.0, 30.0]));
        let (best, log) = train(&model, &ex, &dev, &cfg).unwrap();
        assert!(log.stopped_early);
        assert_eq!(log.stop_reason, StopReason::Patience);
        assert_eq!(log.best_step, 1);
        assert_eq!(log.records.len(), 4);
        assert_ne!(fingerprint(&best), fingerprint(&model));
    }

    #[test]
    fn never_improving_returns_the_initial_model() {
        let (model, ex) = setup();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 2,
            eval_every: 1,
            patience: 3,
            ..TrainConfig::default()
        };
        let dev = Scripted(Mutex::new(vec![50.0; 20]));
        let (best, log) = train(&model, &ex, &dev, &cfg).unwrap();
        assert_eq!(log.best_step, 0);
        assert_eq!(fingerprint(&best), fingerprint(&model));
    }

    #[test]
    fn loss_decreases_on_a_memorisable_set() {
        let (model, ex) = setup();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 4,
            epochs: 30,
            eval_every: 1000,
            ..TrainConfig::default()
        };
        let dev = Scripted(Mutex::new(vec![0.0, 1.0]));
        let (_, log) = train(&model, &ex, &dev, &cfg).unwrap();
        let last = log.records.last().unwrap();
        assert!(last.train_loss < log.initial().train_loss * 0.5);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let (model, ex) = setup();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 3,
            epochs: 2,
            eval_every: 2,
            ..TrainConfig::default()
        };
        let run = || {
            let dev = Scripted(Mutex::new((0..20).map(f64::from).collect()));
            let (m, log) = train(&model, &ex, &dev, &cfg).unwrap();
            (fingerprint(&m), log)
        };
        assert_eq!(run(), run());
    }
}
