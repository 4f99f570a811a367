//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use layerprune::corpus::{generate_synthetic_corpus, SegmentPair, SyntheticLanguage, SyntheticTask, LEXICON};
use layerprune::metrics::{chrf_pp, ChrfConfig};
use layerprune::model::{
    generate, init_model, DecodeConfig, ModelConfig, PromptEncoder, TensorClass, TrainingExample,
    TransformerModel,
};
use layerprune::pruner::{PruneStep, PruneTrace};
use layerprune::trainer::{batch_loss, loss_and_gradients, train_on_pairs, DevSet, TrainConfig};
use layerprune::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- metrics

/// Number of hypothesis n-grams that can be paired one-to-one with an equal,
/// not yet used reference n-gram.
fn paired<G: PartialEq>(hyp: &[G], reference: &[G]) -> usize {
    let mut used = vec![false; reference.len()];
    let mut matched = 0;
    for g in hyp {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j] == *g) {
            used[j] = true;
            matched += 1;
        }
    }
    matched
}

fn grams<G: Clone>(items: &[G], n: usize) -> Vec<Vec<G>> {
    if items.len() < n {
        return Vec::new();
    }
    (0..=items.len() - n).map(|i| items[i..i + n].to_vec()).collect()
}

fn chars(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Corpus chrF++ with character orders 1..=6, word orders 1..=2 and β = 2.
pub fn chrf_oracle(hyps: &[String], refs: &[String]) -> f64 {
    // (hypothesis n-grams, reference n-grams, matches) per order
    let mut table = vec![(0usize, 0usize, 0usize); 8];
    for (h, r) in hyps.iter().zip(refs) {
        for n in 1..=6 {
            let (hg, rg) = (grams(&chars(h), n), grams(&chars(r), n));
            let slot = &mut table[n - 1];
            slot.0 += hg.len();
            slot.1 += rg.len();
            slot.2 += paired(&hg, &rg);
        }
        for n in 1..=2 {
            let (hg, rg) = (grams(&words(h), n), grams(&words(r), n));
            let slot = &mut table[5 + n];
            slot.0 += hg.len();
            slot.1 += rg.len();
            slot.2 += paired(&hg, &rg);
        }
    }
    let live: Vec<_> = table.iter().filter(|t| t.0 + t.1 > 0).collect();
    if live.is_empty() {
        return 100.0;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = live.iter().map(|t| ratio(t.2, t.0)).sum::<f64>() / live.len() as f64;
    let r = live.iter().map(|t| ratio(t.2, t.1)).sum::<f64>() / live.len() as f64;
    if p == 0.0 && r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

/// Corpus BLEU-4, uniform weights, no smoothing.
pub fn bleu_oracle(hyps: &[String], refs: &[String]) -> f64 {
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        let (hw, rw) = (words(h), words(rf));
        c += hw.len();
        r += rw.len();
        for n in 1..=4 {
            let (hg, rg) = (grams(&hw, n), grams(&rw, n));
            total[n - 1] += hg.len();
            matched[n - 1] += paired(&hg, &rg);
        }
    }
    if c == 0 || matched.contains(&0) {
        return 0.0;
    }
    let product: f64 = (0..4).map(|i| matched[i] as f64 / total[i] as f64).product();
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * product.powf(0.25)
}

/// Reference sentences in cipher space with noisy hypotheses derived from them.
pub fn noisy_pairs(n: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let language = SyntheticLanguage::new(SyntheticTask::Cipher);
    let corpus = generate_synthetic_corpus(seed, n, SyntheticTask::Cipher).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut hyps = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    for pair in corpus {
        let mut out: Vec<String> = Vec::new();
        for w in pair.target.split_whitespace() {
            let roll: f64 = rng.random();
            if roll < 0.12 {
                continue;
            } else if roll < 0.27 {
                out.push(language.translate(LEXICON[rng.random_range(0..LEXICON.len())]));
            } else if roll < 0.37 {
                let mut cs: Vec<char> = w.chars().collect();
                let i = rng.random_range(0..cs.len());
                cs[i] = char::from(b'a' + rng.random_range(0..26u8));
                out.push(cs.into_iter().collect());
            } else {
                out.push(w.to_string());
            }
        }
        if rng.random_bool(0.2) && out.len() > 1 {
            let i = rng.random_range(0..out.len() - 1);
            out.swap(i, i + 1);
        }
        hyps.push(out.join(" "));
        refs.push(pair.target);
    }
    (hyps, refs)
}

// --------------------------------------------------------------- gradients

#[derive(Debug)]
pub struct GradProbe {
    pub class: TensorClass,
    pub probed: usize,
    pub available: usize,
    pub max_rel_error: f64,
}

pub fn grad_model() -> (TransformerModel<f64>, Vec<TrainingExample>) {
    let cfg = ModelConfig {
        vocab_size: 24,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        n_layers: 4,
        max_seq_len: 16,
    };
    let mut model: TransformerModel<f64> = init_model(cfg, 3).unwrap();
    // Move norm gains off 1 so their gradients are generic.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (class, values) in model.tensors_mut() {
        if class.is_norm() {
            for v in values.iter_mut() {
                *v = rng.random_range(0.5..1.5);
            }
        }
    }
    let batch = (0..4)
        .map(|i| {
            let len = 9 + i;
            let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..24)).collect();
            TrainingExample {
                tokens,
                first_target: 4 + i % 3,
            }
        })
        .collect();
    (model, batch)
}

/// Central differences on `per_class` random coordinates of every tensor
/// class (all coordinates when a class has fewer).
pub fn gradient_check(per_class: usize, h: f64) -> Vec<GradProbe> {
    let (model, batch) = grad_model();
    let (_, grads) = loss_and_gradients(&model, &batch).unwrap();
    let flat_grads: Vec<(TensorClass, Vec<f64>)> =
        grads.tensors().into_iter().map(|(c, _, v)| (c, v.to_vec())).collect();

    let mut by_class: BTreeMap<TensorClass, Vec<(usize, usize)>> = BTreeMap::new();
    for (t, (class, values)) in flat_grads.iter().enumerate() {
        by_class.entry(*class).or_default().extend((0..values.len()).map(|i| (t, i)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut out = Vec::new();
    for (class, mut coords) in by_class {
        let available = coords.len();
        for i in 0..per_class.min(available) {
            let j = rng.random_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(per_class.min(available));
        let mut worst = 0.0f64;
        for &(t, i) in &coords {
            let at = |delta: f64| {
                let mut m = model.clone();
                m.tensors_mut()[t].1[i] += delta;
                batch_loss(&m, &batch).unwrap()
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let analytic = flat_grads[t].1[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        out.push(GradProbe {
            class,
            probed: coords.len(),
            available,
            max_rel_error: worst,
        });
    }
    out
}

// ---------------------------------------------------------------- toy task

pub struct Toy {
    pub language: SyntheticLanguage,
    pub encoder: PromptEncoder,
    pub train: Vec<SegmentPair>,
    pub dev_pairs: Vec<SegmentPair>,
    pub decode: DecodeConfig,
}

impl Toy {
    pub fn new(seed: u64, dev_size: usize) -> Self {
        let language = SyntheticLanguage::new(SyntheticTask::Cipher);
        let encoder = PromptEncoder::for_language(&language);
        let mut corpus = generate_synthetic_corpus(seed, 1200, SyntheticTask::Cipher).unwrap();
        let train = corpus.split_off(dev_size);
        Self {
            language,
            encoder,
            train,
            dev_pairs: corpus,
            decode: DecodeConfig::default(),
        }
    }

    pub fn dev(&self) -> DevSet {
        DevSet::new(&self.dev_pairs, self.encoder.clone(), self.decode)
    }

    pub fn config(n_layers: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 144,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            n_layers,
            max_seq_len: 40,
        }
    }

    pub fn train(&self, n_layers: usize, steps: usize, seed: u64) -> Model {
        let init: Model = init_model(Self::config(n_layers), seed).unwrap();
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            epochs: 100,
            patience: 1000,
            eval_every: steps,
            seed,
            max_steps: Some(steps),
            ..TrainConfig::default()
        };
        train_on_pairs(&init, &self.train, &self.encoder, &self.dev(), &cfg).unwrap().0
    }

    /// Dev chrF++ computed directly from greedy decodes.
    pub fn score(&self, model: &Model) -> f64 {
        let hyps: Vec<String> = self
            .dev_pairs
            .iter()
            .map(|p| {
                let out = generate(model, &self.encoder.prompt(&p.source), &self.decode).unwrap();
                self.encoder.decode(&out.tokens)
            })
            .collect();
        let refs: Vec<String> = self.dev_pairs.iter().map(|p| p.target.clone()).collect();
        chrf_pp(&hyps, &refs, &ChrfConfig::default()).unwrap()
    }
}

// ----------------------------------------------------------------- pruning

fn without_position(model: &Model, pos: usize) -> Model {
    let mut m = model.clone();
    m.layers.remove(pos);
    m.layer_ids.remove(pos);
    m.config.n_layers -= 1;
    m
}

/// At every step tries each remaining layer, removes the one whose absence
/// scores highest (earliest original index on ties) and records all scores.
pub fn exhaustive_stepwise(model: &Model, steps: usize, score: &dyn Fn(&Model) -> f64) -> PruneTrace {
    let mut current = model.clone();
    let mut trace = PruneTrace::default();
    for _ in 0..steps {
        let baseline_score = score(&current);
        let mut candidate_scores = BTreeMap::new();
        let mut best: Option<(usize, usize, f64)> = None;
        for pos in 0..current.layers.len() {
            let s = score(&without_position(&current, pos));
            let id = current.layer_ids[pos];
            candidate_scores.insert(id, s);
            let better = match best {
                None => true,
                Some((_, best_id, best_s)) => s > best_s || (s == best_s && id < best_id),
            };
            if better {
                best = Some((pos, id, s));
            }
        }
        let (pos, removed, _) = best.unwrap();
        current = without_position(&current, pos);
        trace.steps.push(PruneStep {
            candidate_scores,
            removed,
            baseline_score,
        });
    }
    trace
}

/// A copy of `model` with a silenced duplicate of layer `source` inserted at
/// position `at`; original indices are renumbered 0..n.
pub fn with_noop_layer(model: &Model, source: usize, at: usize) -> Model {
    let mut m = model.clone();
    let mut layer = m.layers[source].clone();
    layer.silence();
    m.layers.insert(at, layer);
    m.config.n_layers += 1;
    m.layer_ids = (0..m.layers.len()).collect();
    m
}
