use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate, Backbone, DecodeConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub label: String,
    pub layers: usize,
    /// Seconds per timed pass over all prompts.
    pub wall_times: Vec<f64>,
    pub median_seconds: f64,
    /// Tokens generated in one pass.
    pub generated_tokens: usize,
    pub throughput: f64,
    pub payload_bytes: u64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn decode_pass<T: Scalar, B: Backbone<T> + ?Sized>(
    model: &B,
    prompts: &[Vec<u32>],
    decode: &DecodeConfig,
) -> Result<usize> {
    let mut tokens = 0;
    for p in prompts {
        tokens += generate(model, p, decode)?.steps();
    }
    Ok(tokens)
}

/// One model to time: a decode pass over fixed prompts plus the metadata
/// reported alongside its timings.
pub struct BenchTarget<'a> {
    pub label: String,
    pub layers: usize,
    pub payload_bytes: u64,
    pass: Box<dyn Fn() -> Result<usize> + 'a>,
}

impl<'a> BenchTarget<'a> {
    pub fn new<T: Scalar, B: Backbone<T> + ?Sized>(
        label: &str,
        model: &'a B,
        prompts: &'a [Vec<u32>],
        decode: &'a DecodeConfig,
        payload_bytes: u64,
    ) -> Self {
        Self {
            label: label.to_string(),
            layers: model.config().n_layers,
            payload_bytes,
            pass: Box::new(move || decode_pass(model, prompts, decode)),
        }
    }
}

/// Times every target on the calling thread. Each target gets one untimed
/// warm-up pass; then each of the `repetitions` rounds times every target
/// once, in order, so slow drift in machine speed is shared across targets.
pub fn benchmark_interleaved(targets: &[BenchTarget<'_>], repetitions: usize) -> Result<Vec<BenchmarkResult>> {
    if repetitions < 3 {
        return Err(Error::Config("benchmark needs at least 3 repetitions".into()));
    }
    let tokens = targets.iter().map(|t| (t.pass)()).collect::<Result<Vec<_>>>()?;
    let mut times = vec![Vec::with_capacity(repetitions); targets.len()];
    for _ in 0..repetitions {
        for (t, out) in targets.iter().zip(&mut times) {
            let start = Instant::now();
            (t.pass)()?;
            out.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(targets
        .iter()
        .zip(tokens)
        .zip(times)
        .map(|((t, generated_tokens), wall_times)| {
            let median_seconds = median(&wall_times);
            BenchmarkResult {
                label: t.label.clone(),
                layers: t.layers,
                wall_times,
                median_seconds,
                generated_tokens,
                throughput: generated_tokens as f64 / median_seconds,
                payload_bytes: t.payload_bytes,
            }
        })
        .collect())
}

/// Times greedy decoding of every prompt with a single model.
pub fn benchmark_decode<T: Scalar, B: Backbone<T> + ?Sized>(
    label: &str,
    model: &B,
    prompts: &[Vec<u32>],
    decode: &DecodeConfig,
    repetitions: usize,
    payload_bytes: u64,
) -> Result<BenchmarkResult> {
    if prompts.is_empty() {
        return Err(Error::Input("no benchmark prompts".into()));
    }
    let target = BenchTarget::new(label, model, prompts, decode, payload_bytes);
    Ok(benchmark_interleaved(std::slice::from_ref(&target), repetitions)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig, TransformerModel};

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn throughput_is_tokens_over_median() {
        let cfg = ModelConfig {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            n_layers: 2,
            max_seq_len: 16,
        };
        let model: TransformerModel<f32> = init_model(cfg, 0).unwrap();
        let prompts = vec![vec![1, 5, 6, 3], vec![1, 7, 3]];
        let decode = DecodeConfig {
            max_new_tokens: 5,
            temperature: 0.0,
        };
        let r = benchmark_decode("m", &model, &prompts, &decode, 3, 0).unwrap();
        assert_eq!(r.wall_times.len(), 3);
        assert_eq!(r.throughput, r.generated_tokens as f64 / median(&r.wall_times));
        assert!(benchmark_decode("m", &model, &[], &decode, 3, 0).is_err());
        assert!(benchmark_decode("m", &model, &prompts, &decode, 2, 0).is_err());
    }

    #[test]
    fn interleaved_keeps_target_order() {
        let cfg = ModelConfig {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            n_layers: 3,
            max_seq_len: 16,
        };
        let deep: TransformerModel<f32> = init_model(cfg, 0).unwrap();
        let shallow = deep.remove_layer(0).unwrap();
        let prompts = vec![vec![1, 5, 6, 3]];
        let decode = DecodeConfig::default();
        let targets = [
            BenchTarget::new("deep", &deep, &prompts, &decode, 1),
            BenchTarget::new("shallow", &shallow, &prompts, &decode, 2),
        ];
        let r = benchmark_interleaved(&targets, 4).unwrap();
        assert_eq!(r.iter().map(|b| (b.label.as_str(), b.layers)).collect::<Vec<_>>(), [("deep", 3), ("shallow", 2)]);
        assert!(r.iter().all(|b| b.wall_times.len() == 4));
        assert_eq!(r[1].payload_bytes, 2);
    }
}
