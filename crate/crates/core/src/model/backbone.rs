//! Inference over any weight store: full-sequence forward, KV-cached greedy
//! decoding and its cache-free reference.

use rayon::prelude::*;

use super::tensor::{attend, axpy, dot, gelu, rms_norm, softmax_in_place, vec_mat, RotaryTable};
use super::{DecodeConfig, ModelConfig, TransformerModel, EOS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The projection matrices of one decoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proj {
    Query,
    Key,
    Value,
    AttnOut,
    Up,
    Down,
}

/// Read-only weight access for inference. Implemented by the dense model and
/// by the quantized model, which dequantizes inside [`Backbone::project`].
pub trait Backbone<T: Scalar>: Sync {
    fn config(&self) -> &ModelConfig;
    fn embed_into(&self, token: usize, out: &mut [T]);
    fn attn_norm(&self, layer: usize) -> &[T];
    fn mlp_norm(&self, layer: usize) -> &[T];
    fn final_norm(&self) -> &[T];
    /// `out = x · W` for the given projection of `layer`.
    fn project(&self, layer: usize, proj: Proj, x: &[T], out: &mut [T]);
    /// Output logits through the tied head.
    fn head_into(&self, x: &[T], logits: &mut [T]);
}

impl<T: Scalar> Backbone<T> for TransformerModel<T> {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn embed_into(&self, token: usize, out: &mut [T]) {
        out.copy_from_slice(self.embedding.row(token));
    }

    fn attn_norm(&self, layer: usize) -> &[T] {
        &self.layers[layer].attn_norm
    }

    fn mlp_norm(&self, layer: usize) -> &[T] {
        &self.layers[layer].mlp_norm
    }

    fn final_norm(&self) -> &[T] {
        &self.final_norm
    }

    fn project(&self, layer: usize, proj: Proj, x: &[T], out: &mut [T]) {
        let l = &self.layers[layer];
        let w = match proj {
            Proj::Query => &l.wq,
            Proj::Key => &l.wk,
            Proj::Value => &l.wv,
            Proj::AttnOut => &l.wo,
            Proj::Up => &l.w_up,
            Proj::Down => &l.w_down,
        };
        vec_mat(x, w, out);
    }

    fn head_into(&self, x: &[T], logits: &mut [T]) {
        for (v, logit) in logits.iter_mut().enumerate() {
            *logit = dot(x, self.embedding.row(v));
        }
    }
}

pub(crate) fn check_tokens(cfg: &ModelConfig, tokens: &[u32]) -> Result<()> {
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max: cfg.max_seq_len,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    Ok(())
}

fn attention_scale<T: Scalar>(cfg: &ModelConfig) -> T {
    T::one() / T::from_usize_lossy(cfg.head_dim()).sqrt()
}

/// Logits for every position of `tokens`, computed layer by layer over the
/// whole sequence without any cache.
pub fn forward<T: Scalar, B: Backbone<T> + ?Sized>(model: &B, tokens: &[u32]) -> Result<Vec<Vec<T>>> {
    let cfg = *model.config();
    check_tokens(&cfg, tokens)?;
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let (n, d, hd, ff) = (tokens.len(), cfg.d_model, cfg.head_dim(), cfg.d_ff);
    let rope = RotaryTable::<T>::new(hd, cfg.max_seq_len);
    let scale = attention_scale::<T>(&cfg);

    let mut x = vec![T::zero(); n * d];
    for (t, &tok) in tokens.iter().enumerate() {
        model.embed_into(tok as usize, &mut x[t * d..(t + 1) * d]);
    }
    let mut normed = vec![T::zero(); d];
    let mut q = vec![T::zero(); n * d];
    let mut k = vec![T::zero(); n * d];
    let mut v = vec![T::zero(); n * d];
    let mut attn = vec![T::zero(); d];
    let mut proj = vec![T::zero(); d];
    let mut hidden = vec![T::zero(); ff];
    let mut probs = vec![T::zero(); n];

    for layer in 0..cfg.n_layers {
        for t in 0..n {
            rms_norm(&x[t * d..(t + 1) * d], model.attn_norm(layer), &mut normed);
            let row = t * d..(t + 1) * d;
            model.project(layer, Proj::Query, &normed, &mut q[row.clone()]);
            model.project(layer, Proj::Key, &normed, &mut k[row.clone()]);
            model.project(layer, Proj::Value, &normed, &mut v[row]);
            for h in 0..cfg.n_heads {
                let head = t * d + h * hd..t * d + (h + 1) * hd;
                rope.apply(&mut q[head.clone()], t);
                rope.apply(&mut k[head], t);
            }
        }
        for t in 0..n {
            for h in 0..cfg.n_heads {
                let qh = &q[t * d + h * hd..t * d + (h + 1) * hd];
                attend(qh, &k, &v, d, h * hd, t, scale, &mut probs, &mut attn[h * hd..(h + 1) * hd]);
            }
            model.project(layer, Proj::AttnOut, &attn, &mut proj);
            let xt = &mut x[t * d..(t + 1) * d];
            axpy(T::one(), &proj, xt);
            rms_norm(xt, model.mlp_norm(layer), &mut normed);
            model.project(layer, Proj::Up, &normed, &mut hidden);
            for h in hidden.iter_mut() {
                *h = gelu(*h);
            }
            model.project(layer, Proj::Down, &hidden, &mut proj);
            axpy(T::one(), &proj, xt);
        }
    }

    let mut logits = Vec::with_capacity(n);
    for t in 0..n {
        rms_norm(&x[t * d..(t + 1) * d], model.final_norm(), &mut normed);
        let mut row = vec![T::zero(); cfg.vocab_size];
        model.head_into(&normed, &mut row);
        logits.push(row);
    }
    Ok(logits)
}

/// Normalised next-token distribution for a logit row.
pub fn probabilities<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// Per-layer cached keys (post-rotary) and values.
struct KvCache<T> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
}

struct Decoder<'m, T: Scalar, B: Backbone<T> + ?Sized> {
    model: &'m B,
    cfg: ModelConfig,
    rope: RotaryTable<T>,
    scale: T,
    cache: KvCache<T>,
    x: Vec<T>,
    normed: Vec<T>,
    q: Vec<T>,
    kv: Vec<T>,
    attn: Vec<T>,
    proj: Vec<T>,
    hidden: Vec<T>,
    probs: Vec<T>,
    logits: Vec<T>,
}

impl<'m, T: Scalar, B: Backbone<T> + ?Sized> Decoder<'m, T, B> {
    fn new(model: &'m B) -> Self {
        let cfg = *model.config();
        let d = cfg.d_model;
        Self {
            model,
            cfg,
            rope: RotaryTable::new(cfg.head_dim(), cfg.max_seq_len),
            scale: attention_scale(&cfg),
            cache: KvCache {
                keys: vec![Vec::with_capacity(cfg.max_seq_len * d); cfg.n_layers],
                values: vec![Vec::with_capacity(cfg.max_seq_len * d); cfg.n_layers],
                len: 0,
            },
            x: vec![T::zero(); d],
            normed: vec![T::zero(); d],
            q: vec![T::zero(); d],
            kv: vec![T::zero(); d],
            attn: vec![T::zero(); d],
            proj: vec![T::zero(); d],
            hidden: vec![T::zero(); cfg.d_ff],
            probs: vec![T::zero(); cfg.max_seq_len],
            logits: vec![T::zero(); cfg.vocab_size],
        }
    }

    /// Appends one token and leaves its next-token logits in `self.logits`.
    fn step(&mut self, token: u32) {
        let cfg = self.cfg;
        let (d, hd) = (cfg.d_model, cfg.head_dim());
        let t = self.cache.len;
        self.model.embed_into(token as usize, &mut self.x);
        for layer in 0..cfg.n_layers {
            rms_norm(&self.x, self.model.attn_norm(layer), &mut self.normed);
            self.model.project(layer, Proj::Query, &self.normed, &mut self.q);
            self.model.project(layer, Proj::Key, &self.normed, &mut self.kv);
            for h in 0..cfg.n_heads {
                self.rope.apply(&mut self.q[h * hd..(h + 1) * hd], t);
                self.rope.apply(&mut self.kv[h * hd..(h + 1) * hd], t);
            }
            self.cache.keys[layer].extend_from_slice(&self.kv);
            self.model.project(layer, Proj::Value, &self.normed, &mut self.kv);
            self.cache.values[layer].extend_from_slice(&self.kv);
            for h in 0..cfg.n_heads {
                attend(
                    &self.q[h * hd..(h + 1) * hd],
                    &self.cache.keys[layer],
                    &self.cache.values[layer],
                    d,
                    h * hd,
                    t,
                    self.scale,
                    &mut self.probs,
                    &mut self.attn[h * hd..(h + 1) * hd],
                );
            }
            self.model.project(layer, Proj::AttnOut, &self.attn, &mut self.proj);
            axpy(T::one(), &self.proj, &mut self.x);
            rms_norm(&self.x, self.model.mlp_norm(layer), &mut self.normed);
            self.model.project(layer, Proj::Up, &self.normed, &mut self.hidden);
            for h in self.hidden.iter_mut() {
                *h = gelu(*h);
            }
            self.model.project(layer, Proj::Down, &self.hidden, &mut self.proj);
            axpy(T::one(), &self.proj, &mut self.x);
        }
        self.cache.len += 1;
        rms_norm(&self.x, self.model.final_norm(), &mut self.normed);
        self.model.head_into(&self.normed, &mut self.logits);
    }
}

/// Result of one greedy decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    /// Generated tokens, EOS excluded.
    pub tokens: Vec<u32>,
    pub stopped_at_eos: bool,
}

impl Generated {
    /// Decoding steps that produced a token, counting a final EOS.
    pub fn steps(&self) -> usize {
        self.tokens.len() + usize::from(self.stopped_at_eos)
    }
}

/// Highest logit, lowest id on ties.
pub(crate) fn argmax<T: Scalar>(logits: &[T]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

fn check_decode(cfg: &ModelConfig, prompt: &[u32], decode: &DecodeConfig) -> Result<()> {
    if decode.temperature != 0.0 {
        return Err(Error::Config(format!(
            "temperature {} requested; only greedy (temperature 0) decoding is supported",
            decode.temperature
        )));
    }
    if prompt.is_empty() {
        return Err(Error::Input("empty prompt".into()));
    }
    check_tokens(cfg, prompt)
}

/// Greedy decoding with an incremental key/value cache.
pub fn generate<T: Scalar, B: Backbone<T> + ?Sized>(
    model: &B,
    prompt: &[u32],
    decode: &DecodeConfig,
) -> Result<Generated> {
    let cfg = *model.config();
    check_decode(&cfg, prompt, decode)?;
    let mut out = Generated {
        tokens: Vec::new(),
        stopped_at_eos: false,
    };
    if decode.max_new_tokens == 0 {
        return Ok(out);
    }
    let mut decoder = Decoder::new(model);
    for &tok in prompt {
        decoder.step(tok);
    }
    let mut len = prompt.len();
    loop {
        let next = argmax(&decoder.logits);
        if next == EOS {
            out.stopped_at_eos = true;
            break;
        }
        out.tokens.push(next);
        len += 1;
        if out.tokens.len() >= decode.max_new_tokens || len >= cfg.max_seq_len {
            break;
        }
        decoder.step(next);
    }
    Ok(out)
}

/// Greedy decoding that re-runs [`forward`] over the whole sequence at every
/// step. Reference for [`generate`].
pub fn generate_uncached<T: Scalar, B: Backbone<T> + ?Sized>(
    model: &B,
    prompt: &[u32],
    decode: &DecodeConfig,
) -> Result<Generated> {
    let cfg = *model.config();
    check_decode(&cfg, prompt, decode)?;
    let mut seq = prompt.to_vec();
    let mut out = Generated {
        tokens: Vec::new(),
        stopped_at_eos: false,
    };
    while out.tokens.len() < decode.max_new_tokens {
        let logits = forward(model, &seq)?;
        let next = argmax(logits.last().expect("non-empty sequence"));
        if next == EOS {
            out.stopped_at_eos = true;
            break;
        }
        out.tokens.push(next);
        seq.push(next);
        if seq.len() >= cfg.max_seq_len {
            break;
        }
    }
    Ok(out)
}

/// Decodes independent prompts, possibly in parallel; output order matches
/// input order.
pub fn generate_batch<T: Scalar, B: Backbone<T> + ?Sized>(
    model: &B,
    prompts: &[Vec<u32>],
    decode: &DecodeConfig,
) -> Result<Vec<Generated>> {
    prompts.par_iter().map(|p| generate(model, p, decode)).collect()
}
