//! Tiny pre-norm decoder-only transformer with layer surgery, parameter
//! accounting, greedy decoding and a binary file format.

mod backbone;
mod io;
pub mod tensor;
mod vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use tensor::Matrix;

pub use backbone::{
    forward, generate, generate_batch, generate_uncached, probabilities, Backbone, Generated, Proj,
};
pub(crate) use backbone::check_tokens as check_token_ids;
pub(crate) use io::{config_header, parse_usize, read_config, split_header, take_field};
pub use io::{fingerprint, load_model, read_model, save_model, write_model, FORMAT_TAG};
pub use vocab::{
    translate_all, ModelTranslator, PromptEncoder, Translate, TrainingExample, Vocab, BOS, EOS,
    PAD, SEP, UNK,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            n_layers: 8,
            max_seq_len: 48,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 4 {
            return fail(format!("vocab_size must be >= 4, got {}", self.vocab_size));
        }
        if self.n_layers == 0 {
            return fail("n_layers must be >= 1".into());
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.head_dim() % 2 != 0 {
            return fail(format!("head dimension {} must be even for rotary encoding", self.head_dim()));
        }
        if self.d_ff == 0 || self.max_seq_len == 0 {
            return fail("d_ff and max_seq_len must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Greedy decoding settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    /// 0 selects argmax decoding; sampling is not supported.
    pub temperature: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 16,
            temperature: 0.0,
        }
    }
}

/// Parameter tensor families, used for gradient probes and memory reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorClass {
    Embedding,
    AttnNorm,
    Query,
    Key,
    Value,
    AttnOut,
    MlpNorm,
    MlpUp,
    MlpDown,
    FinalNorm,
}

impl TensorClass {
    pub const ALL: [TensorClass; 10] = [
        TensorClass::Embedding,
        TensorClass::AttnNorm,
        TensorClass::Query,
        TensorClass::Key,
        TensorClass::Value,
        TensorClass::AttnOut,
        TensorClass::MlpNorm,
        TensorClass::MlpUp,
        TensorClass::MlpDown,
        TensorClass::FinalNorm,
    ];

    pub fn is_norm(self) -> bool {
        matches!(self, Self::AttnNorm | Self::MlpNorm | Self::FinalNorm)
    }

    pub fn is_projection(self) -> bool {
        matches!(
            self,
            Self::Query | Self::Key | Self::Value | Self::AttnOut | Self::MlpUp | Self::MlpDown
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Embedding => "embedding",
            Self::AttnNorm => "attn_norm",
            Self::Query => "query",
            Self::Key => "key",
            Self::Value => "value",
            Self::AttnOut => "attn_out",
            Self::MlpNorm => "mlp_norm",
            Self::MlpUp => "mlp_up",
            Self::MlpDown => "mlp_down",
            Self::FinalNorm => "final_norm",
        }
    }
}

/// One pre-norm block: RMSNorm → causal rotary attention → residual,
/// RMSNorm → GELU MLP → residual. Weights are stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<T> {
    pub attn_norm: Vec<T>,
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub mlp_norm: Vec<T>,
    pub w_up: Matrix<T>,
    pub w_down: Matrix<T>,
}

impl<T: Scalar> DecoderLayer<T> {
    fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        Self {
            attn_norm: vec![T::zero(); d],
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            mlp_norm: vec![T::zero(); d],
            w_up: Matrix::zeros(d, cfg.d_ff),
            w_down: Matrix::zeros(cfg.d_ff, d),
        }
    }

    /// Zeroes both residual-branch output projections, turning the block
    /// into an exact identity.
    pub fn silence(&mut self) {
        self.wo.data.fill(T::zero());
        self.w_down.data.fill(T::zero());
    }
}

/// Decoder stack with tied input embedding / output head. `layer_ids`
/// records, for each surviving layer, its index in the unpruned model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel<T> {
    pub config: ModelConfig,
    pub embedding: Matrix<T>,
    pub layers: Vec<DecoderLayer<T>>,
    pub final_norm: Vec<T>,
    pub layer_ids: Vec<usize>,
}

/// Parameter counts: `total = non_layer + n_layers · per_layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: u64,
    pub per_layer: u64,
    pub non_layer: u64,
}

pub fn param_count(cfg: &ModelConfig) -> ParamCount {
    let d = cfg.d_model as u64;
    let ff = cfg.d_ff as u64;
    let per_layer = 4 * d * d + 2 * d * ff + 2 * d;
    let non_layer = cfg.vocab_size as u64 * d + d;
    ParamCount {
        total: non_layer + cfg.n_layers as u64 * per_layer,
        per_layer,
        non_layer,
    }
}

/// Seeded initialisation: N(0, 1/d) embeddings, N(0, 1/fan_in) projections
/// with the residual-branch outputs further scaled by 1/sqrt(2·n_layers),
/// unit norm gains.
pub fn init_model<T: Scalar>(cfg: ModelConfig, seed: u64) -> Result<TransformerModel<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let in_std = 1.0 / (d as f64).sqrt();
    let residual = 1.0 / (2.0 * cfg.n_layers as f64).sqrt();
    let embedding = Matrix::random_normal(cfg.vocab_size, d, in_std, &mut rng);
    let layers = (0..cfg.n_layers)
        .map(|_| DecoderLayer {
            attn_norm: vec![T::one(); d],
            wq: Matrix::random_normal(d, d, in_std, &mut rng),
            wk: Matrix::random_normal(d, d, in_std, &mut rng),
            wv: Matrix::random_normal(d, d, in_std, &mut rng),
            wo: Matrix::random_normal(d, d, in_std * residual, &mut rng),
            mlp_norm: vec![T::one(); d],
            w_up: Matrix::random_normal(d, cfg.d_ff, in_std, &mut rng),
            w_down: Matrix::random_normal(
                cfg.d_ff,
                d,
                residual / (cfg.d_ff as f64).sqrt(),
                &mut rng,
            ),
        })
        .collect();
    Ok(TransformerModel {
        config: cfg,
        embedding,
        layers,
        final_norm: vec![T::one(); d],
        layer_ids: (0..cfg.n_layers).collect(),
    })
}

impl<T: Scalar> TransformerModel<T> {
    /// Same shapes and provenance, every parameter zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            embedding: Matrix::zeros(self.config.vocab_size, self.config.d_model),
            layers: self.layers.iter().map(|_| DecoderLayer::zeros(&self.config)).collect(),
            final_norm: vec![T::zero(); self.config.d_model],
            layer_ids: self.layer_ids.clone(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.config)
    }

    /// Returns a copy with the layer at `position` deleted.
    pub fn remove_layer(&self, position: usize) -> Result<Self> {
        if position >= self.layers.len() {
            return Err(Error::Input(format!(
                "layer position {position} out of range for {} layers",
                self.layers.len()
            )));
        }
        if self.layers.len() < 2 {
            return Err(Error::Input("cannot remove the last remaining layer".into()));
        }
        let mut pruned = self.clone();
        pruned.layers.remove(position);
        pruned.layer_ids.remove(position);
        pruned.config.n_layers -= 1;
        Ok(pruned)
    }

    /// Position of the layer whose original index is `id`.
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.layer_ids.iter().position(|&x| x == id)
    }

    /// Parameter tensors in canonical order with their class and layer.
    pub fn tensors(&self) -> Vec<(TensorClass, Option<usize>, &[T])> {
        let mut out = vec![(TensorClass::Embedding, None, self.embedding.data.as_slice())];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend([
                (TensorClass::AttnNorm, Some(i), l.attn_norm.as_slice()),
                (TensorClass::Query, Some(i), l.wq.data.as_slice()),
                (TensorClass::Key, Some(i), l.wk.data.as_slice()),
                (TensorClass::Value, Some(i), l.wv.data.as_slice()),
                (TensorClass::AttnOut, Some(i), l.wo.data.as_slice()),
                (TensorClass::MlpNorm, Some(i), l.mlp_norm.as_slice()),
                (TensorClass::MlpUp, Some(i), l.w_up.data.as_slice()),
                (TensorClass::MlpDown, Some(i), l.w_down.data.as_slice()),
            ]);
        }
        out.push((TensorClass::FinalNorm, None, self.final_norm.as_slice()));
        out
    }

    /// Mutable view of the same tensors, same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(TensorClass, &mut [T])> {
        let mut out: Vec<(TensorClass, &mut [T])> =
            vec![(TensorClass::Embedding, self.embedding.data.as_mut_slice())];
        for l in self.layers.iter_mut() {
            out.push((TensorClass::AttnNorm, l.attn_norm.as_mut_slice()));
            out.push((TensorClass::Query, l.wq.data.as_mut_slice()));
            out.push((TensorClass::Key, l.wk.data.as_mut_slice()));
            out.push((TensorClass::Value, l.wv.data.as_mut_slice()));
            out.push((TensorClass::AttnOut, l.wo.data.as_mut_slice()));
            out.push((TensorClass::MlpNorm, l.mlp_norm.as_mut_slice()));
            out.push((TensorClass::MlpUp, l.w_up.data.as_mut_slice()));
            out.push((TensorClass::MlpDown, l.w_down.data.as_mut_slice()));
        }
        out.push((TensorClass::FinalNorm, self.final_norm.as_mut_slice()));
        out
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> TransformerModel<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<U>>();
        let cm = |m: &Matrix<T>| Matrix {
            rows: m.rows,
            cols: m.cols,
            data: cv(&m.data),
        };
        TransformerModel {
            config: self.config,
            embedding: cm(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| DecoderLayer {
                    attn_norm: cv(&l.attn_norm),
                    wq: cm(&l.wq),
                    wk: cm(&l.wk),
                    wv: cm(&l.wv),
                    wo: cm(&l.wo),
                    mlp_norm: cv(&l.mlp_norm),
                    w_up: cm(&l.w_up),
                    w_down: cm(&l.w_down),
                })
                .collect(),
            final_norm: cv(&self.final_norm),
            layer_ids: self.layer_ids.clone(),
        }
    }
}
