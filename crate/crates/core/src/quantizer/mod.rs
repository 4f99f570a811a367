//! Group-wise affine weight quantization, dequantize-on-use inference and
//! payload accounting.

mod io;
mod matrix;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tensor::{dot, Matrix};
use crate::model::{Backbone, ModelConfig, Proj, TensorClass, TransformerModel};
use crate::scalar::Scalar;

pub use io::{load_quantized, read_quantized, save_quantized, write_quantized, QUANT_FORMAT_TAG};
pub use matrix::QuantMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantScheme {
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub bits: u8,
    pub group_size: usize,
    pub scheme: QuantScheme,
    pub include_embeddings: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            bits: 4,
            group_size: 64,
            scheme: QuantScheme::Affine,
            include_embeddings: false,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits != 4 && self.bits != 8 {
            return Err(Error::Config(format!("bits must be 4 or 8, got {}", self.bits)));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingStore<T> {
    Dense(Matrix<T>),
    Quantized(QuantMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer<T> {
    pub attn_norm: Vec<T>,
    pub wq: QuantMatrix,
    pub wk: QuantMatrix,
    pub wv: QuantMatrix,
    pub wo: QuantMatrix,
    pub mlp_norm: Vec<T>,
    pub w_up: QuantMatrix,
    pub w_down: QuantMatrix,
}

impl<T> QuantLayer<T> {
    fn matrix(&self, proj: Proj) -> &QuantMatrix {
        match proj {
            Proj::Query => &self.wq,
            Proj::Key => &self.wk,
            Proj::Value => &self.wv,
            Proj::AttnOut => &self.wo,
            Proj::Up => &self.w_up,
            Proj::Down => &self.w_down,
        }
    }
}

/// Immutable quantized weights; norms stay at full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel<T> {
    pub config: ModelConfig,
    pub quant: QuantConfig,
    pub embedding: EmbeddingStore<T>,
    pub layers: Vec<QuantLayer<T>>,
    pub final_norm: Vec<T>,
    pub layer_ids: Vec<usize>,
}

pub fn quantize_model<T: Scalar>(model: &TransformerModel<T>, cfg: &QuantConfig) -> Result<QuantizedModel<T>> {
    cfg.validate()?;
    let q = |m: &Matrix<T>| QuantMatrix::quantize(m, cfg.bits, cfg.group_size);
    let embedding = if cfg.include_embeddings {
        EmbeddingStore::Quantized(q(&model.embedding))
    } else {
        EmbeddingStore::Dense(model.embedding.clone())
    };
    let layers = model
        .layers
        .iter()
        .map(|l| QuantLayer {
            attn_norm: l.attn_norm.clone(),
            wq: q(&l.wq),
            wk: q(&l.wk),
            wv: q(&l.wv),
            wo: q(&l.wo),
            mlp_norm: l.mlp_norm.clone(),
            w_up: q(&l.w_up),
            w_down: q(&l.w_down),
        })
        .collect();
    Ok(QuantizedModel {
        config: model.config,
        quant: *cfg,
        embedding,
        layers,
        final_norm: model.final_norm.clone(),
        layer_ids: model.layer_ids.clone(),
    })
}

impl<T: Scalar> QuantizedModel<T> {
    /// Full-precision model with the decoded weights.
    pub fn dequantize(&self) -> TransformerModel<T> {
        TransformerModel {
            config: self.config,
            embedding: match &self.embedding {
                EmbeddingStore::Dense(m) => m.clone(),
                EmbeddingStore::Quantized(q) => q.dequantize(),
            },
            layers: self
                .layers
                .iter()
                .map(|l| crate::model::DecoderLayer {
                    attn_norm: l.attn_norm.clone(),
                    wq: l.wq.dequantize(),
                    wk: l.wk.dequantize(),
                    wv: l.wv.dequantize(),
                    wo: l.wo.dequantize(),
                    mlp_norm: l.mlp_norm.clone(),
                    w_up: l.w_up.dequantize(),
                    w_down: l.w_down.dequantize(),
                })
                .collect(),
            final_norm: self.final_norm.clone(),
            layer_ids: self.layer_ids.clone(),
        }
    }

    /// Quantized matrices in canonical order with their class.
    pub fn quantized_tensors(&self) -> Vec<(TensorClass, &QuantMatrix)> {
        let mut out = Vec::new();
        if let EmbeddingStore::Quantized(q) = &self.embedding {
            out.push((TensorClass::Embedding, q));
        }
        for l in &self.layers {
            out.extend([
                (TensorClass::Query, &l.wq),
                (TensorClass::Key, &l.wk),
                (TensorClass::Value, &l.wv),
                (TensorClass::AttnOut, &l.wo),
                (TensorClass::MlpUp, &l.w_up),
                (TensorClass::MlpDown, &l.w_down),
            ]);
        }
        out
    }
}

impl<T: Scalar> Backbone<T> for QuantizedModel<T> {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn embed_into(&self, token: usize, out: &mut [T]) {
        match &self.embedding {
            EmbeddingStore::Dense(m) => out.copy_from_slice(m.row(token)),
            EmbeddingStore::Quantized(q) => q.dequantize_into(token * q.cols, out),
        }
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
        let mut row = Vec::new();
        self.layers[layer].matrix(proj).vec_mat(x, out, &mut row);
    }

    fn head_into(&self, x: &[T], logits: &mut [T]) {
        match &self.embedding {
            EmbeddingStore::Dense(m) => {
                for (v, l) in logits.iter_mut().enumerate() {
                    *l = dot(x, m.row(v));
                }
            }
            EmbeddingStore::Quantized(q) => {
                let mut row = vec![T::zero(); q.cols];
                for (v, l) in logits.iter_mut().enumerate() {
                    q.dequantize_into(v * q.cols, &mut row);
                    *l = dot(x, &row);
                }
            }
        }
    }
}

/// Serialized payload bytes per tensor class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub by_class: Vec<(TensorClass, u64)>,
    pub total: u64,
}

impl MemoryReport {
    fn from_entries(entries: impl IntoIterator<Item = (TensorClass, u64)>) -> Self {
        let mut by_class: Vec<(TensorClass, u64)> = TensorClass::ALL.iter().map(|&c| (c, 0)).collect();
        for (class, bytes) in entries {
            if let Some(slot) = by_class.iter_mut().find(|(c, _)| *c == class) {
                slot.1 += bytes;
            }
        }
        let total = by_class.iter().map(|(_, b)| b).sum();
        Self { by_class, total }
    }

    pub fn bytes(&self, class: TensorClass) -> u64 {
        self.by_class
            .iter()
            .find(|(c, _)| *c == class)
            .map_or(0, |(_, b)| *b)
    }

    /// Bytes of the linear projections only.
    pub fn projection_bytes(&self) -> u64 {
        self.by_class
            .iter()
            .filter(|(c, _)| c.is_projection())
            .map(|(_, b)| b)
            .sum()
    }
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| tensor class | bytes |")?;
        writeln!(f, "|---|---:|")?;
        for (c, b) in &self.by_class {
            writeln!(f, "| {} | {} |", c.name(), b)?;
        }
        write!(f, "| total | {} |", self.total)
    }
}

/// Payload accounting for any stored model.
pub trait MemoryFootprint {
    fn memory_report(&self) -> MemoryReport;
}

impl<T: Scalar> MemoryFootprint for TransformerModel<T> {
    fn memory_report(&self) -> MemoryReport {
        MemoryReport::from_entries(self.tensors().into_iter().map(|(c, _, t)| (c, 4 * t.len() as u64)))
    }
}

impl<T: Scalar> MemoryFootprint for QuantizedModel<T> {
    fn memory_report(&self) -> MemoryReport {
        let dense_f32 = |v: usize| 4 * v as u64;
        let mut entries = vec![match &self.embedding {
            EmbeddingStore::Dense(m) => (TensorClass::Embedding, dense_f32(m.len())),
            EmbeddingStore::Quantized(q) => (TensorClass::Embedding, q.payload_bytes()),
        }];
        for l in &self.layers {
            entries.push((TensorClass::AttnNorm, dense_f32(l.attn_norm.len())));
            entries.push((TensorClass::MlpNorm, dense_f32(l.mlp_norm.len())));
        }
        entries.push((TensorClass::FinalNorm, dense_f32(self.final_norm.len())));
        entries.extend(
            self.quantized_tensors()
                .into_iter()
                .filter(|(c, _)| *c != TensorClass::Embedding)
                .map(|(c, q)| (c, q.payload_bytes())),
        );
        MemoryReport::from_entries(entries)
    }
}
