//! Quantized model file: the dense header plus quantization fields, then
//! per-tensor payloads in canonical order. A quantized matrix is stored as
//! its packed codes, 16-bit scales, 16-bit zero points and the verbatim
//! group table (`u32` count, then `u32` group, `u32` length, `f32` values).

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use half::f16;

use super::{EmbeddingStore, QuantConfig, QuantLayer, QuantMatrix, QuantScheme, QuantizedModel};
use crate::error::{Error, Result};
use crate::model::tensor::Matrix;
use crate::model::{config_header, read_config, split_header, take_field, parse_usize};
use crate::scalar::Scalar;

pub const QUANT_FORMAT_TAG: &str = "layerprune-qmodel v1";

fn put_f32s<T: Scalar>(buf: &mut Vec<u8>, v: &[T]) {
    for x in v {
        buf.extend_from_slice(&x.to_f32_lossy().to_le_bytes());
    }
}

fn put_quant(buf: &mut Vec<u8>, q: &QuantMatrix) {
    buf.extend_from_slice(&q.codes);
    for s in q.scales.iter().chain(&q.zeros) {
        buf.extend_from_slice(&s.to_bits().to_le_bytes());
    }
    buf.extend_from_slice(&(q.exact.len() as u32).to_le_bytes());
    for (g, vals) in &q.exact {
        buf.extend_from_slice(&g.to_le_bytes());
        buf.extend_from_slice(&(vals.len() as u32).to_le_bytes());
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn write_quantized<T: Scalar, W: Write>(model: &QuantizedModel<T>, mut out: W) -> std::io::Result<()> {
    let embeddings = match model.embedding {
        EmbeddingStore::Dense(_) => "dense",
        EmbeddingStore::Quantized(_) => "quantized",
    };
    write!(
        out,
        "{QUANT_FORMAT_TAG}\n{}bits {}\ngroup_size {}\nembeddings {embeddings}\nend\n",
        config_header(&model.config, &model.layer_ids),
        model.quant.bits,
        model.quant.group_size,
    )?;
    let mut buf = Vec::new();
    match &model.embedding {
        EmbeddingStore::Dense(m) => put_f32s(&mut buf, &m.data),
        EmbeddingStore::Quantized(q) => put_quant(&mut buf, q),
    }
    for l in &model.layers {
        put_f32s(&mut buf, &l.attn_norm);
        for q in [&l.wq, &l.wk, &l.wv, &l.wo] {
            put_quant(&mut buf, q);
        }
        put_f32s(&mut buf, &l.mlp_norm);
        put_quant(&mut buf, &l.w_up);
        put_quant(&mut buf, &l.w_down);
    }
    put_f32s(&mut buf, &model.final_norm);
    out.write_all(&buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format("truncated quantized payload".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
            .collect())
    }

    fn f16s(&mut self, n: usize) -> Result<Vec<f16>> {
        Ok(self
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| f16::from_bits(u16::from_le_bytes([c[0], c[1]])))
            .collect())
    }

    fn quant(&mut self, rows: usize, cols: usize, cfg: &QuantConfig) -> Result<QuantMatrix> {
        let len = rows * cols;
        let code_bytes = if cfg.bits == 4 { len.div_ceil(2) } else { len };
        let groups = len.div_ceil(cfg.group_size);
        let codes = self.take(code_bytes)?.to_vec();
        let scales = self.f16s(groups)?;
        let zeros = self.f16s(groups)?;
        let mut exact = BTreeMap::new();
        for _ in 0..self.u32()? {
            let g = self.u32()?;
            let n = self.u32()? as usize;
            if g as usize >= groups || n > cfg.group_size {
                return Err(Error::Format("bad verbatim group entry".into()));
            }
            exact.insert(g, self.f32s::<f32>(n)?);
        }
        Ok(QuantMatrix {
            rows,
            cols,
            bits: cfg.bits,
            group_size: cfg.group_size,
            codes,
            scales,
            zeros,
            exact,
        })
    }
}

pub fn read_quantized<T: Scalar, R: Read>(mut input: R) -> Result<QuantizedModel<T>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(e.to_string()))?;
    let (fields, payload) = split_header(&bytes, QUANT_FORMAT_TAG)?;
    let mut pos = 0;
    let (config, layer_ids) = read_config(&fields, &mut pos)?;
    let bits = parse_usize(take_field(&fields, &mut pos, "bits")?, "bits")?;
    let group_size = parse_usize(take_field(&fields, &mut pos, "group_size")?, "group_size")?;
    let include_embeddings = match take_field(&fields, &mut pos, "embeddings")? {
        "dense" => false,
        "quantized" => true,
        other => return Err(Error::Format(format!("bad embeddings mode `{other}`"))),
    };
    let quant = QuantConfig {
        bits: u8::try_from(bits).map_err(|_| Error::Format("bad bits".into()))?,
        group_size,
        scheme: QuantScheme::Affine,
        include_embeddings,
    };
    quant.validate().map_err(|e| Error::Format(e.to_string()))?;

    let (d, ff, v) = (config.d_model, config.d_ff, config.vocab_size);
    let mut cur = Cursor { bytes: payload };
    let embedding = if include_embeddings {
        EmbeddingStore::Quantized(cur.quant(v, d, &quant)?)
    } else {
        EmbeddingStore::Dense(Matrix {
            rows: v,
            cols: d,
            data: cur.f32s(v * d)?,
        })
    };
    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let attn_norm = cur.f32s(d)?;
        let wq = cur.quant(d, d, &quant)?;
        let wk = cur.quant(d, d, &quant)?;
        let wv = cur.quant(d, d, &quant)?;
        let wo = cur.quant(d, d, &quant)?;
        let mlp_norm = cur.f32s(d)?;
        let w_up = cur.quant(d, ff, &quant)?;
        let w_down = cur.quant(ff, d, &quant)?;
        layers.push(QuantLayer {
            attn_norm,
            wq,
            wk,
            wv,
            wo,
            mlp_norm,
            w_up,
            w_down,
        });
    }
    let final_norm = cur.f32s(d)?;
    if !cur.bytes.is_empty() {
        return Err(Error::Format("trailing bytes after quantized payload".into()));
    }
    Ok(QuantizedModel {
        config,
        quant,
        embedding,
        layers,
        final_norm,
        layer_ids,
    })
}

pub fn save_quantized<T: Scalar>(model: &QuantizedModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_quantized(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_quantized<T: Scalar>(path: impl AsRef<Path>) -> Result<QuantizedModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_quantized(bytes.as_slice())
}
