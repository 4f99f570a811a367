//! Model file format.
//!
//! ```text
//! layerprune-model v1
//! vocab_size <n>
//! d_model <n>
//! n_heads <n>
//! d_ff <n>
//! n_layers <n>
//! max_seq_len <n>
//! layer_ids <i> <i> ...
//! floats <n>
//! end
//! <n little-endian f32 values in canonical tensor order>
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ModelConfig, TransformerModel};
use crate::error::{Error, Result};
use crate::model::tensor::Matrix;
use crate::model::DecoderLayer;
use crate::scalar::Scalar;

pub const FORMAT_TAG: &str = "layerprune-model v1";

pub(crate) fn config_header(cfg: &ModelConfig, layer_ids: &[usize]) -> String {
    let ids: Vec<String> = layer_ids.iter().map(|i| i.to_string()).collect();
    format!(
        "vocab_size {}\nd_model {}\nn_heads {}\nd_ff {}\nn_layers {}\nmax_seq_len {}\nlayer_ids {}\n",
        cfg.vocab_size,
        cfg.d_model,
        cfg.n_heads,
        cfg.d_ff,
        cfg.n_layers,
        cfg.max_seq_len,
        ids.join(" ")
    )
}

/// Ordered `key value` header lines up to the `end` marker, plus the offset
/// of the binary payload.
pub(crate) fn split_header<'a>(bytes: &'a [u8], tag: &str) -> Result<(Vec<(String, String)>, &'a [u8])> {
    let marker = b"\nend\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Format("missing header terminator".into()))?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first != tag {
        return Err(Error::Format(format!("expected `{tag}`, found `{first}`")));
    }
    let fields = lines
        .map(|l| {
            let (k, v) = l.split_once(' ').unwrap_or((l, ""));
            (k.to_string(), v.to_string())
        })
        .collect();
    Ok((fields, &bytes[end + marker.len()..]))
}

pub(crate) fn take_field<'f>(fields: &'f [(String, String)], pos: &mut usize, key: &str) -> Result<&'f str> {
    match fields.get(*pos) {
        Some((k, v)) if k == key => {
            *pos += 1;
            Ok(v)
        }
        Some((k, _)) => Err(Error::Format(format!("expected header field `{key}`, found `{k}`"))),
        None => Err(Error::Format(format!("missing header field `{key}`"))),
    }
}

pub(crate) fn parse_usize(v: &str, key: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad value `{v}` for `{key}`")))
}

pub(crate) fn read_config(fields: &[(String, String)], pos: &mut usize) -> Result<(ModelConfig, Vec<usize>)> {
    let mut num = |key: &str| -> Result<usize> {
        let v = take_field(fields, pos, key)?;
        parse_usize(v, key)
    };
    let cfg = ModelConfig {
        vocab_size: num("vocab_size")?,
        d_model: num("d_model")?,
        n_heads: num("n_heads")?,
        d_ff: num("d_ff")?,
        n_layers: num("n_layers")?,
        max_seq_len: num("max_seq_len")?,
    };
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    let ids_text = take_field(fields, pos, "layer_ids")?;
    let ids = ids_text
        .split_whitespace()
        .map(|s| parse_usize(s, "layer_ids"))
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != cfg.n_layers || ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format("layer_ids must be strictly increasing, one per layer".into()));
    }
    Ok((cfg, ids))
}

pub(crate) fn read_f32s(payload: &[u8], count: usize) -> Result<Vec<f32>> {
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header promises {} floats",
            payload.len(),
            count
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_model<T: Scalar, W: Write>(model: &TransformerModel<T>, mut out: W) -> std::io::Result<()> {
    let tensors = model.tensors();
    let floats: usize = tensors.iter().map(|(_, _, t)| t.len()).sum();
    write!(
        out,
        "{FORMAT_TAG}\n{}floats {floats}\nend\n",
        config_header(&model.config, &model.layer_ids)
    )?;
    let mut buf = Vec::with_capacity(floats * 4);
    for (_, _, t) in tensors {
        for v in t {
            buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn read_model<T: Scalar, R: Read>(mut input: R) -> Result<TransformerModel<T>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(e.to_string()))?;
    let (fields, payload) = split_header(&bytes, FORMAT_TAG)?;
    let mut pos = 0;
    let (cfg, layer_ids) = read_config(&fields, &mut pos)?;
    let count = parse_usize(take_field(&fields, &mut pos, "floats")?, "floats")?;
    let expected = super::param_count(&cfg).total as usize;
    if count != expected {
        return Err(Error::Format(format!(
            "header promises {count} floats, config needs {expected}"
        )));
    }
    let values = read_f32s(payload, count)?;
    let mut it = values.into_iter().map(|v| T::lit(v as f64));
    let mut take = |n: usize| -> Vec<T> { it.by_ref().take(n).collect() };
    let (d, ff, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mat = |rows: usize, cols: usize, data: Vec<T>| Matrix { rows, cols, data };
    let embedding = mat(v, d, take(v * d));
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        layers.push(DecoderLayer {
            attn_norm: take(d),
            wq: mat(d, d, take(d * d)),
            wk: mat(d, d, take(d * d)),
            wv: mat(d, d, take(d * d)),
            wo: mat(d, d, take(d * d)),
            mlp_norm: take(d),
            w_up: mat(d, ff, take(d * ff)),
            w_down: mat(ff, d, take(ff * d)),
        });
    }
    let final_norm = take(d);
    Ok(TransformerModel {
        config: cfg,
        embedding,
        layers,
        final_norm,
        layer_ids,
    })
}

pub fn save_model<T: Scalar>(model: &TransformerModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<TransformerModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(bytes.as_slice())
}

/// SHA-256 over the serialised model; equal fingerprints mean bit-identical
/// weights and provenance.
pub fn fingerprint<T: Scalar>(model: &TransformerModel<T>) -> String {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}
