use std::collections::BTreeMap;

use half::f16;

use crate::model::tensor::Matrix;
use crate::scalar::Scalar;

/// Group-wise affine integer encoding of one weight matrix.
///
/// Groups are contiguous runs of `group_size` elements in row-major order;
/// the last group is shorter when the element count is not a multiple.
/// Element `i` of group `g` decodes to `(code_i − zero_g) · scale_g`.
/// Groups that cannot meet the half-step error bound on the 16-bit grid,
/// including every constant group, are kept verbatim in `exact`
/// (a single value means the whole group holds that constant).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: u8,
    pub group_size: usize,
    pub codes: Vec<u8>,
    pub scales: Vec<f16>,
    pub zeros: Vec<f16>,
    pub exact: BTreeMap<u32, Vec<f32>>,
}

enum Group {
    Affine { scale: f16, zero: f16, codes: Vec<u8> },
    Exact(Vec<f32>),
}

fn within(w: f64, q: u8, zero: f64, scale: f64) -> Option<f64> {
    let exact = (f64::from(q) - zero) * scale;
    let stored = f64::from(exact as f32);
    let half = scale / 2.0;
    let err = (w - exact).abs().max((w - stored).abs());
    (err <= half).then_some(err)
}

fn scale_up(x: f64) -> f16 {
    let h = f16::from_f64(x);
    if h.to_f64() < x {
        f16::from_bits(h.to_bits() + 1)
    } else {
        h
    }
}

fn quantize_group(values: &[f32], bits: u8) -> Group {
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(f64::from(v)), hi.max(f64::from(v)))
    });
    if min == max {
        return Group::Exact(vec![values[0]]);
    }
    let levels = f64::from((1u32 << bits) - 1);
    let scale = scale_up((max - min) / levels);
    let s = scale.to_f64();
    let zero = f16::from_f64((-min / s).round());
    let z = zero.to_f64();
    if !(s > 0.0 && s.is_finite() && z.is_finite()) {
        return Group::Exact(values.to_vec());
    }
    let top = (1u32 << bits) - 1;
    let mut codes = Vec::with_capacity(values.len());
    for &v in values {
        let w = f64::from(v);
        let guess = (w / s + z).round().clamp(0.0, f64::from(top)) as u32;
        let best = [guess.saturating_sub(1), guess, (guess + 1).min(top)]
            .into_iter()
            .filter_map(|q| within(w, q as u8, z, s).map(|e| (e, q)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((_, q)) => codes.push(q as u8),
            None => return Group::Exact(values.to_vec()),
        }
    }
    Group::Affine { scale, zero, codes }
}

impl QuantMatrix {
    pub fn quantize<T: Scalar>(m: &Matrix<T>, bits: u8, group_size: usize) -> Self {
        let values: Vec<f32> = m.data.iter().map(|v| v.to_f32_lossy()).collect();
        Self::quantize_f32(&values, m.rows, m.cols, bits, group_size)
    }

    pub fn quantize_f32(values: &[f32], rows: usize, cols: usize, bits: u8, group_size: usize) -> Self {
        assert!(bits == 4 || bits == 8, "bits must be 4 or 8");
        assert!(group_size > 0);
        assert_eq!(values.len(), rows * cols);
        let groups = values.len().div_ceil(group_size);
        let mut flat = Vec::with_capacity(values.len());
        let mut scales = Vec::with_capacity(groups);
        let mut zeros = Vec::with_capacity(groups);
        let mut exact = BTreeMap::new();
        for (g, chunk) in values.chunks(group_size).enumerate() {
            match quantize_group(chunk, bits) {
                Group::Affine { scale, zero, codes } => {
                    scales.push(scale);
                    zeros.push(zero);
                    flat.extend(codes);
                }
                Group::Exact(v) => {
                    scales.push(f16::ZERO);
                    zeros.push(f16::ZERO);
                    flat.extend(std::iter::repeat_n(0u8, chunk.len()));
                    exact.insert(g as u32, v);
                }
            }
        }
        let codes = if bits == 4 {
            flat.chunks(2)
                .map(|p| p[0] | (p.get(1).copied().unwrap_or(0) << 4))
                .collect()
        } else {
            flat
        };
        Self {
            rows,
            cols,
            bits,
            group_size,
            codes,
            scales,
            zeros,
            exact,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_groups(&self) -> usize {
        self.scales.len()
    }

    /// Integer code of element `i` (zero for verbatim groups).
    pub fn code(&self, i: usize) -> u8 {
        if self.bits == 4 {
            (self.codes[i / 2] >> ((i % 2) * 4)) & 0x0f
        } else {
            self.codes[i]
        }
    }

    /// Step size of the group holding element `i`; zero when verbatim.
    pub fn scale_of(&self, i: usize) -> f64 {
        self.scales[i / self.group_size].to_f64()
    }

    /// Decodes elements `start..start + out.len()`.
    pub fn dequantize_into<T: Scalar>(&self, start: usize, out: &mut [T]) {
        let end = start + out.len();
        let mut i = start;
        while i < end {
            let g = i / self.group_size;
            let stop = ((g + 1) * self.group_size).min(end);
            let dst = &mut out[i - start..stop - start];
            if let Some(v) = self.exact.get(&(g as u32)) {
                if v.len() == 1 {
                    dst.fill(T::lit(f64::from(v[0])));
                } else {
                    let off = i - g * self.group_size;
                    for (d, &x) in dst.iter_mut().zip(&v[off..]) {
                        *d = T::lit(f64::from(x));
                    }
                }
            } else {
                let s = self.scales[g].to_f64();
                let z = self.zeros[g].to_f64();
                for (k, d) in dst.iter_mut().enumerate() {
                    let value = (f64::from(self.code(i + k)) - z) * s;
                    *d = T::lit(f64::from(value as f32));
                }
            }
            i = stop;
        }
    }

    pub fn dequantize<T: Scalar>(&self) -> Matrix<T> {
        let mut data = vec![T::zero(); self.len()];
        self.dequantize_into(0, &mut data);
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Re-encodes `values` on this matrix's stored grid. Values produced by
    /// [`Self::dequantize`] map back to exactly the stored codes.
    pub fn requantize_on_grid(&self, values: &[f32]) -> Vec<u8> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let g = i / self.group_size;
                if self.exact.contains_key(&(g as u32)) {
                    return 0;
                }
                let s = self.scales[g].to_f64();
                let z = self.zeros[g].to_f64();
                let top = f64::from((1u32 << self.bits) - 1);
                (f64::from(v) / s + z).round().clamp(0.0, top) as u8
            })
            .collect()
    }

    /// Serialized payload size: codes, two 16-bit values per group, and the
    /// verbatim table (group index, length, values).
    pub fn payload_bytes(&self) -> u64 {
        let table: usize = self.exact.values().map(|v| 8 + 4 * v.len()).sum();
        (self.codes.len() + 4 * self.n_groups() + table) as u64
    }

    /// `out = x · W`, decoding one row of `W` at a time.
    pub fn vec_mat<T: Scalar>(&self, x: &[T], out: &mut [T], row: &mut Vec<T>) {
        row.resize(self.cols, T::zero());
        out.fill(T::zero());
        for (p, &xp) in x.iter().enumerate() {
            self.dequantize_into(p * self.cols, row);
            crate::model::tensor::axpy(xp, row, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minus_one_one_group() {
        let q = QuantMatrix::quantize_f32(&[-1.0, 1.0], 1, 2, 4, 64);
        let s = q.scale_of(0);
        assert!(s >= 2.0 / 15.0 && s < 2.0 / 15.0 * 1.001);
        let back = q.dequantize::<f64>();
        for (w, d) in [-1.0, 1.0].iter().zip(&back.data) {
            assert!((w - d).abs() <= q.scale_of(0) / 2.0);
        }
        assert!(q.exact.is_empty());
    }

    #[test]
    fn constant_group_is_exact() {
        let q = QuantMatrix::quantize_f32(&[0.37; 10], 2, 5, 4, 64);
        assert_eq!(q.dequantize::<f32>().data, vec![0.37f32; 10]);
        assert_eq!(q.exact.get(&0), Some(&vec![0.37f32]));
    }

    #[test]
    fn ragged_final_group() {
        let values: Vec<f32> = (0..70).map(|i| (i as f32 * 0.37).sin()).collect();
        let q = QuantMatrix::quantize_f32(&values, 7, 10, 4, 64);
        assert_eq!(q.n_groups(), 2);
        assert_eq!(q.codes.len(), 35);
        let back = q.dequantize::<f32>();
        for (i, (&w, &d)) in values.iter().zip(&back.data).enumerate() {
            assert!(f64::from((w - d).abs()) <= q.scale_of(i) / 2.0);
        }
    }

    #[test]
    fn grid_requantization_is_identity() {
        let values: Vec<f32> = (0..256).map(|i| ((i * 7919) % 113) as f32 / 50.0 - 1.0).collect();
        for bits in [4, 8] {
            let q = QuantMatrix::quantize_f32(&values, 16, 16, bits, 64);
            let codes: Vec<u8> = (0..values.len()).map(|i| q.code(i)).collect();
            assert_eq!(q.requantize_on_grid(&q.dequantize::<f32>().data), codes);
        }
    }
}
