//! Dense row-major matrices and the handful of kernels the decoder needs.
//!
//! Every matrix product here accumulates over the inner dimension in index
//! order, one output row at a time. The full-sequence forward pass, the
//! cached decoder and the training pass all go through these helpers, so
//! they produce bit-identical activations for the same inputs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

pub const RMS_EPS: f64 = 1e-5;
pub const ROPE_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn random_normal<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            })
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `out = x · W` for a row vector `x` of length `W.rows`.
#[inline]
pub fn vec_mat<T: Scalar>(x: &[T], w: &Matrix<T>, out: &mut [T]) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(out.len(), w.cols);
    out.fill(T::zero());
    for (p, &xp) in x.iter().enumerate() {
        axpy(xp, w.row(p), out);
    }
}

/// `y += a · x`
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Per-row `x · W` for `n` rows packed in `x`.
pub fn rows_mat<T: Scalar>(x: &[T], n: usize, w: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); n * w.cols];
    for i in 0..n {
        vec_mat(&x[i * w.rows..(i + 1) * w.rows], w, &mut out[i * w.cols..(i + 1) * w.cols]);
    }
    out
}

/// `dW += xᵀ · dy` for `n` packed rows.
pub fn accumulate_outer<T: Scalar>(x: &[T], dy: &[T], n: usize, dw: &mut Matrix<T>) {
    for i in 0..n {
        let xi = &x[i * dw.rows..(i + 1) * dw.rows];
        let gi = &dy[i * dw.cols..(i + 1) * dw.cols];
        for (p, &xp) in xi.iter().enumerate() {
            axpy(xp, gi, dw.row_mut(p));
        }
    }
}

/// `dx = dy · Wᵀ` for `n` packed rows.
pub fn rows_mat_t<T: Scalar>(dy: &[T], n: usize, w: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); n * w.rows];
    for i in 0..n {
        let gi = &dy[i * w.cols..(i + 1) * w.cols];
        let oi = &mut out[i * w.rows..(i + 1) * w.rows];
        for (p, o) in oi.iter_mut().enumerate() {
            *o = dot(gi, w.row(p));
        }
    }
    out
}

/// RMS normalisation with learned gain; returns the inverse RMS.
#[inline]
pub fn rms_norm<T: Scalar>(x: &[T], gain: &[T], out: &mut [T]) -> T {
    let mut ss = T::zero();
    for &v in x {
        ss += v * v;
    }
    let inv = T::one() / (ss / T::from_usize_lossy(x.len()) + T::lit(RMS_EPS)).sqrt();
    for ((o, &v), &g) in out.iter_mut().zip(x).zip(gain) {
        *o = v * inv * g;
    }
    inv
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_K) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let k = T::lit(GELU_K);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let half = T::lit(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * x * x)
}

/// Rotary position tables: `cos[pos][i]`, `sin[pos][i]` for frequency `i`.
#[derive(Debug, Clone)]
pub struct RotaryTable<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> RotaryTable<T> {
    pub fn new(head_dim: usize, max_positions: usize) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(max_positions * half);
        let mut sin = Vec::with_capacity(max_positions * half);
        for pos in 0..max_positions {
            for i in 0..half {
                let freq = ROPE_BASE.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = pos as f64 * freq;
                cos.push(T::lit(angle.cos()));
                sin.push(T::lit(angle.sin()));
            }
        }
        Self { half, cos, sin }
    }

    /// Rotates interleaved pairs `(2i, 2i+1)` of one head in place.
    #[inline]
    pub fn apply(&self, head: &mut [T], pos: usize) {
        let base = pos * self.half;
        for i in 0..self.half {
            let (c, s) = (self.cos[base + i], self.sin[base + i]);
            let (a, b) = (head[2 * i], head[2 * i + 1]);
            head[2 * i] = a * c - b * s;
            head[2 * i + 1] = a * s + b * c;
        }
    }

    /// Transpose (inverse) rotation, used to pull gradients back through
    /// [`RotaryTable::apply`].
    #[inline]
    pub fn apply_inverse(&self, head: &mut [T], pos: usize) {
        let base = pos * self.half;
        for i in 0..self.half {
            let (c, s) = (self.cos[base + i], self.sin[base + i]);
            let (a, b) = (head[2 * i], head[2 * i + 1]);
            head[2 * i] = a * c + b * s;
            head[2 * i + 1] = -a * s + b * c;
        }
    }
}

/// Causal attention for one query head over `keys`/`values` rows `0..=last`.
///
/// `keys` and `values` hold rows of width `stride`; the head occupies
/// columns `offset..offset + q.len()`. Writes normalised probabilities into
/// `probs[..=last]` and the weighted value sum into `out`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn attend<T: Scalar>(
    q: &[T],
    keys: &[T],
    values: &[T],
    stride: usize,
    offset: usize,
    last: usize,
    scale: T,
    probs: &mut [T],
    out: &mut [T],
) {
    let hd = q.len();
    let mut max = T::neg_infinity();
    for j in 0..=last {
        let k = &keys[j * stride + offset..j * stride + offset + hd];
        let s = dot(q, k) * scale;
        probs[j] = s;
        if s > max {
            max = s;
        }
    }
    let mut sum = T::zero();
    for p in probs[..=last].iter_mut() {
        *p = (*p - max).exp();
        sum += *p;
    }
    for p in probs[..=last].iter_mut() {
        *p /= sum;
    }
    out.fill(T::zero());
    for (j, &p) in probs[..=last].iter().enumerate() {
        axpy(p, &values[j * stride + offset..j * stride + offset + hd], out);
    }
}

/// Numerically stable softmax in place.
pub fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_difference_quotient() {
        for &x in &[-3.0f64, -1.0, -0.1, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn rotary_inverse_undoes_rotation() {
        let table = RotaryTable::<f64>::new(8, 16);
        let orig: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let mut v = orig.clone();
        table.apply(&mut v, 11);
        table.apply_inverse(&mut v, 11);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotary_preserves_relative_dot_products() {
        let table = RotaryTable::<f64>::new(4, 32);
        let q0 = [0.3, -0.2, 0.5, 0.1];
        let k0 = [0.1, 0.4, -0.3, 0.2];
        let score = |pq: usize, pk: usize| {
            let (mut q, mut k) = (q0, k0);
            table.apply(&mut q, pq);
            table.apply(&mut k, pk);
            dot(&q, &k)
        };
        assert!((score(5, 2) - score(13, 10)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1.0f32, 2.0, -3.0, 0.5];
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = rand::rng();
        let w = Matrix::<f64>::random_normal(3, 5, 1.0, &mut rng);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let y = rows_mat(&x, 2, &w);
        assert_eq!(y.len(), 10);
        let dy: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let dx = rows_mat_t(&dy, 2, &w);
        // <dy, xW> = <dy Wᵀ, x>
        assert!((dot(&dy, &y) - dot(&dx, &x)).abs() < 1e-10);
        let mut dw = Matrix::zeros(3, 5);
        accumulate_outer(&x, &dy, 2, &mut dw);
        let trace: f64 = w.data.iter().zip(&dw.data).map(|(a, b)| a * b).sum();
        assert!((trace - dot(&dy, &y)).abs() < 1e-10);
    }
}
