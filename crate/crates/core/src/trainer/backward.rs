//! Masked next-token cross-entropy and its exact gradient.

use crate::error::{Error, Result};
use crate::model::tensor::{
    accumulate_outer, attend, axpy, dot, gelu, gelu_grad, rms_norm, rows_mat, rows_mat_t,
    RotaryTable,
};
use crate::model::{ModelConfig, TrainingExample, TransformerModel};
use crate::scalar::Scalar;

struct LayerTape<T> {
    x_in: Vec<T>,
    inv1: Vec<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `probs[h][t * n + j]` for `j <= t`.
    probs: Vec<Vec<T>>,
    o: Vec<T>,
    x_mid: Vec<T>,
    inv2: Vec<T>,
    b: Vec<T>,
    h_pre: Vec<T>,
    g: Vec<T>,
}

fn norm_rows<T: Scalar>(x: &[T], n: usize, gain: &[T]) -> (Vec<T>, Vec<T>) {
    let d = gain.len();
    let mut out = vec![T::zero(); n * d];
    let mut inv = Vec::with_capacity(n);
    for t in 0..n {
        inv.push(rms_norm(&x[t * d..(t + 1) * d], gain, &mut out[t * d..(t + 1) * d]));
    }
    (out, inv)
}

/// Adds the RMSNorm input gradient to `dx` and the gain gradient to `dgain`.
fn norm_rows_backward<T: Scalar>(
    x: &[T],
    inv: &[T],
    gain: &[T],
    dy: &[T],
    dx: &mut [T],
    dgain: &mut [T],
) {
    let d = gain.len();
    let dn = T::from_usize_lossy(d);
    for (t, &r) in inv.iter().enumerate() {
        let xs = &x[t * d..(t + 1) * d];
        let gs = &dy[t * d..(t + 1) * d];
        let mut proj = T::zero();
        for i in 0..d {
            dgain[i] += gs[i] * xs[i] * r;
            proj += gs[i] * gain[i] * xs[i];
        }
        let coeff = r * r * r * proj / dn;
        let dxs = &mut dx[t * d..(t + 1) * d];
        for i in 0..d {
            dxs[i] += r * gain[i] * gs[i] - coeff * xs[i];
        }
    }
}

/// Forward and backward over one sequence; accumulates gradients scaled by
/// `weight` (1 / total label count in the batch).
fn sequence_backward<T: Scalar>(
    model: &TransformerModel<T>,
    rope: &RotaryTable<T>,
    example: &TrainingExample,
    weight: T,
    grads: &mut TransformerModel<T>,
) -> T {
    let cfg: ModelConfig = model.config;
    let (d, hd, nh) = (cfg.d_model, cfg.head_dim(), cfg.n_heads);
    let input = &example.tokens[..example.tokens.len() - 1];
    let n = input.len();
    let scale = T::one() / T::from_usize_lossy(hd).sqrt();

    let mut x = vec![T::zero(); n * d];
    for (t, &tok) in input.iter().enumerate() {
        x[t * d..(t + 1) * d].copy_from_slice(model.embedding.row(tok as usize));
    }

    let mut tapes: Vec<LayerTape<T>> = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let x_in = x.clone();
        let (a, inv1) = norm_rows(&x, n, &layer.attn_norm);
        let mut q = rows_mat(&a, n, &layer.wq);
        let mut k = rows_mat(&a, n, &layer.wk);
        let v = rows_mat(&a, n, &layer.wv);
        for t in 0..n {
            for h in 0..nh {
                let r = t * d + h * hd..t * d + (h + 1) * hd;
                rope.apply(&mut q[r.clone()], t);
                rope.apply(&mut k[r], t);
            }
        }
        let mut probs = vec![vec![T::zero(); n * n]; nh];
        let mut o = vec![T::zero(); n * d];
        for t in 0..n {
            for h in 0..nh {
                let qh = &q[t * d + h * hd..t * d + (h + 1) * hd];
                attend(
                    qh,
                    &k,
                    &v,
                    d,
                    h * hd,
                    t,
                    scale,
                    &mut probs[h][t * n..(t + 1) * n],
                    &mut o[t * d + h * hd..t * d + (h + 1) * hd],
                );
            }
        }
        let attn_out = rows_mat(&o, n, &layer.wo);
        axpy(T::one(), &attn_out, &mut x);
        let x_mid = x.clone();
        let (b, inv2) = norm_rows(&x, n, &layer.mlp_norm);
        let h_pre = rows_mat(&b, n, &layer.w_up);
        let g: Vec<T> = h_pre.iter().map(|&u| gelu(u)).collect();
        let mlp_out = rows_mat(&g, n, &layer.w_down);
        axpy(T::one(), &mlp_out, &mut x);
        tapes.push(LayerTape {
            x_in,
            inv1,
            a,
            q,
            k,
            v,
            probs,
            o,
            x_mid,
            inv2,
            b,
            h_pre,
            g,
        });
    }

    let (f, invf) = norm_rows(&x, n, &model.final_norm);

    // Head and loss on label positions only.
    let vocab = cfg.vocab_size;
    let first = example.first_target - 1;
    let mut df = vec![T::zero(); n * d];
    let mut loss_sum = T::zero();
    let mut logits = vec![T::zero(); vocab];
    for t in first..n {
        let label = example.tokens[t + 1] as usize;
        let ft = &f[t * d..(t + 1) * d];
        for (vi, l) in logits.iter_mut().enumerate() {
            *l = dot(ft, model.embedding.row(vi));
        }
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        let p_label = logits[label] / sum;
        loss_sum += -p_label.ln();
        let dft = &mut df[t * d..(t + 1) * d];
        for (vi, &e) in logits.iter().enumerate() {
            let mut dl = e / sum;
            if vi == label {
                dl -= T::one();
            }
            let dl = dl * weight;
            axpy(dl, model.embedding.row(vi), dft);
            axpy(dl, ft, grads.embedding.row_mut(vi));
        }
    }

    let mut dx = vec![T::zero(); n * d];
    norm_rows_backward(&x, &invf, &model.final_norm, &df, &mut dx, &mut grads.final_norm);

    for (li, layer) in model.layers.iter().enumerate().rev() {
        let tape = &tapes[li];
        let gl = &mut grads.layers[li];

        // MLP branch.
        let dg = rows_mat_t(&dx, n, &layer.w_down);
        accumulate_outer(&tape.g, &dx, n, &mut gl.w_down);
        let dh: Vec<T> = dg
            .iter()
            .zip(&tape.h_pre)
            .map(|(&a, &u)| a * gelu_grad(u))
            .collect();
        accumulate_outer(&tape.b, &dh, n, &mut gl.w_up);
        let db = rows_mat_t(&dh, n, &layer.w_up);
        norm_rows_backward(&tape.x_mid, &tape.inv2, &layer.mlp_norm, &db, &mut dx, &mut gl.mlp_norm);

        // Attention branch; dx now holds d(loss)/d(x_mid).
        let d_o = rows_mat_t(&dx, n, &layer.wo);
        accumulate_outer(&tape.o, &dx, n, &mut gl.wo);
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut dp = vec![T::zero(); n];
        for h in 0..nh {
            let off = h * hd;
            let probs = &tape.probs[h];
            for t in 0..n {
                let dot_t = &d_o[t * d + off..t * d + off + hd];
                let prow = &probs[t * n..t * n + t + 1];
                let mut weighted = T::zero();
                for j in 0..=t {
                    let vj = &tape.v[j * d + off..j * d + off + hd];
                    dp[j] = dot(dot_t, vj);
                    weighted += prow[j] * dp[j];
                    axpy(prow[j], dot_t, &mut dv[j * d + off..j * d + off + hd]);
                }
                let qt = &tape.q[t * d + off..t * d + off + hd];
                for j in 0..=t {
                    let ds = prow[j] * (dp[j] - weighted) * scale;
                    let kj = &tape.k[j * d + off..j * d + off + hd];
                    axpy(ds, kj, &mut dq[t * d + off..t * d + off + hd]);
                    axpy(ds, qt, &mut dk[j * d + off..j * d + off + hd]);
                }
            }
        }
        for t in 0..n {
            for h in 0..nh {
                let r = t * d + h * hd..t * d + (h + 1) * hd;
                rope.apply_inverse(&mut dq[r.clone()], t);
                rope.apply_inverse(&mut dk[r], t);
            }
        }
        accumulate_outer(&tape.a, &dq, n, &mut gl.wq);
        accumulate_outer(&tape.a, &dk, n, &mut gl.wk);
        accumulate_outer(&tape.a, &dv, n, &mut gl.wv);
        let mut da = rows_mat_t(&dq, n, &layer.wq);
        axpy(T::one(), &rows_mat_t(&dk, n, &layer.wk), &mut da);
        axpy(T::one(), &rows_mat_t(&dv, n, &layer.wv), &mut da);
        norm_rows_backward(&tape.x_in, &tape.inv1, &layer.attn_norm, &da, &mut dx, &mut gl.attn_norm);
    }

    for (t, &tok) in input.iter().enumerate() {
        axpy(T::one(), &dx[t * d..(t + 1) * d], grads.embedding.row_mut(tok as usize));
    }
    loss_sum
}

fn label_count(example: &TrainingExample) -> usize {
    example.tokens.len().saturating_sub(example.first_target)
}

/// Mean cross-entropy over the label positions of `batch` and the gradient
/// of every parameter.
pub fn loss_and_gradients<T: Scalar>(
    model: &TransformerModel<T>,
    batch: &[TrainingExample],
) -> Result<(T, TransformerModel<T>)> {
    let cfg = model.config;
    let mut labels = 0usize;
    for ex in batch {
        if ex.first_target == 0 || ex.first_target > ex.tokens.len() {
            return Err(Error::Input("first_target outside the sequence".into()));
        }
        let (last, inputs) = ex.tokens.split_last().expect("non-empty");
        crate::model::check_token_ids(&cfg, inputs)?;
        if *last as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: *last,
                vocab: cfg.vocab_size,
            });
        }
        labels += label_count(ex);
    }
    if labels == 0 {
        return Err(Error::NoTargetTokens);
    }
    let rope = RotaryTable::new(cfg.head_dim(), cfg.max_seq_len);
    let weight = T::one() / T::from_usize_lossy(labels);
    let mut grads = model.zeros_like();
    let mut loss = T::zero();
    for ex in batch.iter().filter(|ex| label_count(ex) > 0) {
        loss += sequence_backward(model, &rope, ex, weight, &mut grads);
    }
    Ok((loss * weight, grads))
}

/// Loss only; same value as [`loss_and_gradients`].
pub fn batch_loss<T: Scalar>(model: &TransformerModel<T>, batch: &[TrainingExample]) -> Result<T> {
    loss_and_gradients(model, batch).map(|(l, _)| l)
}
