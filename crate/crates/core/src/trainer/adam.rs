use crate::model::TransformerModel;
use crate::scalar::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &TransformerModel<T>) -> Self {
        let shapes: Vec<Vec<T>> = model
            .tensors()
            .iter()
            .map(|(_, _, t)| vec![T::zero(); t.len()])
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.clone(),
            v: shapes,
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, model: &mut TransformerModel<T>, grads: &TransformerModel<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (lr, eps) = (T::lit(lr), T::lit(self.eps));
        let grads = grads.tensors();
        for (i, (_, w)) in model.tensors_mut().into_iter().enumerate() {
            let g = grads[i].2;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..w.len() {
                m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                let update = (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                w[j] -= lr * update;
            }
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut TransformerModel<T>, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(_, _, t)| t.iter())
        .map(|&g| g.to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};

    fn tiny() -> TransformerModel<f64> {
        let cfg = ModelConfig {
            vocab_size: 10,
            d_model: 4,
            n_heads: 1,
            d_ff: 8,
            n_layers: 1,
            max_seq_len: 8,
        };
        init_model(cfg, 3).unwrap()
    }

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let mut model = tiny();
        let before = model.clone();
        let mut grads = model.zeros_like();
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g = 0.5);
        }
        Adam::new(&model).step(&mut model, &grads, 0.01);
        for ((_, _, a), (_, _, b)) in before.tensors().iter().zip(model.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(((x - y) - 0.01).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let model = tiny();
        let mut grads = model.zeros_like();
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g = 3.0);
        }
        let before = clip_global_norm(&mut grads, 1.0);
        assert!(before > 1.0);
        let after = clip_global_norm(&mut grads, 1.0);
        assert!((after - 1.0).abs() < 1e-9);
    }
}
