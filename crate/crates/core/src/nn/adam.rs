use super::{Grads, Model};
use crate::data::PAD;
use crate::error::{Error, Result};

/// Adam optimizer state: first and second moments for every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    embedding: Moments,
    layers: Vec<(Moments, Moments)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn update(&mut self, params: &mut [f64], grad: &[f64], lr_t: f64, b1: f64, b2: f64, eps: f64) {
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
        }
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
        }
        let (m, v) = (&self.m, &self.v);
        for i in 0..params.len() {
            params[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
        }
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            embedding: Moments::default(),
            layers: Vec::new(),
        }
    }

    /// One update. A non-finite gradient leaves model and state untouched and is reported.
    pub fn step(&mut self, model: &mut Model, grads: &Grads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient; optimizer step skipped".into()));
        }
        if grads.layers.len() != model.layers.len() {
            return Err(Error::Shape("gradient does not match the model".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        // Bias correction folded into the step size.
        let lr_t = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);

        if model.embedding.trainable {
            let d = model.embedding.dim();
            let mut dense = vec![0.0; model.embedding.weights.len()];
            for (&id, row) in &grads.embedding {
                if id != PAD && id < model.embedding.rows() {
                    dense[id * d..(id + 1) * d].copy_from_slice(row);
                }
            }
            self.embedding
                .update(&mut model.embedding.weights, &dense, lr_t, b1, b2, eps);
            model.embedding.row_mut(PAD).fill(0.0);
        }

        if self.layers.len() != model.layers.len() {
            self.layers = vec![Default::default(); model.layers.len()];
        }
        for ((layer, g), (mw, mb)) in model.layers.iter_mut().zip(&grads.layers).zip(&mut self.layers) {
            if let Some((w, b)) = layer.parameters_mut() {
                mw.update(w, &g.weight, lr_t, b1, b2, eps);
                mb.update(b, &g.bias, lr_t, b1, b2, eps);
            }
        }
        Ok(())
    }
}
