//! Encoder networks mapping a received slot to a Gaussian posterior.
//!
//! Two fully connected layers: a 16-node tanh hidden layer, then one affine
//! output layer producing `[mean_raw; log_var]`. The mean head is
//! tanh-bounded and scaled by a configured amplitude; the log-variance head
//! is clamped before exponentiation so variances stay finite and positive
//! after every training step.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::gaussian::GaussianPosterior;
use crate::rng::Rng;
use crate::stacked::StackedRealVector;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 5.0;

/// Layout and hyperparameters of one encoder; the weights themselves live
/// in a flat parameter vector shared with the optimizer.
#[derive(Debug, Clone)]
pub struct EncoderNet {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    /// Scale of the tanh-bounded mean head.
    pub mean_amplitude: f64,
    /// Start of this encoder's parameters within the flat vector.
    pub offset: usize,
}

impl EncoderNet {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        mean_amplitude: f64,
        offset: usize,
    ) -> Self {
        EncoderNet {
            input_dim,
            hidden_dim,
            out_dim,
            mean_amplitude,
            offset,
        }
    }

    /// `(input+1)*hidden + (hidden+1)*(2*out)` parameters.
    pub fn param_count(&self) -> usize {
        (self.input_dim + 1) * self.hidden_dim + (self.hidden_dim + 1) * 2 * self.out_dim
    }

    fn w1_range(&self) -> (usize, usize) {
        (self.offset, self.hidden_dim * self.input_dim)
    }

    fn b1_range(&self) -> (usize, usize) {
        (self.offset + self.hidden_dim * self.input_dim, self.hidden_dim)
    }

    fn w2_range(&self) -> (usize, usize) {
        let start = self.offset + self.hidden_dim * (self.input_dim + 1);
        (start, 2 * self.out_dim * self.hidden_dim)
    }

    fn b2_range(&self) -> (usize, usize) {
        let start = self.offset + self.hidden_dim * (self.input_dim + 1) + 2 * self.out_dim * self.hidden_dim;
        (start, 2 * self.out_dim)
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init_params(&self, params: &mut [f64], rng: &mut Rng) {
        let (w1s, w1n) = self.w1_range();
        let a1 = (6.0 / (self.input_dim + self.hidden_dim) as f64).sqrt();
        for p in params[w1s..w1s + w1n].iter_mut() {
            *p = a1 * (2.0 * rng.uniform() - 1.0);
        }
        let (b1s, b1n) = self.b1_range();
        params[b1s..b1s + b1n].fill(0.0);
        let (w2s, w2n) = self.w2_range();
        let a2 = (6.0 / (self.hidden_dim + 2 * self.out_dim) as f64).sqrt();
        for p in params[w2s..w2s + w2n].iter_mut() {
            *p = a2 * (2.0 * rng.uniform() - 1.0);
        }
        let (b2s, b2n) = self.b2_range();
        params[b2s..b2s + b2n].fill(0.0);
    }

    /// Evaluate the encoder on one stacked-real input.
    pub fn forward(&self, params: &[f64], y: &StackedRealVector) -> Result<GaussianPosterior> {
        if y.dim() != self.input_dim {
            return Err(Error::shape(format!(
                "encoder input dim {} != expected {}",
                y.dim(),
                self.input_dim
            )));
        }
        let (w1s, _) = self.w1_range();
        let (b1s, _) = self.b1_range();
        let (w2s, _) = self.w2_range();
        let (b2s, _) = self.b2_range();
        let yv = y.values();

        let mut hidden = vec![0.0; self.hidden_dim];
        for r in 0..self.hidden_dim {
            let row = &params[w1s + r * self.input_dim..w1s + (r + 1) * self.input_dim];
            let mut acc = params[b1s + r];
            for (w, x) in row.iter().zip(yv) {
                acc += w * x;
            }
            hidden[r] = acc.tanh();
        }

        let mut mean = vec![0.0; self.out_dim];
        let mut var = vec![0.0; self.out_dim];
        for r in 0..2 * self.out_dim {
            let row = &params[w2s + r * self.hidden_dim..w2s + (r + 1) * self.hidden_dim];
            let mut acc = params[b2s + r];
            for (w, h) in row.iter().zip(&hidden) {
                acc += w * h;
            }
            if r < self.out_dim {
                mean[r] = self.mean_amplitude * acc.tanh();
            } else {
                var[r - self.out_dim] = acc.clamp(LOG_VAR_MIN, LOG_VAR_MAX).exp();
            }
        }
        if mean.iter().chain(var.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: "encoder_forward".to_string(),
                detail: "non-finite posterior parameter".to_string(),
            });
        }
        GaussianPosterior::new(StackedRealVector::new(mean)?, var)
    }

    /// Build the same computation inside a graph; returns `(mean, var)` nodes.
    pub fn forward_graph(&self, g: &mut Graph, params: NodeId, y: NodeId) -> (NodeId, NodeId) {
        let (w1s, w1n) = self.w1_range();
        let (b1s, b1n) = self.b1_range();
        let (w2s, w2n) = self.w2_range();
        let (b2s, b2n) = self.b2_range();
        let w1 = g.slice(params, w1s, w1n);
        let b1 = g.slice(params, b1s, b1n);
        let w2 = g.slice(params, w2s, w2n);
        let b2 = g.slice(params, b2s, b2n);
        let pre = g.affine(w1, b1, y, self.hidden_dim, self.input_dim);
        let hidden = g.tanh(pre);
        let raw = g.affine(w2, b2, hidden, 2 * self.out_dim, self.hidden_dim);
        let mean_raw = g.slice(raw, 0, self.out_dim);
        let mean_t = g.tanh(mean_raw);
        let mean = g.scale(mean_t, self.mean_amplitude);
        let logvar_raw = g.slice(raw, self.out_dim, self.out_dim);
        let logvar = g.clamp(logvar_raw, LOG_VAR_MIN, LOG_VAR_MAX);
        let var = g.exp(logvar);
        (mean, var)
    }
}
