//! Diagonal Gaussians over stacked-real vectors.
//!
//! A complex `CN(mu, s^2 I)` maps to per-real-dimension variance `s^2 / 2`;
//! all Gaussian algebra in the crate lives in that stacked-real convention.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stacked::StackedRealVector;

/// Gaussian with diagonal covariance over a stacked-real vector.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mean: StackedRealVector,
    var: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: StackedRealVector, var: Vec<f64>) -> Result<Self> {
        if var.len() != mean.dim() {
            return Err(Error::shape(format!(
                "posterior mean dim {} != var dim {}",
                mean.dim(),
                var.len()
            )));
        }
        if var.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("posterior variances must be finite and > 0"));
        }
        Ok(GaussianPosterior { mean, var })
    }

    pub fn mean(&self) -> &StackedRealVector {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn dim(&self) -> usize {
        self.var.len()
    }
}

/// i.i.d. standard normal vector of the given (even, positive) dimension.
///
/// In stacked terms the corresponding complex vector is `CN(0, 2I)`; callers
/// wanting unit complex variance scale by `sqrt(1/2)` per real dimension.
pub fn gaussian_sample(dim: usize, rng: &mut Rng) -> Result<StackedRealVector> {
    if dim == 0 {
        return Err(Error::domain("gaussian_sample: dim must be > 0"));
    }
    if dim % 2 != 0 {
        return Err(Error::domain("gaussian_sample: dim must be even"));
    }
    let mut values = vec![0.0; dim];
    rng.fill_standard_normal(&mut values);
    StackedRealVector::new(values)
}

/// Exact KL divergence from `post` to a zero-mean diagonal Gaussian with the
/// given per-dimension prior variance:
///
/// `sum_d 1/2 [ s_d/p_d + m_d^2/p_d - 1 - ln(s_d/p_d) ]`.
///
/// Non-negative, zero iff the posterior equals the prior.
pub fn gaussian_kl_diag(post: &GaussianPosterior, prior_var: &[f64]) -> Result<f64> {
    if prior_var.len() != post.dim() {
        return Err(Error::shape(format!(
            "prior var dim {} != posterior dim {}",
            prior_var.len(),
            post.dim()
        )));
    }
    if prior_var.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::domain("prior variances must be finite and > 0"));
    }
    let mut kl = 0.0;
    for ((&s, &p), &m) in post.var().iter().zip(prior_var).zip(post.mean().values()) {
        let ratio = s / p;
        kl += 0.5 * (ratio + m * m / p - 1.0 - ratio.ln());
    }
    Ok(kl)
}

/// Same KL against a uniform prior variance.
pub fn gaussian_kl_diag_uniform(post: &GaussianPosterior, prior_var: f64) -> Result<f64> {
    gaussian_kl_diag(post, &vec![prior_var; post.dim()])
}
