//! Channel-error metrics, including blind-ambiguity alignment.

use crate::error::{Error, Result};
use crate::linalg::{dot_hermitian, norm_sq, ComplexMatrix};

/// Remove the per-column complex-scalar ambiguity of a blind estimate:
/// each column is scaled by the least-squares scalar
/// `alpha_k = <h_hat_k, h_k> / <h_hat_k, h_hat_k>` minimizing
/// `|| alpha_k h_hat_k - h_k ||^2`. Zero-norm columns pass through.
pub fn align_channel(h_hat: &ComplexMatrix, h_true: &ComplexMatrix) -> Result<ComplexMatrix> {
    if h_hat.rows() != h_true.rows() || h_hat.cols() != h_true.cols() {
        return Err(Error::domain(format!(
            "align_channel: {}x{} vs {}x{}",
            h_hat.rows(),
            h_hat.cols(),
            h_true.rows(),
            h_true.cols()
        )));
    }
    let mut out = h_hat.clone();
    for c in 0..h_hat.cols() {
        let est = h_hat.column(c);
        let truth = h_true.column(c);
        let denom = norm_sq(&est);
        if denom == 0.0 {
            continue;
        }
        let alpha = dot_hermitian(&est, &truth) / denom;
        for r in 0..h_hat.rows() {
            out.set(r, c, h_hat.get(r, c) * alpha);
        }
    }
    Ok(out)
}

/// Resolve only the ambiguities a blind receiver could fix on its own:
/// each column is scaled by `r * w` where `r > 0` is the least-squares
/// magnitude and `w` one of the `symmetry` roots of unity (the
/// constellation's rotational symmetry group). Unlike [`align_channel`],
/// the continuous phase error of the estimate stays in place.
pub fn align_channel_rotation(
    h_hat: &ComplexMatrix,
    h_true: &ComplexMatrix,
    symmetry: usize,
) -> Result<ComplexMatrix> {
    if h_hat.rows() != h_true.rows() || h_hat.cols() != h_true.cols() {
        return Err(Error::domain(format!(
            "align_channel_rotation: {}x{} vs {}x{}",
            h_hat.rows(),
            h_hat.cols(),
            h_true.rows(),
            h_true.cols()
        )));
    }
    if symmetry == 0 {
        return Err(Error::domain("align_channel_rotation: symmetry must be >= 1"));
    }
    let mut out = h_hat.clone();
    let sector = 2.0 * std::f64::consts::PI / symmetry as f64;
    for c in 0..h_hat.cols() {
        let est = h_hat.column(c);
        let truth = h_true.column(c);
        let denom = norm_sq(&est);
        if denom == 0.0 {
            continue;
        }
        let alpha = dot_hermitian(&est, &truth) / denom;
        let snapped = (alpha.arg() / sector).round() * sector;
        let scale = num_complex::Complex64::from_polar(alpha.norm(), snapped);
        for r in 0..h_hat.rows() {
            out.set(r, c, h_hat.get(r, c) * scale);
        }
    }
    Ok(out)
}

/// Per-entry mean squared error `||H_hat - H||_F^2 / (N K)`.
pub fn mse(h_hat: &ComplexMatrix, h_true: &ComplexMatrix) -> Result<f64> {
    if h_hat.rows() != h_true.rows() || h_hat.cols() != h_true.cols() {
        return Err(Error::domain(format!(
            "mse: {}x{} vs {}x{}",
            h_hat.rows(),
            h_hat.cols(),
            h_true.rows(),
            h_true.cols()
        )));
    }
    let diff = h_hat.sub(h_true)?;
    Ok(diff.frobenius_norm_sq() / (h_hat.rows() * h_hat.cols()) as f64)
}
