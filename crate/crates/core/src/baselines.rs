//! Pilot-aided channel estimators used as benchmarks.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{cmatmul, ComplexMatrix};
use crate::rng::Rng;

/// Known pilot block: K rows (one per user) over `T_p` slots, mutually
/// orthogonal with per-symbol power `rho2`, so `P P^H = T_p rho2 I_K`.
#[derive(Debug, Clone)]
pub struct PilotMatrix {
    p: ComplexMatrix,
    rho2: f64,
}

impl PilotMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.p
    }

    pub fn num_users(&self) -> usize {
        self.p.rows()
    }

    pub fn len(&self) -> usize {
        self.p.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.p.cols() == 0
    }

    pub fn rho2(&self) -> f64 {
        self.rho2
    }
}

/// Rows of a scaled DFT matrix: exact orthogonality for any `T_p >= K`.
pub fn make_orthogonal_pilots(k: usize, t_p: usize, rho2: f64) -> Result<PilotMatrix> {
    if k == 0 {
        return Err(Error::config("pilots: k must be >= 1"));
    }
    if t_p < k {
        return Err(Error::config(format!("pilots: t_p = {t_p} < k = {k}")));
    }
    if !(rho2 > 0.0) {
        return Err(Error::config("pilots: rho2 must be positive"));
    }
    let rho = rho2.sqrt();
    let mut data = Vec::with_capacity(k * t_p);
    for row in 0..k {
        for t in 0..t_p {
            let phase = -2.0 * std::f64::consts::PI * (row * t) as f64 / t_p as f64;
            data.push(Complex64::from_polar(rho, phase));
        }
    }
    Ok(PilotMatrix {
        p: ComplexMatrix::new(k, t_p, data)?,
        rho2,
    })
}

/// Received pilot block `Y = H P + W` with noise variance `sigma2` per
/// complex dimension.
pub fn transmit_pilots(
    h: &ComplexMatrix,
    pilots: &PilotMatrix,
    sigma2: f64,
    rng: &mut Rng,
) -> Result<ComplexMatrix> {
    if h.cols() != pilots.num_users() {
        return Err(Error::shape("transmit_pilots: channel/pilot user mismatch"));
    }
    let mut y = cmatmul(h, pilots.matrix())?;
    if sigma2 > 0.0 {
        for r in 0..y.rows() {
            for c in 0..y.cols() {
                let v = y.get(r, c) + rng.complex_normal(sigma2);
                y.set(r, c, v);
            }
        }
    }
    Ok(y)
}

/// Least-squares estimate `H_hat = Y P^H (P P^H)^{-1}`, the minimizer of
/// `||Y - H P||_F^2`.
pub fn ls_estimate(y: &ComplexMatrix, pilots: &PilotMatrix) -> Result<ComplexMatrix> {
    estimate_with_diagonal_load(y, pilots, 0.0)
}

/// Linear MMSE estimate under the i.i.d. `CN(0,1)` channel prior:
/// `H_hat = Y P^H (P P^H + sigma2 I_K)^{-1}`.
pub fn mmse_estimate(y: &ComplexMatrix, pilots: &PilotMatrix, sigma2: f64) -> Result<ComplexMatrix> {
    if sigma2 < 0.0 {
        return Err(Error::domain("mmse_estimate: sigma2 must be >= 0"));
    }
    estimate_with_diagonal_load(y, pilots, sigma2)
}

fn estimate_with_diagonal_load(
    y: &ComplexMatrix,
    pilots: &PilotMatrix,
    load: f64,
) -> Result<ComplexMatrix> {
    let p = pilots.matrix();
    if y.cols() != p.cols() {
        return Err(Error::shape(format!(
            "estimate: observations have {} slots, pilots {}",
            y.cols(),
            p.cols()
        )));
    }
    let ph = p.hermitian();
    let mut gram = cmatmul(p, &ph)?;
    for i in 0..gram.rows() {
        let v = gram.get(i, i) + Complex64::new(load, 0.0);
        gram.set(i, i, v);
    }
    let yph = cmatmul(y, &ph)?;
    // H_hat = yph * gram^{-1}  <=>  gram^H Z = yph^H, H_hat = Z^H
    let z = gram.hermitian().solve(&yph.hermitian())?;
    Ok(z.hermitian())
}
