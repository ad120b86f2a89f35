//! Maximum-likelihood detection and symbol-error scoring.

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Hard guard on the exhaustive search size.
const MAX_HYPOTHESES: u64 = 1 << 20;

/// Exhaustive maximum-likelihood detection: minimizes `||y - H x||^2` over
/// every combination of constellation points for the active users. Returns
/// one symbol index per active user, in user order; ties break toward the
/// lexicographically smallest index tuple.
pub fn mld_detect(
    y: &[Complex64],
    h: &ComplexMatrix,
    constellation: &Constellation,
    active: &[bool],
) -> Result<Vec<usize>> {
    if h.rows() != y.len() || h.cols() != active.len() {
        return Err(Error::shape(format!(
            "mld_detect: channel {}x{}, y has {}, mask has {}",
            h.rows(),
            h.cols(),
            y.len(),
            active.len()
        )));
    }
    let users: Vec<usize> = (0..active.len()).filter(|&u| active[u]).collect();
    if users.is_empty() {
        return Ok(Vec::new());
    }
    let m = constellation.size() as u64;
    let mut total: u64 = 1;
    for _ in &users {
        total = total.saturating_mul(m);
        if total > MAX_HYPOTHESES {
            return Err(Error::Capacity(format!(
                "mld_detect: {}^{} hypotheses exceed {MAX_HYPOTHESES}",
                m,
                users.len()
            )));
        }
    }

    let n = y.len();
    // Pre-scale every channel column by every constellation point.
    let scaled: Vec<Vec<Vec<Complex64>>> = users
        .iter()
        .map(|&u| {
            let col = h.column(u);
            constellation
                .points()
                .iter()
                .map(|&s| col.iter().map(|&hv| hv * s).collect())
                .collect()
        })
        .collect();

    let a = users.len();
    let mut indices = vec![0usize; a];
    let mut best_indices = vec![0usize; a];
    let mut best_metric = f64::INFINITY;
    let mut sum = vec![Complex64::new(0.0, 0.0); n];
    loop {
        sum.fill(Complex64::new(0.0, 0.0));
        for (ui, &idx) in indices.iter().enumerate() {
            for (acc, v) in sum.iter_mut().zip(&scaled[ui][idx]) {
                *acc += v;
            }
        }
        let metric: f64 = y.iter().zip(&sum).map(|(a, b)| (a - b).norm_sqr()).sum();
        if metric < best_metric {
            best_metric = metric;
            best_indices.copy_from_slice(&indices);
        }
        // Lexicographic odometer: the first user is the most significant
        // digit, so strict improvement keeps the smallest tuple on ties.
        let mut pos = a;
        loop {
            if pos == 0 {
                return Ok(best_indices);
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < constellation.size() {
                break;
            }
            indices[pos] = 0;
        }
        let _ = pos;
    }
}

/// Fraction of positions where the decisions differ from the truth.
pub fn ser(decided: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64> {
    if decided.len() != truth.len()
        || decided.iter().zip(truth).any(|(d, t)| d.len() != t.len())
    {
        return Err(Error::domain("ser: decision/truth shapes differ"));
    }
    let mut total = 0usize;
    let mut wrong = 0usize;
    for (d_slot, t_slot) in decided.iter().zip(truth) {
        for (d, t) in d_slot.iter().zip(t_slot) {
            total += 1;
            if d != t {
                wrong += 1;
            }
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(wrong as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, noise_var_for_snr_db};
    use crate::constellation::{make_constellation, ConstellationName};
    use crate::rng::Rng;

    fn qpsk() -> Constellation {
        make_constellation(ConstellationName::Qpsk, 1.0).unwrap()
    }

    #[test]
    fn noiseless_detection_is_exact() {
        let mut rng = Rng::new(61);
        let c = qpsk();
        for _ in 0..20 {
            let h = draw_channel(4, 4, 1.0, 0.0, &mut rng).unwrap().h;
            let truth: Vec<usize> = (0..4).map(|_| rng.below(4)).collect();
            let x: Vec<Complex64> = truth.iter().map(|&i| c.point(i)).collect();
            let y = h.matvec(&x).unwrap();
            let decided = mld_detect(&y, &h, &c, &[true; 4]).unwrap();
            assert_eq!(decided, truth);
        }
    }

    #[test]
    fn single_user_reduces_to_nearest_scaled_point() {
        let mut rng = Rng::new(62);
        let c = qpsk();
        for _ in 0..50 {
            let h = draw_channel(3, 1, 1.0, 0.0, &mut rng).unwrap().h;
            let y: Vec<Complex64> = (0..3).map(|_| rng.complex_normal(2.0)).collect();
            let decided = mld_detect(&y, &h, &c, &[true]).unwrap();
            // Brute force over the alphabet with an independent metric loop.
            let col = h.column(0);
            let mut best = (f64::INFINITY, 0usize);
            for (i, &s) in c.points().iter().enumerate() {
                let mut metric = 0.0;
                for (yv, hv) in y.iter().zip(&col) {
                    metric += (yv - hv * s).norm_sqr();
                }
                if metric < best.0 {
                    best = (metric, i);
                }
            }
            assert_eq!(decided[0], best.1);
        }
    }

    /// Independently coded exhaustive enumerator (recursive, fresh metric
    /// computation) used to cross-check the odometer implementation.
    fn mld_oracle(
        y: &[Complex64],
        h: &ComplexMatrix,
        c: &Constellation,
        active: &[bool],
    ) -> Vec<usize> {
        let users: Vec<usize> = (0..active.len()).filter(|&u| active[u]).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut current = vec![0usize; users.len()];
        fn recurse(
            depth: usize,
            users: &[usize],
            current: &mut Vec<usize>,
            y: &[Complex64],
            h: &ComplexMatrix,
            c: &Constellation,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if depth == users.len() {
                let mut metric = 0.0;
                for r in 0..y.len() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (ui, &u) in users.iter().enumerate() {
                        acc += h.get(r, u) * c.point(current[ui]);
                    }
                    metric += (y[r] - acc).norm_sqr();
                }
                let better = match best {
                    None => true,
                    Some((b, _)) => metric < *b,
                };
                if better {
                    *best = Some((metric, current.clone()));
                }
                return;
            }
            for i in 0..c.size() {
                current[depth] = i;
                recurse(depth + 1, users, current, y, h, c, best);
            }
        }
        recurse(0, &users, &mut current, y, h, c, &mut best);
        best.unwrap().1
    }

    #[test]
    fn matches_independent_enumerator_on_4x4_qpsk() {
        let mut rng = Rng::new(63);
        let c = qpsk();
        let sigma2 = noise_var_for_snr_db(1.0, 8.0);
        for _ in 0..25 {
            let h = draw_channel(4, 4, 1.0, 0.0, &mut rng).unwrap().h;
            let truth: Vec<usize> = (0..4).map(|_| rng.below(4)).collect();
            let x: Vec<Complex64> = truth.iter().map(|&i| c.point(i)).collect();
            let clean = h.matvec(&x).unwrap();
            let y: Vec<Complex64> = clean
                .iter()
                .map(|v| v + rng.complex_normal(sigma2))
                .collect();
            let fast = mld_detect(&y, &h, &c, &[true; 4]).unwrap();
            let slow = mld_oracle(&y, &h, &c, &[true; 4]);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn invariant_under_joint_positive_scaling() {
        let mut rng = Rng::new(64);
        let c = qpsk();
        let h = draw_channel(3, 2, 1.0, 0.0, &mut rng).unwrap().h;
        let y: Vec<Complex64> = (0..3).map(|_| rng.complex_normal(1.5)).collect();
        let base = mld_detect(&y, &h, &c, &[true, true]).unwrap();
        let scale = 3.7;
        let ys: Vec<Complex64> = y.iter().map(|v| v * scale).collect();
        let hs = h.scale(Complex64::new(scale, 0.0));
        let scaled = mld_detect(&ys, &hs, &c, &[true, true]).unwrap();
        assert_eq!(base, scaled);
    }

    #[test]
    fn respects_active_mask() {
        let mut rng = Rng::new(65);
        let c = qpsk();
        let h = draw_channel(4, 3, 1.0, 0.0, &mut rng).unwrap().h;
        let truth = 2usize;
        let y: Vec<Complex64> = h.column(1).iter().map(|&v| v * c.point(truth)).collect();
        let decided = mld_detect(&y, &h, &c, &[false, true, false]).unwrap();
        assert_eq!(decided, vec![truth]);
    }

    #[test]
    fn capacity_guard_trips() {
        let c = make_constellation(ConstellationName::Qam16, 1.0).unwrap();
        let h = ComplexMatrix::zeros(2, 6).add(&ComplexMatrix::zeros(2, 6)).unwrap();
        let y = vec![Complex64::new(0.0, 0.0); 2];
        // 16^6 = 2^24 > 2^20
        let err = mld_detect(&y, &h, &c, &[true; 6]).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn ser_counts_fractions() {
        let a = vec![vec![0, 1, 2], vec![3, 3, 3]];
        assert_eq!(ser(&a, &a).unwrap(), 0.0);
        let all_wrong = vec![vec![1, 2, 3], vec![0, 0, 0]];
        assert_eq!(ser(&all_wrong, &a).unwrap(), 1.0);
        let half = vec![vec![0, 1, 3], vec![3, 0, 3]];
        assert_eq!(ser(&half, &a).unwrap(), 1.0 / 3.0);
        let ragged = vec![vec![0, 1]];
        assert!(ser(&ragged, &a).is_err());
    }

    #[test]
    fn perfect_csi_never_worse_than_estimated() {
        let mut rng = Rng::new(66);
        let c = qpsk();
        let sigma2 = noise_var_for_snr_db(1.0, 6.0);
        let mut perfect_errors = 0usize;
        let mut estimated_errors = 0usize;
        let trials = 400;
        for _ in 0..trials {
            let h = draw_channel(4, 2, 1.0, 0.0, &mut rng).unwrap().h;
            // A crude noisy CSI estimate.
            let noise = draw_channel(4, 2, 1.0, 0.0, &mut rng).unwrap().h;
            let h_est = h.add(&noise.scale(Complex64::new(0.45, 0.0))).unwrap();
            let truth: Vec<usize> = (0..2).map(|_| rng.below(4)).collect();
            let x: Vec<Complex64> = truth.iter().map(|&i| c.point(i)).collect();
            let clean = h.matvec(&x).unwrap();
            let y: Vec<Complex64> = clean
                .iter()
                .map(|v| v + rng.complex_normal(sigma2))
                .collect();
            let with_perfect = mld_detect(&y, &h, &c, &[true, true]).unwrap();
            let with_estimate = mld_detect(&y, &h_est, &c, &[true, true]).unwrap();
            perfect_errors += with_perfect.iter().zip(&truth).filter(|(a, b)| a != b).count();
            estimated_errors += with_estimate.iter().zip(&truth).filter(|(a, b)| a != b).count();
        }
        assert!(
            perfect_errors <= estimated_errors,
            "perfect {perfect_errors} vs estimated {estimated_errors}"
        );
    }
}
