//! Rayleigh block-fading channel and frame generation.
//!
//! A coherence block draws one channel matrix, transmits an
//! estimation-phase frame (users take turns, one active user per slot)
//! and a detection-phase frame (all users active), and adds circularly
//! symmetric noise per slot.

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::Rng;

/// One realization of the fading channel plus the block's noise level.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
    /// Noise variance per complex dimension.
    pub noise_var: f64,
    pub rho2: f64,
}

impl ChannelRealization {
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.rho2 / self.noise_var).log10()
    }
}

/// Noise variance for a target per-receive-antenna SNR.
pub fn noise_var_for_snr_db(rho2: f64, snr_db: f64) -> f64 {
    rho2 * 10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Estimation,
    Detection,
}

/// Per-slot active-user masks for one frame.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub phase: Phase,
    slots: Vec<Vec<bool>>,
}

impl Schedule {
    /// Round-robin single-user schedule: slot `t` activates user `t % k`.
    /// Needs at least one full round so every user appears.
    pub fn estimation(k: usize, t_est: usize) -> Result<Schedule> {
        if k == 0 {
            return Err(Error::domain("estimation schedule: k must be >= 1"));
        }
        if t_est < k {
            return Err(Error::domain(format!(
                "estimation schedule: t_est = {t_est} < k = {k} leaves users without a slot"
            )));
        }
        let slots = (0..t_est)
            .map(|t| (0..k).map(|u| u == t % k).collect())
            .collect();
        Ok(Schedule {
            phase: Phase::Estimation,
            slots,
        })
    }

    /// All users active in every slot.
    pub fn detection(k: usize, t_det: usize) -> Result<Schedule> {
        if k == 0 || t_det == 0 {
            return Err(Error::domain("detection schedule: k and t_det must be >= 1"));
        }
        Ok(Schedule {
            phase: Phase::Detection,
            slots: vec![vec![true; k]; t_det],
        })
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn num_users(&self) -> usize {
        self.slots.first().map(|s| s.len()).unwrap_or(0)
    }

    pub fn active(&self, slot: usize) -> &[bool] {
        &self.slots[slot]
    }

    /// Index of the single active user in an estimation slot.
    pub fn single_active_user(&self, slot: usize) -> Option<usize> {
        let mask = &self.slots[slot];
        let mut found = None;
        for (u, &a) in mask.iter().enumerate() {
            if a {
                if found.is_some() {
                    return None;
                }
                found = Some(u);
            }
        }
        found
    }
}

/// Transmitted and received signals of one frame plus the ground truth
/// used for scoring.
#[derive(Debug, Clone)]
pub struct Frame {
    pub schedule: Schedule,
    /// K x T transmitted symbols, exact zeros where a user is silent.
    pub tx: ComplexMatrix,
    /// N x T received signals.
    pub rx: ComplexMatrix,
    pub truth: FrameTruth,
    /// Noise variance per complex dimension used by `transmit`.
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub struct FrameTruth {
    pub channel: ComplexMatrix,
    /// K x T symbol indices; `None` where the user was silent.
    pub symbols: Vec<Vec<Option<usize>>>,
}

impl Frame {
    pub fn num_antennas(&self) -> usize {
        self.rx.rows()
    }

    pub fn num_users(&self) -> usize {
        self.tx.rows()
    }

    pub fn num_slots(&self) -> usize {
        self.rx.cols()
    }

    pub fn rx_slot(&self, t: usize) -> Vec<Complex64> {
        self.rx.column(t)
    }

    /// Columnar debug dump of the received signals: `slot,antenna,re,im`.
    pub fn rx_to_csv(&self) -> String {
        let mut out = String::from("slot,antenna,re,im\n");
        for t in 0..self.num_slots() {
            for n in 0..self.num_antennas() {
                let v = self.rx.get(n, t);
                out.push_str(&format!("{t},{n},{:.17e},{:.17e}\n", v.re, v.im));
            }
        }
        out
    }

    /// Parse the format written by [`Frame::rx_to_csv`] back into an N x T
    /// matrix. Debug aid, not a stability contract.
    pub fn rx_from_csv(text: &str) -> Result<ComplexMatrix> {
        let mut entries: Vec<(usize, usize, Complex64)> = Vec::new();
        let mut max_slot = 0usize;
        let mut max_ant = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::domain(format!("rx csv line {lineno}: expected 4 fields")));
            }
            let parse_err = |what: &str| Error::domain(format!("rx csv line {lineno}: bad {what}"));
            let t: usize = fields[0].parse().map_err(|_| parse_err("slot"))?;
            let n: usize = fields[1].parse().map_err(|_| parse_err("antenna"))?;
            let re: f64 = fields[2].parse().map_err(|_| parse_err("re"))?;
            let im: f64 = fields[3].parse().map_err(|_| parse_err("im"))?;
            max_slot = max_slot.max(t);
            max_ant = max_ant.max(n);
            entries.push((t, n, Complex64::new(re, im)));
        }
        let mut m = ComplexMatrix::zeros(max_ant + 1, max_slot + 1);
        for (t, n, v) in entries {
            m.set(n, t, v);
        }
        Ok(m)
    }
}

/// Draw an N x K channel with i.i.d. `CN(0,1)` entries.
pub fn draw_channel(n: usize, k: usize, rho2: f64, noise_var: f64, rng: &mut Rng) -> Result<ChannelRealization> {
    if n == 0 || k == 0 {
        return Err(Error::domain("draw_channel: n and k must be >= 1"));
    }
    let data = (0..n * k).map(|_| rng.complex_normal(1.0)).collect();
    Ok(ChannelRealization {
        h: ComplexMatrix::new(n, k, data)?,
        noise_var,
        rho2,
    })
}

/// Draw uniform symbol indices for the active positions of a schedule and
/// modulate them. Returns (K x T symbols, K x T indices).
pub fn random_symbols(
    schedule: &Schedule,
    constellation: &Constellation,
    rng: &mut Rng,
) -> (ComplexMatrix, Vec<Vec<Option<usize>>>) {
    let k = schedule.num_users();
    let t_total = schedule.num_slots();
    let mut tx = ComplexMatrix::zeros(k, t_total);
    let mut indices = vec![vec![None; t_total]; k];
    for t in 0..t_total {
        for u in 0..k {
            if schedule.active(t)[u] {
                let idx = rng.below(constellation.size());
                indices[u][t] = Some(idx);
                tx.set(u, t, constellation.point(idx));
            }
        }
    }
    (tx, indices)
}

/// Run the channel over one frame: `rx_t = H x_t + n_t` per slot, with
/// noise `CN(0, noise_var I)` (variance `noise_var / 2` per real dimension).
pub fn transmit(
    channel: &ChannelRealization,
    schedule: &Schedule,
    tx: &ComplexMatrix,
    symbols: Vec<Vec<Option<usize>>>,
    rng: &mut Rng,
) -> Result<Frame> {
    let n = channel.h.rows();
    let k = channel.h.cols();
    if tx.rows() != k || tx.cols() != schedule.num_slots() || schedule.num_users() != k {
        return Err(Error::shape(format!(
            "transmit: channel {}x{}, tx {}x{}, schedule {} users x {} slots",
            n,
            k,
            tx.rows(),
            tx.cols(),
            schedule.num_users(),
            schedule.num_slots()
        )));
    }
    if channel.noise_var < 0.0 {
        return Err(Error::domain("transmit: noise variance must be >= 0"));
    }
    let t_total = schedule.num_slots();
    let mut rx = ComplexMatrix::zeros(n, t_total);
    for t in 0..t_total {
        let x = tx.column(t);
        let y = channel.h.matvec(&x)?;
        for (r, &v) in y.iter().enumerate() {
            let noise = if channel.noise_var > 0.0 {
                rng.complex_normal(channel.noise_var)
            } else {
                Complex64::new(0.0, 0.0)
            };
            rx.set(r, t, v + noise);
        }
    }
    Ok(Frame {
        schedule: schedule.clone(),
        tx: tx.clone(),
        rx,
        truth: FrameTruth {
            channel: channel.h.clone(),
            symbols,
        },
        noise_var: channel.noise_var,
    })
}
