//! Symbol alphabets: Gray-mapped QPSK and 16QAM with configurable power.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstellationName {
    Qpsk,
    Qam16,
}

impl ConstellationName {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(ConstellationName::Qpsk),
            "qam16" | "16qam" => Ok(ConstellationName::Qam16),
            other => Err(Error::config(format!("unknown constellation '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ConstellationName::Qpsk => "qpsk",
            ConstellationName::Qam16 => "qam16",
        }
    }
}

/// Finite symbol alphabet with average energy `rho2`.
///
/// Point indices equal the integer value of the Gray-labelled bit group, so
/// `points[g]` is the symbol transmitted for bits `g`.
#[derive(Debug, Clone)]
pub struct Constellation {
    name: ConstellationName,
    points: Vec<Complex64>,
    rho2: f64,
}

/// Build a Gray-mapped alphabet normalized to average symbol energy `rho2`.
pub fn make_constellation(name: ConstellationName, rho2: f64) -> Result<Constellation> {
    if !(rho2 > 0.0) || !rho2.is_finite() {
        return Err(Error::config(format!("rho2 must be positive, got {rho2}")));
    }
    let rho = rho2.sqrt();
    let points = match name {
        ConstellationName::Qpsk => {
            let a = rho / 2.0_f64.sqrt();
            // bits b1 b0: b1 flips the real sign, b0 the imaginary sign,
            // giving a Gray labelling around the circle.
            vec![
                Complex64::new(a, a),   // 00
                Complex64::new(a, -a),  // 01
                Complex64::new(-a, a),  // 10
                Complex64::new(-a, -a), // 11
            ]
        }
        ConstellationName::Qam16 => {
            // Gray-coded 2 bits per axis onto levels {-3,-1,+1,+3}/sqrt(10).
            let scale = rho / 10.0_f64.sqrt();
            let level = |bits: usize| -> f64 {
                match bits {
                    0b00 => -3.0,
                    0b01 => -1.0,
                    0b11 => 1.0,
                    0b10 => 3.0,
                    _ => unreachable!(),
                }
            };
            (0..16)
                .map(|g| {
                    let re = level(g >> 2) * scale;
                    let im = level(g & 0b11) * scale;
                    Complex64::new(re, im)
                })
                .collect()
        }
    };
    Ok(Constellation { name, points, rho2 })
}

impl Constellation {
    pub fn name(&self) -> ConstellationName {
        self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.points.len().trailing_zeros() as usize
    }

    /// Average symbol energy.
    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    /// Map bit groups (one group per symbol, `bits_per_symbol` wide) to points.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(Error::domain(format!(
                "bit count {} is not a multiple of {bps}",
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::domain(format!("bits must be 0/1, got {b}")));
        }
        Ok(bits
            .chunks(bps)
            .map(|group| {
                let idx = group.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
                self.points[idx]
            })
            .collect())
    }

    /// Index of the nearest point in Euclidean distance; ties go to the
    /// lowest index.
    pub fn demodulate_hard(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}
