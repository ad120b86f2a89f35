//! Experiment configuration: a flat `key = value` text format.
//!
//! Lines are `key = value` pairs; `#` starts a comment; blank lines are
//! skipped. Unknown or duplicate keys are errors. `to_kv_string` writes
//! every key back out, and parsing that string reproduces the config
//! exactly.

use crate::constellation::ConstellationName;
use crate::error::{Error, Result};
use crate::vi::{NoiseWeighting, ViConfig};

/// Channel estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    BlindVi,
    AidedLs,
    AidedMmse,
    PerfectCsi,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::BlindVi,
        Estimator::AidedLs,
        Estimator::AidedMmse,
        Estimator::PerfectCsi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::BlindVi => "Blind-VI",
            Estimator::AidedLs => "Aided-LS",
            Estimator::AidedMmse => "Aided-MMSE",
            Estimator::PerfectCsi => "Perfect-CSI",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blind-vi" | "blind_vi" | "blind" => Ok(Estimator::BlindVi),
            "aided-ls" | "aided_ls" | "ls" => Ok(Estimator::AidedLs),
            "aided-mmse" | "aided_mmse" | "mmse" => Ok(Estimator::AidedMmse),
            "perfect-csi" | "perfect_csi" | "perfect" => Ok(Estimator::PerfectCsi),
            other => Err(Error::config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Everything one sweep needs: system size, slot budgets, estimator set,
/// fit hyperparameters, and the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub constellation: ConstellationName,
    pub rho2: f64,
    pub snr_grid_db: Vec<f64>,
    pub blocks_per_point: usize,
    /// Estimation-phase slots (round-robin, one user per slot).
    pub t_est: usize,
    /// Detection-phase slots (all users active).
    pub t_det: usize,
    /// Pilot slots for the aided baselines.
    pub t_p: usize,
    pub estimators: Vec<Estimator>,
    pub lr: f64,
    pub mc_samples: usize,
    pub mc_samples_report: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Mean-head amplitude; `None` = auto (`3 max(rho, 1)`).
    pub amplitude: Option<f64>,
    pub weighting: NoiseWeighting,
    /// Noise variance assumed by the fit; `None` = the true value.
    pub sigma2_model: Option<f64>,
    pub kl_warmup_iters: usize,
    pub lr_half_life: Option<usize>,
    /// Independent fit restarts per block (best final loss wins).
    pub restarts: usize,
    pub seed: u64,
    /// Record wall time in result rows. Off makes sweep output
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let vi = ViConfig::default();
        ExperimentConfig {
            n_antennas: 4,
            n_users: 4,
            constellation: ConstellationName::Qpsk,
            rho2: 1.0,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            blocks_per_point: 200,
            t_est: 32,
            t_det: 50,
            t_p: 8,
            estimators: Estimator::ALL.to_vec(),
            lr: vi.learning_rate,
            mc_samples: vi.mc_samples,
            mc_samples_report: vi.mc_samples_report,
            max_iters: vi.max_iters,
            tolerance: vi.tolerance,
            amplitude: None,
            weighting: vi.weighting,
            sigma2_model: None,
            kl_warmup_iters: vi.kl_warmup_iters,
            lr_half_life: vi.lr_half_life,
            restarts: vi.restarts,
            seed: 1,
            timing: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("key '{key}': cannot parse '{value}'")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("duplicate key '{key}'")));
            }
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_antennas" => self.n_antennas = parse_num(key, value)?,
            "n_users" => self.n_users = parse_num(key, value)?,
            "constellation" => self.constellation = ConstellationName::parse(value)?,
            "rho2" => self.rho2 = parse_num(key, value)?,
            "snr_grid_db" => {
                self.snr_grid_db = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<Vec<f64>>>()?;
            }
            "blocks_per_point" => self.blocks_per_point = parse_num(key, value)?,
            "t_est" => self.t_est = parse_num(key, value)?,
            "t_det" => self.t_det = parse_num(key, value)?,
            "t_p" => self.t_p = parse_num(key, value)?,
            "estimators" => {
                self.estimators = value
                    .split(',')
                    .map(Estimator::parse)
                    .collect::<Result<Vec<_>>>()?;
            }
            "lr" => self.lr = parse_num(key, value)?,
            "mc_samples" => self.mc_samples = parse_num(key, value)?,
            "mc_samples_report" => self.mc_samples_report = parse_num(key, value)?,
            "max_iters" => self.max_iters = parse_num(key, value)?,
            "tolerance" => self.tolerance = parse_num(key, value)?,
            "amplitude" => {
                self.amplitude = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                };
            }
            "weighting" => self.weighting = NoiseWeighting::parse(value)?,
            "sigma2_model" => {
                self.sigma2_model = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                };
            }
            "kl_warmup_iters" => self.kl_warmup_iters = parse_num(key, value)?,
            "restarts" => self.restarts = parse_num(key, value)?,
            "lr_half_life" => {
                self.lr_half_life = match value {
                    "none" => None,
                    v => Some(parse_num(key, v)?),
                };
            }
            "seed" => self.seed = parse_num(key, value)?,
            "timing" => {
                self.timing = match value {
                    "on" => true,
                    "off" => false,
                    other => {
                        return Err(Error::config(format!("key 'timing': expected on/off, got '{other}'")))
                    }
                };
            }
            other => return Err(Error::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 || self.n_users == 0 {
            return Err(Error::config("n_antennas and n_users must be >= 1"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::config("snr_grid_db must be non-empty"));
        }
        if self.blocks_per_point == 0 {
            return Err(Error::config("blocks_per_point must be >= 1"));
        }
        if !(self.rho2 > 0.0) {
            return Err(Error::config("rho2 must be positive"));
        }
        if self.t_est < self.n_users {
            return Err(Error::config("t_est must be >= n_users"));
        }
        if self.t_det == 0 {
            return Err(Error::config("t_det must be >= 1"));
        }
        if self.t_p < self.n_users {
            return Err(Error::config("t_p must be >= n_users"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators must be non-empty"));
        }
        if self.mc_samples == 0 || self.mc_samples_report == 0 {
            return Err(Error::config("mc_samples must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be >= 1"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts must be >= 1"));
        }
        Ok(())
    }

    /// Canonical key=value serialization; `parse` of the output reproduces
    /// the config exactly.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("n_antennas", self.n_antennas.to_string());
        push("n_users", self.n_users.to_string());
        push("constellation", self.constellation.as_str().to_string());
        push("rho2", format!("{}", self.rho2));
        push(
            "snr_grid_db",
            self.snr_grid_db
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        push("blocks_per_point", self.blocks_per_point.to_string());
        push("t_est", self.t_est.to_string());
        push("t_det", self.t_det.to_string());
        push("t_p", self.t_p.to_string());
        push(
            "estimators",
            self.estimators
                .iter()
                .map(|e| e.as_str().to_ascii_lowercase())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("lr", format!("{}", self.lr));
        push("mc_samples", self.mc_samples.to_string());
        push("mc_samples_report", self.mc_samples_report.to_string());
        push("max_iters", self.max_iters.to_string());
        push("tolerance", format!("{}", self.tolerance));
        push(
            "amplitude",
            self.amplitude.map(|v| format!("{v}")).unwrap_or_else(|| "auto".into()),
        );
        push("weighting", self.weighting.as_str().to_string());
        push(
            "sigma2_model",
            self.sigma2_model.map(|v| format!("{v}")).unwrap_or_else(|| "auto".into()),
        );
        push("kl_warmup_iters", self.kl_warmup_iters.to_string());
        push("restarts", self.restarts.to_string());
        push(
            "lr_half_life",
            self.lr_half_life.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
        );
        push("seed", self.seed.to_string());
        push("timing", if self.timing { "on" } else { "off" }.to_string());
        out
    }

    /// Fit hyperparameters for one block under this config.
    pub fn vi_config(&self) -> ViConfig {
        ViConfig {
            learning_rate: self.lr,
            mc_samples: self.mc_samples,
            mc_samples_report: self.mc_samples_report,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            mean_amplitude: self.amplitude,
            weighting: self.weighting,
            sigma2_model: self.sigma2_model,
            kl_warmup_iters: self.kl_warmup_iters,
            lr_half_life: self.lr_half_life,
            restarts: self.restarts,
            ..ViConfig::default()
        }
    }
}
