// Scratch: final acceptance-margin verification.

use blindvi_core::config::{Estimator, ExperimentConfig};
use blindvi_core::harness::run_point;
use blindvi_core::vi::NoiseWeighting;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "mse".into());
    if which == "mse" {
        let cfg = ExperimentConfig {
            blocks_per_point: 200,
            t_det: 1,
            tolerance: 3e-5,
            weighting: NoiseWeighting::Full,
            snr_grid_db: vec![0.0, 5.0, 10.0, 20.0, 25.0],
            seed: 2024,
            ..ExperimentConfig::default()
        };
        for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
            let rows = run_point(&cfg, i, snr).unwrap();
            let get = |e: Estimator| rows.iter().find(|r| r.estimator == e).unwrap();
            let b = get(Estimator::BlindVi);
            let l = get(Estimator::AidedLs);
            let m = get(Estimator::AidedMmse);
            println!(
                "snr {snr:>4}: blind_al {:.5} ls {:.5} mmse {:.5} | blind<=ls {} | vs mmse {:+.2} dB",
                b.mse_aligned, l.mse_raw, m.mse_raw,
                b.mse_aligned <= l.mse_raw,
                10.0 * (b.mse_aligned / m.mse_raw).log10()
            );
        }
    } else {
        let cfg = ExperimentConfig {
            n_antennas: 40,
            n_users: 4,
            blocks_per_point: 25,
            t_det: 20,
            tolerance: 3e-5,
            weighting: NoiseWeighting::Full,
            snr_grid_db: vec![-10.0, -5.0, 0.0],
            seed: 3030,
            ..ExperimentConfig::default()
        };
        for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
            let rows = run_point(&cfg, i, snr).unwrap();
            let get = |e: Estimator| rows.iter().find(|r| r.estimator == e).unwrap();
            let b = get(Estimator::BlindVi);
            let l = get(Estimator::AidedLs);
            let m = get(Estimator::AidedMmse);
            let p = get(Estimator::PerfectCsi);
            println!(
                "snr {snr:>4}: ser blind {:.5} ls {:.5} mmse {:.5} perfect {:.5} | p<=m {} m<=1.5b {} b<=l {}",
                b.ser, l.ser, m.ser, p.ser,
                p.ser <= m.ser, m.ser <= 1.5 * b.ser, b.ser <= l.ser
            );
        }
    }
}
