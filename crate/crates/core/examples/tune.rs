// Scratch probes for acceptance margins.

use blindvi_core::config::{Estimator, ExperimentConfig};
use blindvi_core::constellation::{make_constellation, ConstellationName};
use blindvi_core::harness::{dump_constellation, run_point, DumpStage};
use blindvi_core::vi::NoiseWeighting;

const TEST_T_EST: usize = 32;
const TEST_RESTARTS: usize = 1;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "ser".into());
    match which.as_str() {
        "ser" => {
            // Criterion 8 margins: N=4 K=4 QPSK SER at 0/5/10 dB.
            let cfg = ExperimentConfig {
                blocks_per_point: 200,
                t_det: 25,
                t_est: TEST_T_EST,
                restarts: TEST_RESTARTS,
                tolerance: 3e-5,
                weighting: NoiseWeighting::Full,
                snr_grid_db: vec![2.0, 4.0, 6.0, 8.0, 10.0],
                seed: 99,
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
                    "snr {snr:>4}: ser blind {:.4} ls {:.4} mmse {:.4} perfect {:.4} | blind<=ls {} mmse<=1.5b {} perf<=mmse {}",
                    b.ser, l.ser, m.ser, p.ser,
                    b.ser <= l.ser,
                    m.ser <= 1.5 * b.ser,
                    p.ser <= m.ser
                );
            }
        }
        "purity" => {
            for name in [ConstellationName::Qpsk, ConstellationName::Qam16] {
                let cfg = ExperimentConfig {
                    n_antennas: 4,
                    n_users: 2,
                    constellation: name,
                    blocks_per_point: 8,
                    t_est: 32,
                    t_det: 80,
                    tolerance: 3e-5,
                    weighting: NoiseWeighting::Full,
                    seed: 7,
                    ..ExperimentConfig::default()
                };
                let dump = dump_constellation(&cfg, 20.0).unwrap();
                let c = make_constellation(name, 1.0).unwrap();
                println!(
                    "{}: points {} pre purity {:.4} post purity {:.4}",
                    name.as_str(),
                    dump.points.len() / 2,
                    dump.nearest_point_purity(DumpStage::Pre, &c),
                    dump.nearest_point_purity(DumpStage::Post, &c)
                );
            }
        }
        "large" => {
            let cfg = ExperimentConfig {
                n_antennas: 40,
                n_users: 4,
                blocks_per_point: 25,
                t_det: 20,
                tolerance: 3e-5,
                weighting: NoiseWeighting::Full,
                snr_grid_db: vec![-10.0, -5.0, 0.0],
                seed: 55,
                ..ExperimentConfig::default()
            };
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                let rows = run_point(&cfg, i, snr).unwrap();
                for r in &rows {
                    println!("snr {snr:>4} {}: mse_al {:.4} ser {:.5}", r.estimator.as_str(), r.mse_aligned, r.ser);
                }
            }
        }
        _ => eprintln!("unknown probe"),
    }
}
