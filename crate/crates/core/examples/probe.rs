// Scratch benchmark used while tuning: aligned blind MSE vs pilot baselines.

use std::time::Instant;

use blindvi_core::baselines::{ls_estimate, make_orthogonal_pilots, mmse_estimate, transmit_pilots};
use blindvi_core::channel::{draw_channel, noise_var_for_snr_db, random_symbols, transmit, Schedule};
use blindvi_core::constellation::{make_constellation, ConstellationName};
use blindvi_core::metrics::{align_channel, mse};
use blindvi_core::rng::Rng;
use blindvi_core::vi::{fit_block, ViConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let k: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let t_est: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let blocks: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20);
    let max_iters: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let coherent: bool = args.get(6).map(|s| s == "coherent").unwrap_or(true);

    let constellation = make_constellation(ConstellationName::Qpsk, 1.0).unwrap();
    let t_p = 2 * k;
    let pilots = make_orthogonal_pilots(k, t_p, 1.0).unwrap();

    println!("n={n} k={k} t_est={t_est} t_p={t_p} blocks={blocks} max_iters={max_iters} coherent={coherent}");
    for snr_db in [0.0, 5.0, 10.0, 20.0, 25.0] {
        let sigma2 = noise_var_for_snr_db(1.0, snr_db);
        let mut blind_acc = 0.0;
        let mut blind_raw_acc = 0.0;
        let mut ls_acc = 0.0;
        let mut mmse_acc = 0.0;
        let mut iters_acc = 0usize;
        let mut conv = 0usize;
        let t0 = Instant::now();
        for b in 0..blocks {
            let root = Rng::new(7777);
            let mut rng = root.derive(&[snr_db as u64, b as u64]);
            let ch = draw_channel(n, k, 1.0, sigma2, &mut rng).unwrap();
            let sched = Schedule::estimation(k, t_est).unwrap();
            let (tx, idx) = random_symbols(&sched, &constellation, &mut rng);
            let frame = transmit(&ch, &sched, &tx, idx, &mut rng).unwrap();
            let cfg = ViConfig {
                max_iters,
                coherent_assembly: coherent,
                ..ViConfig::default()
            };
            let est = fit_block(&frame, &constellation, &cfg, &mut rng).unwrap();
            let aligned = align_channel(&est.h_hat, &ch.h).unwrap();
            blind_acc += mse(&aligned, &ch.h).unwrap();
            blind_raw_acc += mse(&est.h_hat, &ch.h).unwrap();
            iters_acc += est.iterations;
            conv += est.converged as usize;

            let yp = transmit_pilots(&ch.h, &pilots, sigma2, &mut rng).unwrap();
            ls_acc += mse(&ls_estimate(&yp, &pilots).unwrap(), &ch.h).unwrap();
            mmse_acc += mse(&mmse_estimate(&yp, &pilots, sigma2).unwrap(), &ch.h).unwrap();
        }
        let bf = blocks as f64;
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "snr {snr_db:>5.1} dB: blind {:.5} (raw {:.3}) ls {:.5} mmse {:.5} | blind/mmse {:+.2} dB blind/ls {:+.2} dB | iters {:.0} conv {conv}/{blocks} | {:.2} s/block",
            blind_acc / bf,
            blind_raw_acc / bf,
            ls_acc / bf,
            mmse_acc / bf,
            10.0 * ((blind_acc / mmse_acc) as f64).log10(),
            10.0 * ((blind_acc / ls_acc) as f64).log10(),
            iters_acc as f64 / bf,
            dt / bf
        );
    }
}
