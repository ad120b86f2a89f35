use criterion::{black_box, criterion_group, criterion_main, Criterion};

use blindvi_core::channel::{draw_channel, noise_var_for_snr_db, random_symbols, transmit, Schedule};
use blindvi_core::constellation::{make_constellation, ConstellationName};
use blindvi_core::detection::mld_detect;
use blindvi_core::linalg::cmatmul;
use blindvi_core::rng::Rng;
use blindvi_core::vi::{fit_block, ElboProbe, ViConfig};

fn bench_cmatmul(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let a = draw_channel(40, 40, 1.0, 0.0, &mut rng).unwrap().h;
    let b = draw_channel(40, 40, 1.0, 0.0, &mut rng).unwrap().h;
    c.bench_function("cmatmul_40x40", |bench| {
        bench.iter(|| cmatmul(black_box(&a), black_box(&b)).unwrap())
    });
}

fn bench_mld(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let constellation = make_constellation(ConstellationName::Qpsk, 1.0).unwrap();
    let h = draw_channel(4, 4, 1.0, 0.0, &mut rng).unwrap().h;
    let x: Vec<_> = (0..4).map(|_| constellation.point(rng.below(4))).collect();
    let y = h.matvec(&x).unwrap();
    let active = [true; 4];
    c.bench_function("mld_4x4_qpsk_256hyp", |bench| {
        bench.iter(|| mld_detect(black_box(&y), black_box(&h), &constellation, &active).unwrap())
    });
}

fn bench_elbo_grad_step(c: &mut Criterion) {
    let constellation = make_constellation(ConstellationName::Qpsk, 1.0).unwrap();
    let mut rng = Rng::new(3);
    let sigma2 = noise_var_for_snr_db(1.0, 10.0);
    let channel = draw_channel(4, 4, 1.0, sigma2, &mut rng).unwrap();
    let sched = Schedule::estimation(4, 32).unwrap();
    let (tx, idx) = random_symbols(&sched, &constellation, &mut rng);
    let frame = transmit(&channel, &sched, &tx, idx, &mut rng).unwrap();
    let cfg = ViConfig::default();
    let mut probe = ElboProbe::new(&frame, &constellation, &cfg, &mut rng).unwrap();
    let params = probe.params().to_vec();
    c.bench_function("elbo_grad_4x4_32slots", |bench| {
        bench.iter(|| probe.gradient_at(black_box(&params)))
    });
}

fn bench_fit_block_small(c: &mut Criterion) {
    let constellation = make_constellation(ConstellationName::Qpsk, 1.0).unwrap();
    let mut rng = Rng::new(4);
    let sigma2 = noise_var_for_snr_db(1.0, 10.0);
    let channel = draw_channel(2, 2, 1.0, sigma2, &mut rng).unwrap();
    let sched = Schedule::estimation(2, 8).unwrap();
    let (tx, idx) = random_symbols(&sched, &constellation, &mut rng);
    let frame = transmit(&channel, &sched, &tx, idx, &mut rng).unwrap();
    let cfg = ViConfig {
        max_iters: 100,
        kl_warmup_iters: 50,
        tolerance: 0.0,
        ..ViConfig::default()
    };
    let mut group = c.benchmark_group("fit_block");
    group.sample_size(10);
    group.bench_function("fit_block_2x2_100iters", |bench| {
        let mut seed = 0u64;
        bench.iter(|| {
            seed += 1;
            let mut rng = Rng::new(seed);
            fit_block(black_box(&frame), &constellation, &cfg, &mut rng).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_cmatmul,
    bench_mld,
    bench_elbo_grad_step,
    bench_fit_block_small
);
criterion_main!(benches);
