//! Command-line front end: SNR sweeps, constellation dumps, gradient
//! checks, and a quick self-test.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime/numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blindvi_core::autodiff;
use blindvi_core::channel::{draw_channel, noise_var_for_snr_db, random_symbols, transmit, Schedule};
use blindvi_core::config::{Estimator, ExperimentConfig};
use blindvi_core::constellation::{make_constellation, ConstellationName};
use blindvi_core::detection::mld_detect;
use blindvi_core::error::Error;
use blindvi_core::harness;
use blindvi_core::metrics::{align_channel, mse};
use blindvi_core::rng::Rng;
use blindvi_core::vi::{fit_block, loss1, loss2, ElboProbe, ViConfig};
use blindvi_core::gaussian::GaussianPosterior;
use blindvi_core::stacked::StackedRealVector;

#[derive(Parser)]
#[command(name = "blindvi", about = "MIMO link-level simulator with blind variational channel estimation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Config file (key = value lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated estimator subset (blind-vi, aided-ls, aided-mmse, perfect-csi).
    #[arg(long)]
    estimators: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured SNR sweep and emit result rows as CSV.
    Sweep(CommonOpts),
    /// Dump pre/post-equalization scatter points as CSV.
    Constellation {
        #[command(flatten)]
        common: CommonOpts,
        /// Operating SNR for the dump.
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
    },
    /// Check analytic gradients of the training loss against finite differences.
    Gradcheck {
        /// Random instances to test.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Fast end-to-end sanity checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_config(opts: &CommonOpts) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &opts.estimators {
        cfg.estimators = list
            .split(',')
            .map(Estimator::parse)
            .collect::<Result<Vec<_>, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(opts: &CommonOpts, content: &str) -> Result<(), Error> {
    match &opts.out {
        Some(path) => std::fs::write(path, content).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_sweep(opts: &CommonOpts) -> Result<(), Error> {
    let cfg = load_config(opts)?;
    eprintln!(
        "sweep: {}x{} {} | est slots {} (blind) vs {} pilot slots | {} blocks/point | seed {}",
        cfg.n_antennas,
        cfg.n_users,
        cfg.constellation.as_str(),
        cfg.t_est,
        cfg.t_p,
        cfg.blocks_per_point,
        cfg.seed
    );
    let rows = harness::sweep(&cfg)?;
    emit(opts, &harness::rows_to_csv(&rows))
}

fn cmd_constellation(opts: &CommonOpts, snr_db: f64) -> Result<(), Error> {
    let cfg = load_config(opts)?;
    let dump = harness::dump_constellation(&cfg, snr_db)?;
    let constellation = make_constellation(cfg.constellation, cfg.rho2)?;
    eprintln!(
        "constellation dump at {snr_db} dB: {} points, purity pre {:.3} post {:.3}",
        dump.points.len(),
        dump.nearest_point_purity(harness::DumpStage::Pre, &constellation),
        dump.nearest_point_purity(harness::DumpStage::Post, &constellation),
    );
    emit(opts, &dump.to_csv())
}

fn cmd_gradcheck(instances: usize, seed: u64) -> Result<(), Error> {
    let constellation = make_constellation(ConstellationName::Qpsk, 1.0)?;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = Rng::new(seed).derive(&[i as u64]);
        let sigma2 = noise_var_for_snr_db(1.0, 10.0);
        let ch = draw_channel(2, 2, 1.0, sigma2, &mut rng)?;
        let sched = Schedule::estimation(2, 4)?;
        let (tx, idx) = random_symbols(&sched, &constellation, &mut rng);
        let frame = transmit(&ch, &sched, &tx, idx, &mut rng)?;
        let cfg = ViConfig {
            mc_samples: 3,
            ..ViConfig::default()
        };
        let mut probe = ElboProbe::new(&frame, &constellation, &cfg, &mut rng)?;
        let analytic = probe.gradient();
        let params = probe.params().to_vec();
        let fd = autodiff::finite_difference(|p| probe.loss_at(p), &params, 1e-5);
        let err = autodiff::grad_rel_err(&analytic, &fd, 1e-6);
        worst = worst.max(err);
        println!("instance {i}: max relative error {err:.3e}");
    }
    if worst < 1e-4 {
        println!("gradcheck PASS (worst {worst:.3e} < 1e-4)");
        Ok(())
    } else {
        Err(Error::Numeric {
            context: "gradcheck".to_string(),
            detail: format!("worst relative error {worst:.3e} >= 1e-4"),
        })
    }
}

fn cmd_selftest(seed: u64) -> Result<(), Error> {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {}", name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // KL non-negativity on random posteriors.
    let mut rng = Rng::new(seed);
    let mut ok = true;
    for _ in 0..1000 {
        let dim = 8;
        let mean: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let var: Vec<f64> = (0..dim).map(|_| 0.05 + rng.uniform()).collect();
        let post = GaussianPosterior::new(StackedRealVector::new(mean)?, var)?;
        if loss1(&post, 1.3)? < 0.0 || loss2(&post)? < 0.0 {
            ok = false;
        }
    }
    check("kl non-negativity", ok);

    // Noiseless LS recovery through the harness path.
    let pilots = blindvi_core::baselines::make_orthogonal_pilots(3, 6, 1.0)?;
    let ch = draw_channel(4, 3, 1.0, 0.0, &mut rng)?;
    let y = blindvi_core::baselines::transmit_pilots(&ch.h, &pilots, 0.0, &mut rng)?;
    let h_hat = blindvi_core::baselines::ls_estimate(&y, &pilots)?;
    check("noiseless ls recovery", mse(&h_hat, &ch.h)? < 1e-18);

    // Noiseless MLD recovery.
    let constellation = make_constellation(ConstellationName::Qpsk, 1.0)?;
    let truth: Vec<usize> = (0..3).map(|_| rng.below(4)).collect();
    let x: Vec<_> = truth.iter().map(|&i| constellation.point(i)).collect();
    let rx = ch.h.matvec(&x)?;
    let decided = mld_detect(&rx, &ch.h, &constellation, &[true; 3])?;
    check("noiseless mld recovery", decided == truth);

    // Tiny blind fit recovers a scalar channel up to ambiguity.
    let ch1 = draw_channel(1, 1, 1.0, 0.0, &mut rng)?;
    let sched = Schedule::estimation(1, 4)?;
    let (tx, idx) = random_symbols(&sched, &constellation, &mut rng);
    let frame = transmit(&ch1, &sched, &tx, idx, &mut rng)?;
    let est = fit_block(&frame, &constellation, &ViConfig::default(), &mut rng)?;
    let aligned = align_channel(&est.h_hat, &ch1.h)?;
    check("scalar blind fit", mse(&aligned, &ch1.h)? < 1e-3);

    // Deterministic micro-sweep.
    let cfg = ExperimentConfig {
        snr_grid_db: vec![10.0],
        blocks_per_point: 2,
        t_det: 4,
        max_iters: 50,
        kl_warmup_iters: 20,
        timing: false,
        seed,
        ..ExperimentConfig::default()
    };
    let a = harness::rows_to_csv(&harness::sweep(&cfg)?);
    let b = harness::rows_to_csv(&harness::sweep(&cfg)?);
    check("deterministic sweep", a == b);

    if failures == 0 {
        println!("selftest PASS");
        Ok(())
    } else {
        Err(Error::Numeric {
            context: "selftest".to_string(),
            detail: format!("{failures} check(s) failed"),
        })
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io { .. } => 1,
        Error::Block { source, .. } => exit_code_for(source),
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(opts) => cmd_sweep(opts),
        Command::Constellation { common, snr_db } => cmd_constellation(common, *snr_db),
        Command::Gradcheck { instances, seed } => cmd_gradcheck(*instances, *seed),
        Command::Selftest { seed } => cmd_selftest(*seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
