//! Variational blind estimation of the channel and the transmitted symbols.
//!
//! Two encoder networks map each received slot to diagonal Gaussian
//! posteriors over the transmitted vector and over the whole channel
//! matrix. Both are trained per coherence block by minimizing
//! `loss1 + loss2 + loss3`:
//!
//! * `loss1` — exact KL from the symbol posterior to its relaxed Gaussian
//!   prior (complex variance `2 rho^2` per entry, i.e. `rho^2` per real
//!   dimension);
//! * `loss2` — exact KL from the channel posterior to the fading prior
//!   (`CN(0,1)` entries, `1/2` per real dimension);
//! * `loss3` — Monte Carlo reconstruction error with channel samples drawn
//!   through the reparameterization trick, so gradients flow through the
//!   sampling step.
//!
//! The KLs keep their additive constants, which makes them true divergences
//! (non-negative, zero exactly at the prior) and lets the negated total act
//! as an evidence lower bound when the reconstruction term carries the full
//! likelihood weighting.

use num_complex::Complex64;

use crate::adam::Adam;
use crate::autodiff::{Graph, NodeId};
use crate::channel::{Frame, Phase};
use crate::constellation::Constellation;
use crate::encoder::EncoderNet;
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_kl_diag_uniform, GaussianPosterior};
use crate::linalg::ComplexMatrix;
use crate::rng::Rng;
use crate::stacked::StackedRealVector;

/// How the reconstruction term is scaled against the KL terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseWeighting {
    /// Raw Monte Carlo sum, no noise scaling.
    Unweighted,
    /// Divide by `2 sigma^2`; default. Keeps the three losses on comparable
    /// scales across SNR.
    Half,
    /// Full complex log-likelihood: divide by `sigma^2` and add the
    /// `N ln(pi sigma^2)` normalizer, making `-loss` a valid evidence bound.
    Full,
}

impl NoiseWeighting {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "unweighted" => Ok(NoiseWeighting::Unweighted),
            "half" => Ok(NoiseWeighting::Half),
            "full" => Ok(NoiseWeighting::Full),
            other => Err(Error::config(format!("unknown weighting mode '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseWeighting::Unweighted => "none",
            NoiseWeighting::Half => "half",
            NoiseWeighting::Full => "full",
        }
    }
}

/// Hyperparameters of the per-block variational fit.
#[derive(Debug, Clone)]
pub struct ViConfig {
    pub learning_rate: f64,
    /// Monte Carlo samples per slot during training.
    pub mc_samples: usize,
    /// Monte Carlo samples for the final reported loss.
    pub mc_samples_report: usize,
    pub max_iters: usize,
    /// Relative change of the smoothed loss that counts as converged.
    pub tolerance: f64,
    pub hidden_dim: usize,
    /// Mean-head amplitude; `None` picks `3 * max(rho, 1)`.
    pub mean_amplitude: Option<f64>,
    pub weighting: NoiseWeighting,
    /// Noise variance used inside the loss; `None` takes the frame's true
    /// value (floored to keep the weighting finite on noiseless frames).
    pub sigma2_model: Option<f64>,
    pub sigma2_floor: f64,
    /// Inverse-time learning-rate decay: `lr(t) = lr / (1 + t / half_life)`.
    /// `None` keeps the initial rate throughout.
    pub lr_half_life: Option<usize>,
    /// Ramp the KL terms in linearly over this many iterations. Keeps the
    /// early reconstruction gradient from being swamped by the priors at
    /// low SNR (the usual posterior-collapse warm-up); the objective after
    /// the ramp is the plain summed loss.
    pub kl_warmup_iters: usize,
    /// Exponential moving average of the parameters used for the final
    /// posterior pass (`None` uses the last iterate). Smooths out the
    /// stochastic-gradient jitter of the converged iterates.
    pub param_ema: Option<f64>,
    /// Independent restarts; the fit with the lowest reported loss wins.
    pub restarts: usize,
    /// Weight per-slot column contributions by the inverse of their mean
    /// posterior variance when assembling the channel estimate.
    pub variance_weighted_assembly: bool,
    /// Phase-align per-slot channel means before averaging columns.
    pub coherent_assembly: bool,
    /// Record per-iteration (loss1, loss2, loss3, total) for trace dumps.
    pub trace_components: bool,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            learning_rate: 0.05,
            mc_samples: 10,
            mc_samples_report: 100,
            max_iters: 2000,
            tolerance: 1e-4,
            hidden_dim: 16,
            mean_amplitude: None,
            weighting: NoiseWeighting::Half,
            sigma2_model: None,
            sigma2_floor: 1e-4,
            lr_half_life: Some(400),
            kl_warmup_iters: 500,
            param_ema: Some(0.99),
            restarts: 1,
            variance_weighted_assembly: true,
            coherent_assembly: true,
            trace_components: false,
        }
    }
}

impl ViConfig {
    pub fn amplitude_for(&self, rho2: f64) -> f64 {
        self.mean_amplitude.unwrap_or_else(|| 3.0 * rho2.sqrt().max(1.0))
    }

    pub fn sigma2_model_for(&self, frame_noise_var: f64) -> f64 {
        self.sigma2_model.unwrap_or(frame_noise_var).max(self.sigma2_floor)
    }
}

/// Both encoders, their flat parameter vector, and the optimizer.
#[derive(Debug, Clone)]
pub struct VIState {
    pub n_antennas: usize,
    pub n_users: usize,
    pub encoder_x: EncoderNet,
    pub encoder_h: EncoderNet,
    pub params: Vec<f64>,
    pub adam: Adam,
    pub mc_samples: usize,
}

impl VIState {
    pub fn new(n: usize, k: usize, rho2: f64, cfg: &ViConfig, rng: &mut Rng) -> Result<VIState> {
        if n == 0 || k == 0 {
            return Err(Error::domain("vi state: n and k must be >= 1"));
        }
        let amp = cfg.amplitude_for(rho2);
        let encoder_x = EncoderNet::new(2 * n, cfg.hidden_dim, 2 * k, amp, 0);
        let encoder_h = EncoderNet::new(2 * n, cfg.hidden_dim, 2 * n * k, amp, encoder_x.param_count());
        let dim = encoder_x.param_count() + encoder_h.param_count();
        let mut params = vec![0.0; dim];
        encoder_x.init_params(&mut params, rng);
        encoder_h.init_params(&mut params, rng);
        Ok(VIState {
            n_antennas: n,
            n_users: k,
            encoder_x,
            encoder_h,
            params,
            adam: Adam::new(cfg.learning_rate, dim),
            mc_samples: cfg.mc_samples,
        })
    }

    /// Posterior pair for one received slot.
    pub fn posteriors(&self, y: &StackedRealVector) -> Result<(GaussianPosterior, GaussianPosterior)> {
        let px = self.encoder_x.forward(&self.params, y)?;
        let ph = self.encoder_h.forward(&self.params, y)?;
        Ok((px, ph))
    }

    /// `loss1 + loss2 + loss3` for a single slot.
    pub fn elbo_loss(
        &self,
        y: &[Complex64],
        rho2: f64,
        sigma2_model: f64,
        weighting: NoiseWeighting,
        mc_samples: usize,
        rng: &mut Rng,
    ) -> Result<f64> {
        let stacked = StackedRealVector::from_complex(y)?;
        let (px, ph) = self.posteriors(&stacked)?;
        let l1 = loss1(&px, rho2)?;
        let l2 = loss2(&ph)?;
        let l3 = loss3_mc(&ph, &px, y, sigma2_model, weighting, mc_samples, rng)?;
        let total = l1 + l2 + l3;
        if !total.is_finite() {
            return Err(Error::Numeric {
                context: "elbo_loss".to_string(),
                detail: format!("loss1={l1} loss2={l2} loss3={l3}"),
            });
        }
        Ok(total)
    }
}

/// Draw `m + sqrt(var) * eps` with `eps ~ N(0, I)`; `var` entries may be
/// zero (the degenerate limit returns the mean exactly).
pub fn reparam_sample_parts(mean: &[f64], var: &[f64], rng: &mut Rng) -> Vec<f64> {
    mean.iter()
        .zip(var)
        .map(|(&m, &v)| m + v.sqrt() * rng.standard_normal())
        .collect()
}

/// Reparameterized draw from a posterior.
pub fn reparam_sample(post: &GaussianPosterior, rng: &mut Rng) -> StackedRealVector {
    let values = reparam_sample_parts(post.mean().values(), post.var(), rng);
    StackedRealVector::new(values).expect("posterior dims are valid")
}

/// Exact KL from the symbol posterior to the relaxed prior
/// `CN(0, 2 rho^2 I)`, i.e. prior variance `rho^2` per real dimension.
pub fn loss1(post_x: &GaussianPosterior, rho2: f64) -> Result<f64> {
    if !(rho2 > 0.0) || !rho2.is_finite() {
        return Err(Error::domain(format!("loss1: rho2 must be positive, got {rho2}")));
    }
    gaussian_kl_diag_uniform(post_x, rho2)
}

/// Exact KL from the channel posterior to the fading prior (`CN(0,1)`
/// entries, variance `1/2` per real dimension).
pub fn loss2(post_h: &GaussianPosterior) -> Result<f64> {
    gaussian_kl_diag_uniform(post_h, 0.5)
}

/// Monte Carlo reconstruction loss:
/// `(1/L) sum_l [ tr(H_l S_x H_l^H) + || H_l m_x - y ||^2 ]`, scaled per the
/// weighting mode. `H_l` are reparameterized draws from the channel
/// posterior; the expectation over the symbols is taken in closed form.
pub fn loss3_mc(
    post_h: &GaussianPosterior,
    post_x: &GaussianPosterior,
    y: &[Complex64],
    sigma2_model: f64,
    weighting: NoiseWeighting,
    mc_samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if mc_samples == 0 {
        return Err(Error::domain("loss3_mc: need at least one sample"));
    }
    let n = y.len();
    let k = post_x.dim() / 2;
    if post_h.dim() != 2 * n * k {
        return Err(Error::shape(format!(
            "loss3_mc: channel posterior dim {} != 2*{n}*{k}",
            post_h.dim()
        )));
    }
    if weighting != NoiseWeighting::Unweighted && !(sigma2_model > 0.0) {
        return Err(Error::domain("loss3_mc: weighted modes need sigma2_model > 0"));
    }
    let mx = post_x.mean().to_complex();
    // Complex per-entry symbol variances: real plus imaginary part.
    let sx: Vec<f64> = (0..k).map(|i| post_x.var()[i] + post_x.var()[k + i]).collect();

    let mut acc = 0.0;
    for _ in 0..mc_samples {
        let h_draw = reparam_sample(post_h, rng).to_matrix(n, k)?;
        let recon = h_draw.matvec(&mx)?;
        let quad: f64 = recon
            .iter()
            .zip(y)
            .map(|(r, t)| (r - t).norm_sqr())
            .sum();
        let mut trace = 0.0;
        for (col, &s) in sx.iter().enumerate().map(|(c, s)| (c, s)) {
            let mut norm = 0.0;
            for row in 0..n {
                norm += h_draw.get(row, col).norm_sqr();
            }
            trace += s * norm;
        }
        acc += quad + trace;
    }
    let mean = acc / mc_samples as f64;
    let value = match weighting {
        NoiseWeighting::Unweighted => mean,
        NoiseWeighting::Half => mean / (2.0 * sigma2_model),
        NoiseWeighting::Full => {
            mean / sigma2_model + n as f64 * (std::f64::consts::PI * sigma2_model).ln()
        }
    };
    Ok(value)
}

/// Output of one per-block fit.
#[derive(Debug, Clone)]
pub struct BlockEstimate {
    pub h_hat: ComplexMatrix,
    /// Per-slot symbol decisions: posterior mean projected to the nearest
    /// constellation point, for every user.
    pub x_hat: Vec<Vec<usize>>,
    /// Per-slot `(symbol, channel)` posteriors at the trained parameters.
    pub posteriors: Vec<(GaussianPosterior, GaussianPosterior)>,
    /// Total training loss per iteration.
    pub loss_trace: Vec<f64>,
    /// `(loss1, loss2, loss3, total)` per iteration when tracing is on.
    pub loss_components: Option<Vec<[f64; 4]>>,
    /// Final loss re-evaluated with `mc_samples_report` draws.
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Reusable ELBO computation graph over all slots of a frame.
struct ElboGraph {
    graph: Graph,
    params: NodeId,
    noise: Vec<NodeId>,
    noise_buf: Vec<f64>,
    kl_scale: NodeId,
    root: NodeId,
    parts: [NodeId; 3],
}

/// KL to a zero-mean isotropic prior, as graph nodes.
fn kl_uniform_graph(g: &mut Graph, mean: NodeId, var: NodeId, prior_var: f64) -> NodeId {
    let d = g.len(mean) as f64;
    let s = g.sum(var);
    let q = g.dot(mean, mean);
    let sq = g.add(s, q);
    let quad = g.scale(sq, 1.0 / (2.0 * prior_var));
    let lv = g.ln(var);
    let slv = g.sum(lv);
    let ent = g.scale(slv, -0.5);
    let partial = g.add(quad, ent);
    g.shift(partial, 0.5 * d * (prior_var.ln() - 1.0))
}

impl ElboGraph {
    fn build(
        state: &VIState,
        frame: &Frame,
        rho2: f64,
        sigma2_model: f64,
        weighting: NoiseWeighting,
        mc_samples: usize,
    ) -> ElboGraph {
        let n = state.n_antennas;
        let k = state.n_users;
        let mut g = Graph::new();
        let params = g.param(state.params.len());
        let mut noise = Vec::new();
        let mut loss1_nodes = Vec::new();
        let mut loss2_nodes = Vec::new();
        let mut loss3_nodes = Vec::new();
        let zeros = vec![0.0; 2 * n * k];

        for t in 0..frame.num_slots() {
            let y_stacked = StackedRealVector::from_complex(&frame.rx_slot(t)).expect("nonempty slot");
            let y = g.constant(y_stacked.values());
            let (mx_raw, vx) = state.encoder_x.forward_graph(&mut g, params, y);
            let (mh, vh) = state.encoder_h.forward_graph(&mut g, params, y);

            loss1_nodes.push(kl_uniform_graph(&mut g, mx_raw, vx, rho2));
            loss2_nodes.push(kl_uniform_graph(&mut g, mh, vh, 0.5));

            // The slot allocation is receiver knowledge: silent users
            // contribute exact zeros to x_t, so the reconstruction only
            // sees the active entries. Without this the per-slot objective
            // has a degenerate optimum that explains every slot through a
            // single channel column.
            let active = frame.schedule.active(t);
            let all_active = active.iter().all(|&a| a);
            let (mx, sxc) = if all_active {
                let sxc = g.fold_halves(vx);
                (mx_raw, sxc)
            } else {
                let mask: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
                let mut mask2k = mask.clone();
                mask2k.extend_from_slice(&mask);
                let mask2k = g.constant(&mask2k);
                let mx = g.mul(mx_raw, mask2k);
                let folded = g.fold_halves(vx);
                let maskk = g.constant(&mask);
                let sxc = g.mul(folded, maskk);
                (mx, sxc)
            };
            let sd = g.sqrt(vh);
            let mut sample_sum: Option<NodeId> = None;
            for _ in 0..mc_samples {
                let eps = g.constant(&zeros);
                noise.push(eps);
                let jitter = g.mul(sd, eps);
                let h_l = g.add(mh, jitter);
                let recon = g.complex_matvec(h_l, mx, n, k);
                let r = g.sub(recon, y);
                let quad = g.dot(r, r);
                let cn = g.col_norm_sq(h_l, n, k);
                let tr = g.dot(cn, sxc);
                let s = g.add(quad, tr);
                sample_sum = Some(match sample_sum {
                    Some(acc) => g.add(acc, s),
                    None => s,
                });
            }
            let mc_mean = g.scale(sample_sum.expect("mc_samples >= 1"), 1.0 / mc_samples as f64);
            let weighted = match weighting {
                NoiseWeighting::Unweighted => mc_mean,
                NoiseWeighting::Half => g.scale(mc_mean, 1.0 / (2.0 * sigma2_model)),
                NoiseWeighting::Full => {
                    let scaled = g.scale(mc_mean, 1.0 / sigma2_model);
                    g.shift(scaled, n as f64 * (std::f64::consts::PI * sigma2_model).ln())
                }
            };
            loss3_nodes.push(weighted);
        }

        let sum_nodes = |g: &mut Graph, nodes: &[NodeId]| -> NodeId {
            let mut acc = nodes[0];
            for &node in &nodes[1..] {
                acc = g.add(acc, node);
            }
            acc
        };
        let l1 = sum_nodes(&mut g, &loss1_nodes);
        let l2 = sum_nodes(&mut g, &loss2_nodes);
        let l3 = sum_nodes(&mut g, &loss3_nodes);
        let kl_sum = g.add(l1, l2);
        let kl_scale = g.constant(&[1.0]);
        let kl_scaled = g.mul(kl_sum, kl_scale);
        let root = g.add(kl_scaled, l3);
        let noise_buf = vec![0.0; 2 * n * k];
        ElboGraph {
            graph: g,
            params,
            noise,
            noise_buf,
            kl_scale,
            root,
            parts: [l1, l2, l3],
        }
    }

    fn refresh_noise(&mut self, rng: &mut Rng) {
        for &eps in &self.noise {
            rng.fill_standard_normal(&mut self.noise_buf);
            self.graph.set_value(eps, &self.noise_buf);
        }
    }

    fn set_kl_scale(&mut self, beta: f64) {
        self.graph.set_value(self.kl_scale, &[beta]);
    }
}

/// Average the per-slot channel means into one estimate: column `k` uses
/// only the slots where user `k` was active. With `coherent` set, each
/// contribution is first rotated onto the phase of the earliest active
/// slot's column so that slot-level phase ambiguities cannot cancel;
/// `col_weights[t][k]` (inverse posterior variances) bias the average
/// toward the slots the fit is confident about.
fn assemble_h(
    per_slot_means: &[ComplexMatrix],
    col_weights: Option<&[Vec<f64>]>,
    frame: &Frame,
    coherent: bool,
) -> Result<ComplexMatrix> {
    let n = frame.num_antennas();
    let k = frame.num_users();
    let mut h = ComplexMatrix::zeros(n, k);
    for user in 0..k {
        let slots: Vec<usize> = (0..frame.num_slots())
            .filter(|&t| frame.schedule.active(t)[user])
            .collect();
        if slots.is_empty() {
            return Err(Error::domain(format!("user {user} has no estimation slot")));
        }
        let weight = |t: usize| col_weights.map(|cw| cw[t][user]).unwrap_or(1.0);
        // Start from the most confident slot, then refine: each pass
        // re-rotates every slot onto the running average, whose phase
        // reference gets cleaner as the passes converge.
        let reference_slot = slots
            .iter()
            .copied()
            .max_by(|&a, &b| weight(a).partial_cmp(&weight(b)).unwrap())
            .unwrap();
        let mut reference = per_slot_means[reference_slot].column(user);
        let passes = if coherent { 4 } else { 1 };
        let mut average = vec![Complex64::new(0.0, 0.0); n];
        for _ in 0..passes {
            average.fill(Complex64::new(0.0, 0.0));
            let mut weight_sum = 0.0;
            for &t in &slots {
                let col = per_slot_means[t].column(user);
                let rot = if coherent {
                    let inner: Complex64 = col
                        .iter()
                        .zip(&reference)
                        .map(|(c, r)| c.conj() * r)
                        .sum();
                    let mag = inner.norm();
                    if mag > 0.0 {
                        inner / mag
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                } else {
                    Complex64::new(1.0, 0.0)
                };
                let w = weight(t);
                for (a, c) in average.iter_mut().zip(&col) {
                    *a += c * rot * w;
                }
                weight_sum += w;
            }
            for a in average.iter_mut() {
                *a /= weight_sum;
            }
            reference = average.clone();
        }
        for (row, a) in average.iter().enumerate() {
            h.set(row, user, *a);
        }
    }
    Ok(h)
}

/// The summed training objective of one frame as a deterministic function
/// of the flat parameter vector: base noise is drawn once at construction
/// and frozen, so analytic gradients can be checked against finite
/// differences.
pub struct ElboProbe {
    graph: ElboGraph,
    initial_params: Vec<f64>,
}

impl ElboProbe {
    pub fn new(
        frame: &Frame,
        constellation: &Constellation,
        cfg: &ViConfig,
        rng: &mut Rng,
    ) -> Result<ElboProbe> {
        if frame.schedule.phase != Phase::Estimation {
            return Err(Error::domain("elbo probe expects an estimation-phase frame"));
        }
        let rho2 = constellation.rho2();
        let sigma2_model = cfg.sigma2_model_for(frame.noise_var);
        let state = VIState::new(frame.num_antennas(), frame.num_users(), rho2, cfg, rng)?;
        let mut graph = ElboGraph::build(&state, frame, rho2, sigma2_model, cfg.weighting, cfg.mc_samples);
        graph.refresh_noise(rng);
        Ok(ElboProbe {
            graph,
            initial_params: state.params,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.initial_params
    }

    pub fn loss_at(&mut self, params: &[f64]) -> f64 {
        self.graph.graph.set_value(self.graph.params, params);
        self.graph.graph.forward();
        self.graph.graph.scalar(self.graph.root)
    }

    /// Analytic gradient at the initial parameters.
    pub fn gradient(&mut self) -> Vec<f64> {
        let params = self.initial_params.clone();
        self.gradient_at(&params)
    }

    pub fn gradient_at(&mut self, params: &[f64]) -> Vec<f64> {
        self.graph.graph.set_value(self.graph.params, params);
        self.graph.graph.forward();
        self.graph.graph.backward(self.graph.root);
        self.graph.graph.adjoint(self.graph.params).to_vec()
    }
}

/// Train both encoders on an estimation-phase frame and return the channel
/// estimate, per-slot symbol decisions, and the loss trace.
///
/// With `restarts > 1` the whole fit is repeated from fresh initializations
/// and the run with the lowest reported loss wins; the objective itself is
/// the referee, no ground truth is consulted.
pub fn fit_block(
    frame: &Frame,
    constellation: &Constellation,
    cfg: &ViConfig,
    rng: &mut Rng,
) -> Result<BlockEstimate> {
    let restarts = cfg.restarts.max(1);
    let mut best: Option<BlockEstimate> = None;
    for _ in 0..restarts {
        let candidate = fit_block_once(frame, constellation, cfg, rng)?;
        let better = match &best {
            None => true,
            Some(b) => candidate.final_loss < b.final_loss,
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_block_once(
    frame: &Frame,
    constellation: &Constellation,
    cfg: &ViConfig,
    rng: &mut Rng,
) -> Result<BlockEstimate> {
    if frame.schedule.phase != Phase::Estimation {
        return Err(Error::domain("fit_block expects an estimation-phase frame"));
    }
    let n = frame.num_antennas();
    let k = frame.num_users();
    let rho2 = constellation.rho2();
    let sigma2_model = cfg.sigma2_model_for(frame.noise_var);

    let mut state = VIState::new(n, k, rho2, cfg, rng)?;
    let mut eg = ElboGraph::build(&state, frame, rho2, sigma2_model, cfg.weighting, cfg.mc_samples);

    let window = 20;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut components = cfg.trace_components.then(Vec::new);
    let mut converged = false;
    let mut ema_params = cfg.param_ema.map(|_| state.params.clone());

    while trace.len() < cfg.max_iters {
        let iter = trace.len();
        if cfg.kl_warmup_iters > 0 {
            let beta = ((iter + 1) as f64 / cfg.kl_warmup_iters as f64).min(1.0);
            eg.set_kl_scale(beta);
        }
        eg.refresh_noise(rng);
        eg.graph.set_value(eg.params, &state.params);
        eg.graph.forward();
        let loss = eg.graph.scalar(eg.root);
        if !loss.is_finite() {
            return Err(Error::Training {
                iteration: iter,
                trace,
            });
        }
        eg.graph.backward(eg.root);
        if let Some(half_life) = cfg.lr_half_life {
            state.adam.learning_rate =
                cfg.learning_rate / (1.0 + iter as f64 / half_life as f64);
        }
        state.adam.step(&mut state.params, eg.graph.adjoint(eg.params));
        if let (Some(decay), Some(ema)) = (cfg.param_ema, ema_params.as_mut()) {
            for (e, p) in ema.iter_mut().zip(&state.params) {
                *e = decay * *e + (1.0 - decay) * p;
            }
        }
        trace.push(loss);
        if let Some(comps) = components.as_mut() {
            comps.push([
                eg.graph.scalar(eg.parts[0]),
                eg.graph.scalar(eg.parts[1]),
                eg.graph.scalar(eg.parts[2]),
                loss,
            ]);
        }
        // Converged when the windowed moving average stops moving; the
        // warm-up iterations optimize a ramped objective and are excluded.
        if trace.len() >= cfg.kl_warmup_iters + 2 * window {
            let len = trace.len();
            let recent: f64 = trace[len - window..].iter().sum::<f64>() / window as f64;
            let previous: f64 = trace[len - 2 * window..len - window].iter().sum::<f64>() / window as f64;
            if (recent - previous).abs() / previous.abs().max(1e-12) < cfg.tolerance {
                converged = true;
                break;
            }
        }
    }

    // Posterior pass at the trained (EMA-smoothed) parameters.
    if let Some(ema) = ema_params {
        state.params = ema;
    }
    let mut posteriors = Vec::with_capacity(frame.num_slots());
    let mut per_slot_means = Vec::with_capacity(frame.num_slots());
    let mut col_weights = Vec::with_capacity(frame.num_slots());
    let mut x_hat = Vec::with_capacity(frame.num_slots());
    for t in 0..frame.num_slots() {
        let y = StackedRealVector::from_complex(&frame.rx_slot(t))?;
        let (px, ph) = state.posteriors(&y)?;
        per_slot_means.push(ph.mean().to_matrix(n, k)?);
        // Mean posterior variance of each column, for confidence weighting.
        let weights: Vec<f64> = (0..k)
            .map(|user| {
                let mut acc = 0.0;
                for row in 0..n {
                    acc += ph.var()[row * k + user] + ph.var()[n * k + row * k + user];
                }
                (2 * n) as f64 / acc
            })
            .collect();
        col_weights.push(weights);
        let mx = px.mean().to_complex();
        x_hat.push(mx.iter().map(|&v| constellation.demodulate_hard(v)).collect());
        posteriors.push((px, ph));
    }
    let h_hat = assemble_h(
        &per_slot_means,
        cfg.variance_weighted_assembly.then_some(col_weights.as_slice()),
        frame,
        cfg.coherent_assembly,
    )?;

    // Reported loss at the larger sample count.
    let mut final_loss = 0.0;
    for t in 0..frame.num_slots() {
        final_loss += state.elbo_loss(
            &frame.rx_slot(t),
            rho2,
            sigma2_model,
            cfg.weighting,
            cfg.mc_samples_report.max(1),
            rng,
        )?;
    }

    let iterations = trace.len();
    Ok(BlockEstimate {
        h_hat,
        x_hat,
        posteriors,
        loss_trace: trace,
        loss_components: components,
        final_loss,
        iterations,
        converged,
    })
}
