//! Desk-scale DDPM over flow latents: schedule, closed-form noising,
//! ε-prediction loss, ancestral sampling and Adam training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::encode;
use crate::error::{Error, Result};
use crate::flow::{add_flow_noise, FlowField, FlowSequence};
use crate::nn::{DenoiserDims, DenoiserGrads, Tensor2D, ToyDenoiser};
use crate::scalar::Real;

/// Linear-β schedule with cumulative products `ᾱ_t = Π (1 − β_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<S> {
    betas: Vec<S>,
    alpha_bar: Vec<S>,
}

impl<S: Real> NoiseSchedule<S> {
    pub fn from_betas(betas: Vec<S>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b > S::zero() && **b < S::one())) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len());
        let mut acc = S::one();
        for &b in &betas {
            acc *= S::one() - b;
            alpha_bar.push(acc);
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) || alpha_bar.iter().any(|a| !(*a > S::zero() && *a <= S::one())) {
            return Err(Error::Config("alpha_bar must be strictly decreasing in (0, 1]".into()));
        }
        Ok(Self { betas, alpha_bar })
    }

    pub fn linear(steps: usize, beta_start: S, beta_end: S) -> Result<Self> {
        let denom = S::from_usize_lossy(steps.saturating_sub(1).max(1));
        let betas = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * S::from_usize_lossy(i) / denom)
            .collect();
        Self::from_betas(betas)
    }

    /// 100 steps, β from 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        Self::linear(100, S::lit(1e-4), S::lit(0.02)).expect("default schedule is valid")
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::arg(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// `β_t`, 1-based.
    pub fn beta(&self, t: usize) -> S {
        self.betas[t - 1]
    }

    /// `ᾱ_t`, 1-based.
    pub fn alpha_bar(&self, t: usize) -> S {
        self.alpha_bar[t - 1]
    }

    pub fn alpha_bars(&self) -> &[S] {
        &self.alpha_bar
    }
}

fn normal<S: Real>(rng: &mut impl Rng) -> S {
    S::lit(rng.sample::<f64, _>(StandardNormal))
}

fn normal_vec<S: Real>(rng: &mut impl Rng, n: usize) -> Vec<S> {
    (0..n).map(|_| normal(rng)).collect()
}

/// `√ᾱ x0 + √(1−ᾱ) ε` for an explicit `ᾱ ∈ [0, 1]`.
pub fn diffuse_with<S: Real>(x0: &[S], alpha_bar: S, eps: &[S]) -> Vec<S> {
    let (a, b) = (alpha_bar.sqrt(), (S::one() - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect()
}

/// Closed-form noising of `x0` to step `t`. Returns `(x_t, ε)`.
pub fn forward_diffuse<S: Real>(x0: &[S], t: usize, sched: &NoiseSchedule<S>, seed: u64) -> Result<(Vec<S>, Vec<S>)> {
    sched.check(t)?;
    let eps = normal_vec(&mut ChaCha8Rng::seed_from_u64(seed), x0.len());
    Ok((diffuse_with(x0, sched.alpha_bar(t), &eps), eps))
}

/// Anything that predicts the injected noise.
pub trait NoisePredictor<S> {
    fn data_dim(&self) -> usize;
    fn predict(&self, x: &[S], t: usize, cond: Option<&Tensor2D<S>>) -> Result<Vec<S>>;
}

impl<S: Real> NoisePredictor<S> for ToyDenoiser<S> {
    fn data_dim(&self) -> usize {
        self.dims().data_dim
    }

    fn predict(&self, x: &[S], t: usize, cond: Option<&Tensor2D<S>>) -> Result<Vec<S>> {
        self.forward(x, t, cond)
    }
}

/// One drawn training term.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedSample<S> {
    pub index: usize,
    pub t: usize,
    pub eps: Vec<S>,
    pub x_t: Vec<S>,
}

/// Draws `t ~ U{1..T}` and `ε ~ N(0, I)` for each batch entry, in order.
pub fn draw_terms<S: Real>(batch: &[Vec<S>], sched: &NoiseSchedule<S>, rng: &mut impl Rng) -> Result<Vec<NoisedSample<S>>> {
    if batch.is_empty() {
        return Err(Error::arg("training batch is empty"));
    }
    Ok(batch
        .iter()
        .enumerate()
        .map(|(index, x0)| {
            let t = rng.gen_range(1..=sched.steps());
            let eps = normal_vec(rng, x0.len());
            let x_t = diffuse_with(x0, sched.alpha_bar(t), &eps);
            NoisedSample { index, t, eps, x_t }
        })
        .collect())
}

fn sq_err<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn cond_for<S>(conds: Option<&[Tensor2D<S>]>, i: usize) -> Option<&Tensor2D<S>> {
    conds.map(|c| &c[i])
}

/// `(1/B) Σ ‖ε − ε̂‖²` for any predictor.
pub fn loss_on_terms<S: Real, P: NoisePredictor<S>>(
    model: &P,
    terms: &[NoisedSample<S>],
    conds: Option<&[Tensor2D<S>]>,
) -> Result<S> {
    let mut total = S::zero();
    for term in terms {
        let pred = model.predict(&term.x_t, term.t, cond_for(conds, term.index))?;
        total += sq_err(&term.eps, &pred);
    }
    Ok(total / S::from_usize_lossy(terms.len().max(1)))
}

/// Loss and exact parameter gradients, accumulated in term order.
pub fn loss_and_grad_on_terms<S: Real>(
    model: &ToyDenoiser<S>,
    terms: &[NoisedSample<S>],
    conds: Option<&[Tensor2D<S>]>,
) -> Result<(S, DenoiserGrads<S>)> {
    let inv_b = S::one() / S::from_usize_lossy(terms.len().max(1));
    let mut loss = S::zero();
    let mut grads = DenoiserGrads {
        params: vec![S::zero(); model.params().len()],
        input: vec![S::zero(); model.dims().data_dim],
    };
    for term in terms {
        let cond = cond_for(conds, term.index);
        let pred = model.forward(&term.x_t, term.t, cond)?;
        loss += sq_err(&term.eps, &pred);
        let up: Vec<S> = pred
            .iter()
            .zip(&term.eps)
            .map(|(&p, &e)| S::two() * inv_b * (p - e))
            .collect();
        let g = model.backward(&term.x_t, term.t, cond, &up)?;
        for (a, b) in grads.params.iter_mut().zip(&g.params) {
            *a += *b;
        }
        for (a, b) in grads.input.iter_mut().zip(&g.input) {
            *a += *b;
        }
    }
    Ok((loss * inv_b, grads))
}

/// Seeded ε-prediction loss over `batch`.
pub fn training_loss_with<S: Real, P: NoisePredictor<S>>(
    model: &P,
    batch: &[Vec<S>],
    conds: Option<&[Tensor2D<S>]>,
    sched: &NoiseSchedule<S>,
    seed: u64,
) -> Result<S> {
    let terms = draw_terms(batch, sched, &mut ChaCha8Rng::seed_from_u64(seed))?;
    loss_on_terms(model, &terms, conds)
}

/// Seeded ε-prediction loss with gradients for the toy denoiser.
pub fn training_loss<S: Real>(
    model: &ToyDenoiser<S>,
    batch: &[Vec<S>],
    conds: Option<&[Tensor2D<S>]>,
    sched: &NoiseSchedule<S>,
    seed: u64,
) -> Result<(S, DenoiserGrads<S>)> {
    check_conds(batch.len(), conds)?;
    let terms = draw_terms(batch, sched, &mut ChaCha8Rng::seed_from_u64(seed))?;
    loss_and_grad_on_terms(model, &terms, conds)
}

fn check_conds<S>(n: usize, conds: Option<&[Tensor2D<S>]>) -> Result<()> {
    match conds {
        Some(c) if c.len() != n => Err(Error::dim(format!("{} conditions for {} examples", c.len(), n))),
        _ => Ok(()),
    }
}

/// Ancestral sampling from `t = T` down to 1. Returns every state,
/// `x_T` first and `x_0` last.
pub fn sample_trace<S: Real, P: NoisePredictor<S>>(
    model: &P,
    sched: &NoiseSchedule<S>,
    seed: u64,
    cond: Option<&Tensor2D<S>>,
) -> Result<Vec<Vec<S>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = model.data_dim();
    let mut x: Vec<S> = normal_vec(&mut rng, dim);
    let mut trace = vec![x.clone()];
    for t in (1..=sched.steps()).rev() {
        let eps = model.predict(&x, t, cond)?;
        if eps.len() != dim {
            return Err(Error::dim(format!("predictor returned {} values for dim {dim}", eps.len())));
        }
        let beta = sched.beta(t);
        let alpha = S::one() - beta;
        let coef = beta / (S::one() - sched.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = S::one() / alpha.sqrt();
        let sigma = beta.sqrt();
        x = x
            .iter()
            .zip(&eps)
            .map(|(&xi, &ei)| {
                let mean = (xi - coef * ei) * inv_sqrt_alpha;
                if t > 1 {
                    mean + sigma * normal::<S>(&mut rng)
                } else {
                    mean
                }
            })
            .collect();
        trace.push(x.clone());
    }
    Ok(trace)
}

pub fn sample<S: Real, P: NoisePredictor<S>>(
    model: &P,
    sched: &NoiseSchedule<S>,
    seed: u64,
    cond: Option<&Tensor2D<S>>,
) -> Result<Vec<S>> {
    Ok(sample_trace(model, sched, seed, cond)?.pop().expect("trace is non-empty"))
}

/// `count` independent samples; sample `i` uses seed stream `i`.
pub fn sample_many<S: Real, P: NoisePredictor<S>>(
    model: &P,
    sched: &NoiseSchedule<S>,
    count: usize,
    seed: u64,
    cond: Option<&Tensor2D<S>>,
) -> Result<Vec<Vec<S>>> {
    (0..count)
        .map(|i| sample(model, sched, sample_seed(seed, i), cond))
        .collect()
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<S> {
    cfg: AdamConfig,
    m: Vec<S>,
    v: Vec<S>,
    step: i32,
}

impl<S: Real> Adam<S> {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [S], grads: &[S]) {
        self.step += 1;
        let (b1, b2) = (S::lit(self.cfg.beta1), S::lit(self.cfg.beta2));
        let lr = S::lit(self.cfg.lr);
        let eps = S::lit(self.cfg.eps);
        let c1 = S::one() - b1.powi(self.step);
        let c2 = S::one() - b2.powi(self.step);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (S::one() - b1) * g;
            *v = b2 * *v + (S::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Trains in place; returns the per-step loss curve.
///
/// Each step draws `batch_size` examples with replacement, then noise terms,
/// from one seeded stream.
pub fn train<S: Real>(
    model: &mut ToyDenoiser<S>,
    dataset: &[Vec<S>],
    conds: Option<&[Tensor2D<S>]>,
    sched: &NoiseSchedule<S>,
    cfg: &TrainConfig,
) -> Result<Vec<S>> {
    if dataset.is_empty() {
        return Err(Error::arg("training dataset is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    check_conds(dataset.len(), conds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, model.params().len());
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.gen_range(0..dataset.len())).collect();
        let batch: Vec<Vec<S>> = picks.iter().map(|&i| dataset[i].clone()).collect();
        let batch_conds: Option<Vec<Tensor2D<S>>> = conds.map(|c| picks.iter().map(|&i| c[i].clone()).collect());
        let terms = draw_terms(&batch, sched, &mut rng)?;
        let (loss, grads) = loss_and_grad_on_terms(model, &terms, batch_conds.as_deref())?;
        if !loss.is_finite() || grads.params.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                loss: loss.as_f64(),
            });
        }
        adam.update(model.params_mut(), &grads.params);
        curve.push(loss);
    }
    Ok(curve)
}

/// Mean of the first and last `window` entries of a loss curve.
pub fn curve_endpoints<S: Real>(curve: &[S], window: usize) -> Option<(S, S)> {
    if curve.is_empty() {
        return None;
    }
    let w = window.clamp(1, curve.len());
    let mean = |s: &[S]| s.iter().copied().sum::<S>() / S::from_usize_lossy(s.len());
    Some((mean(&curve[..w]), mean(&curve[curve.len() - w..])))
}

/// Reference setup for the two-mode dataset: 4 frames of 8×8 flow encode to
/// a 2-value latent.
pub fn two_mode_reference() -> (DenoiserDims, TrainConfig) {
    let cfg = TrainConfig {
        steps: 2000,
        batch_size: 128,
        seed: 0,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
    };
    (DenoiserDims::new(2, 32, 16), cfg)
}

/// The two constant flow modes `(+1, 0)` and `(−1, 0)`.
pub fn two_mode_sequences<S: Real>(frames: usize, width: usize, height: usize) -> Result<[FlowSequence<S>; 2]> {
    let seq = |u: S| -> Result<FlowSequence<S>> {
        let f = FlowField::constant(width, height, u, S::zero());
        FlowSequence::from_frames(vec![f; frames])
    };
    Ok([seq(S::one())?, seq(-S::one())?])
}

/// Latent vectors of the two modes.
pub fn two_mode_latents<S: Real>(frames: usize, width: usize, height: usize) -> Result<[Vec<S>; 2]> {
    let [a, b] = two_mode_sequences(frames, width, height)?;
    Ok([encode(&a)?.into_values(), encode(&b)?.into_values()])
}

/// Latents of flow-noised copies of `seq`, one per seed offset.
pub fn noisy_condition_latents<S: Real>(seq: &FlowSequence<S>, sigma: S, copies: usize, seed: u64) -> Result<Vec<Vec<S>>> {
    (0..copies)
        .map(|i| Ok(encode(&add_flow_noise(seq, sigma, seed.wrapping_add(i as u64))?)?.into_values()))
        .collect()
}

/// Fraction of samples within `radius` (L2) of any mode.
pub fn mode_purity<S: Real>(samples: &[Vec<S>], modes: &[Vec<S>], radius: S) -> S {
    if samples.is_empty() {
        return S::zero();
    }
    let hits = samples
        .iter()
        .filter(|s| modes.iter().any(|m| sq_err(s, m).sqrt() < radius))
        .count();
    S::from_usize_lossy(hits) / S::from_usize_lossy(samples.len())
}
