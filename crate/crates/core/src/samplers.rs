//! Adaptive Metropolis-type samplers: random-walk MH, component-wise MH and pCN.
//!
//! During burn-in the proposal scale is tuned once per window of
//! [`ADAPT_WINDOW`] iterations by `s ← s·exp((â − target)/√w)`, where `â` is the
//! window's acceptance rate and `w` the window index. The scale is frozen for
//! every kept sample.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map};

use crate::distributions::{Posterior, Target};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::samples::{SampleMeta, Samples};

pub const ADAPT_WINDOW: usize = 100;
pub const RNG_ID: &str = "chacha20";
pub const SUPPORTED_SAMPLERS: [&str; 3] = ["mh", "cwmh", "pcn"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Mh,
    Cwmh,
    Pcn,
}

impl SamplerKind {
    pub fn id(self) -> &'static str {
        match self {
            SamplerKind::Mh => "mh",
            SamplerKind::Cwmh => "cwmh",
            SamplerKind::Pcn => "pcn",
        }
    }

    pub fn default_target(self) -> f64 {
        match self {
            SamplerKind::Mh => 0.234,
            SamplerKind::Cwmh => 0.23,
            SamplerKind::Pcn => 0.30,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mh" => Ok(SamplerKind::Mh),
            "cwmh" => Ok(SamplerKind::Cwmh),
            "pcn" => Ok(SamplerKind::Pcn),
            other => Err(Error::InvalidArgument(format!(
                "unsupported sampler '{other}' (supported: {})",
                SUPPORTED_SAMPLERS.join(", ")
            ))),
        }
    }
}

/// Snapshot passed to a progress hook.
#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub iteration: usize,
    pub total: usize,
    pub burn_in: bool,
    pub acceptance: f64,
}

pub type ProgressFn = Arc<dyn Fn(Progress) + Send + Sync>;

#[derive(Clone)]
pub struct ChainConfig {
    pub n_samples: usize,
    /// Defaults to `n_samples / 5`.
    pub n_burn: Option<usize>,
    pub seed: u64,
    /// Defaults to the zero vector.
    pub x0: Option<Vec<f64>>,
    /// Defaults to the sampler's own target.
    pub target_acceptance: Option<f64>,
    /// Defaults to `2.38/√d` (MH), 1 (CWMH) or 0.1 (pCN β).
    pub initial_scale: Option<f64>,
    pub adapt: bool,
    /// Hook and its period in iterations.
    pub progress: Option<(usize, ProgressFn)>,
}

impl fmt::Debug for ChainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainConfig")
            .field("n_samples", &self.n_samples)
            .field("n_burn", &self.n_burn)
            .field("seed", &self.seed)
            .field("target_acceptance", &self.target_acceptance)
            .field("initial_scale", &self.initial_scale)
            .field("adapt", &self.adapt)
            .finish()
    }
}

impl ChainConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        ChainConfig {
            n_samples,
            n_burn: None,
            seed,
            x0: None,
            target_acceptance: None,
            initial_scale: None,
            adapt: true,
            progress: None,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.n_burn.unwrap_or(self.n_samples / 5)
    }

    fn validate(&self, dim: usize, kind: SamplerKind) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be > 0".into()));
        }
        let target = self.target_acceptance.unwrap_or(kind.default_target());
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target_acceptance must be in (0, 1), got {target}"
            )));
        }
        if let Some(s) = self.initial_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("initial_scale must be > 0, got {s}")));
            }
        }
        if let Some(x0) = &self.x0 {
            crate::error::check_dim("initial point", dim, x0.len())?;
        }
        Ok(())
    }
}

/// Kept samples and adaptation bookkeeping of one chain.
#[derive(Clone, Debug)]
pub struct ChainResult {
    pub sampler: SamplerKind,
    pub n_dim: usize,
    /// Kept samples, one `n_dim` block per sample.
    pub samples: Vec<f64>,
    pub n_burn: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    /// Acceptance over the kept samples.
    pub acceptance_rate: f64,
    pub burn_in_acceptance: f64,
    /// Acceptance of every window, burn-in and kept phases alike.
    pub window_acceptance: Vec<f64>,
    /// Per-coordinate acceptance over the kept sweeps (CWMH only).
    pub component_acceptance: Vec<f64>,
    /// Proposal scale(s) in force for the kept samples.
    pub final_scale: Vec<f64>,
}

impl ChainResult {
    pub fn n_samples(&self) -> usize {
        self.samples.len() / self.n_dim
    }

    pub fn into_samples(self, geometry: Arc<dyn Geometry>) -> Result<Samples> {
        let mut extra = Map::new();
        extra.insert("n_burn".into(), json!(self.n_burn));
        extra.insert("target_acceptance".into(), json!(self.target_acceptance));
        extra.insert("burn_in_acceptance".into(), json!(self.burn_in_acceptance));
        extra.insert("final_scale".into(), json!(self.final_scale));
        if !self.component_acceptance.is_empty() {
            extra.insert("component_acceptance".into(), json!(self.component_acceptance));
        }
        let meta = SampleMeta {
            sampler: self.sampler.id().to_string(),
            seed: Some(self.seed),
            rng: Some(RNG_ID.to_string()),
            acceptance_rate: Some(self.acceptance_rate),
            extra,
        };
        Ok(Samples::new(self.samples, self.n_dim, geometry)?.with_meta(meta))
    }
}

/// Robbins–Monro tuner for one or more scales.
struct Adapter {
    target: f64,
    window: usize,
    accepted: Vec<usize>,
    proposed: Vec<usize>,
}

impl Adapter {
    fn new(target: f64, n: usize) -> Self {
        Adapter {
            target,
            window: 0,
            accepted: vec![0; n],
            proposed: vec![0; n],
        }
    }

    fn record(&mut self, i: usize, accepted: bool) {
        self.proposed[i] += 1;
        self.accepted[i] += accepted as usize;
    }

    /// Closes a window, returning its pooled acceptance and updating `scales`.
    fn close_window(&mut self, scales: &mut [f64], adapt: bool, cap: Option<f64>) -> f64 {
        self.window += 1;
        let total: usize = self.proposed.iter().sum();
        let pooled = self.accepted.iter().sum::<usize>() as f64 / total.max(1) as f64;
        if adapt {
            let step = 1.0 / (self.window as f64).sqrt();
            for (i, s) in scales.iter_mut().enumerate() {
                let rate = self.accepted[i] as f64 / self.proposed[i].max(1) as f64;
                *s *= ((rate - self.target) * step).exp();
                if let Some(c) = cap {
                    *s = s.min(c);
                }
            }
        }
        self.accepted.iter_mut().for_each(|a| *a = 0);
        self.proposed.iter_mut().for_each(|p| *p = 0);
        pooled
    }
}

struct Bookkeeping {
    n_burn: usize,
    total: usize,
    kept_accepted: Vec<usize>,
    kept_proposed: Vec<usize>,
    burn_accepted: usize,
    burn_proposed: usize,
    windows: Vec<f64>,
    samples: Vec<f64>,
}

impl Bookkeeping {
    fn new(config: &ChainConfig, dim: usize, n_scales: usize) -> Self {
        let n_burn = config.burn_in();
        Bookkeeping {
            n_burn,
            total: n_burn + config.n_samples,
            kept_accepted: vec![0; n_scales],
            kept_proposed: vec![0; n_scales],
            burn_accepted: 0,
            burn_proposed: 0,
            windows: Vec::new(),
            samples: Vec::with_capacity(config.n_samples * dim),
        }
    }

    fn record(&mut self, it: usize, i: usize, accepted: bool) {
        if it < self.n_burn {
            self.burn_proposed += 1;
            self.burn_accepted += accepted as usize;
        } else {
            self.kept_proposed[i] += 1;
            self.kept_accepted[i] += accepted as usize;
        }
    }

    fn finish(self, kind: SamplerKind, config: &ChainConfig, dim: usize, target: f64, scales: Vec<f64>) -> ChainResult {
        let kept_total: usize = self.kept_proposed.iter().sum();
        let component_acceptance = if kind == SamplerKind::Cwmh {
            self.kept_accepted
                .iter()
                .zip(&self.kept_proposed)
                .map(|(a, p)| *a as f64 / (*p).max(1) as f64)
                .collect()
        } else {
            Vec::new()
        };
        ChainResult {
            sampler: kind,
            n_dim: dim,
            samples: self.samples,
            n_burn: self.n_burn,
            seed: config.seed,
            target_acceptance: target,
            acceptance_rate: self.kept_accepted.iter().sum::<usize>() as f64 / kept_total.max(1) as f64,
            burn_in_acceptance: self.burn_accepted as f64 / self.burn_proposed.max(1) as f64,
            window_acceptance: self.windows,
            component_acceptance,
            final_scale: scales,
        }
    }
}

fn report(config: &ChainConfig, it: usize, book: &Bookkeeping) {
    if let Some((every, hook)) = &config.progress {
        if *every > 0 && (it + 1) % every == 0 {
            let burn_in = it < book.n_burn;
            let (a, p) = if burn_in {
                (book.burn_accepted, book.burn_proposed)
            } else {
                (book.kept_accepted.iter().sum(), book.kept_proposed.iter().sum())
            };
            hook(Progress {
                iteration: it + 1,
                total: book.total,
                burn_in,
                acceptance: a as f64 / p.max(1) as f64,
            });
        }
    }
}

fn accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio || log_ratio == f64::INFINITY
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Runs the chosen sampler.
pub fn sample<T: Target + ?Sized>(kind: SamplerKind, target: &T, config: &ChainConfig) -> Result<ChainResult> {
    match kind {
        SamplerKind::Mh => mh_sample(target, config),
        SamplerKind::Cwmh => cwmh_sample(target, config),
        SamplerKind::Pcn => pcn_sample(target, config),
    }
}

/// Gaussian random-walk Metropolis–Hastings.
pub fn mh_sample<T: Target + ?Sized>(target: &T, config: &ChainConfig) -> Result<ChainResult> {
    let kind = SamplerKind::Mh;
    let d = target.dim();
    config.validate(d, kind)?;
    let goal = config.target_acceptance.unwrap_or(kind.default_target());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut x = config.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut lp = target.logpdf(&x)?;
    if !lp.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut scale = [config.initial_scale.unwrap_or(2.38 / (d as f64).sqrt())];
    let mut book = Bookkeeping::new(config, d, 1);
    let mut adapter = Adapter::new(goal, 1);
    let mut prop = vec![0.0; d];
    for it in 0..book.total {
        for (p, xi) in prop.iter_mut().zip(&x) {
            *p = xi + scale[0] * normal(&mut rng);
        }
        let lp_new = target.logpdf(&prop)?;
        let ok = accept(&mut rng, lp_new - lp);
        if ok {
            x.copy_from_slice(&prop);
            lp = lp_new;
        }
        adapter.record(0, ok);
        book.record(it, 0, ok);
        if (it + 1) % ADAPT_WINDOW == 0 {
            let adapt = config.adapt && it < book.n_burn;
            book.windows.push(adapter.close_window(&mut scale, adapt, None));
        }
        if it >= book.n_burn {
            book.samples.extend_from_slice(&x);
        }
        report(config, it, &book);
    }
    Ok(book.finish(kind, config, d, goal, scale.to_vec()))
}

/// Component-wise MH; one sweep over all coordinates yields one sample.
pub fn cwmh_sample<T: Target + ?Sized>(target: &T, config: &ChainConfig) -> Result<ChainResult> {
    let kind = SamplerKind::Cwmh;
    let d = target.dim();
    config.validate(d, kind)?;
    let goal = config.target_acceptance.unwrap_or(kind.default_target());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut x = config.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut lp = target.logpdf(&x)?;
    if !lp.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut scales = vec![config.initial_scale.unwrap_or(1.0); d];
    let mut book = Bookkeeping::new(config, d, d);
    let mut adapter = Adapter::new(goal, d);
    for it in 0..book.total {
        for i in 0..d {
            let old = x[i];
            x[i] = old + scales[i] * normal(&mut rng);
            let lp_new = target.logpdf(&x)?;
            let ok = accept(&mut rng, lp_new - lp);
            if ok {
                lp = lp_new;
            } else {
                x[i] = old;
            }
            adapter.record(i, ok);
            book.record(it, i, ok);
        }
        if (it + 1) % ADAPT_WINDOW == 0 {
            let adapt = config.adapt && it < book.n_burn;
            book.windows.push(adapter.close_window(&mut scales, adapt, None));
        }
        if it >= book.n_burn {
            book.samples.extend_from_slice(&x);
        }
        report(config, it, &book);
    }
    Ok(book.finish(kind, config, d, goal, scales))
}

/// Preconditioned Crank–Nicolson for standard Gaussian priors.
///
/// The proposal `√(1−β²) x + β ξ` is reversible with respect to the prior, so
/// acceptance involves the likelihood ratio only.
pub fn pcn_sample<T: Target + ?Sized>(target: &T, config: &ChainConfig) -> Result<ChainResult> {
    let kind = SamplerKind::Pcn;
    if !target.has_standard_prior() {
        return Err(Error::PcnPrior);
    }
    let d = target.dim();
    config.validate(d, kind)?;
    let goal = config.target_acceptance.unwrap_or(kind.default_target());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut x = config.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut ll = target.loglik(&x)?;
    if !ll.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut beta = [config.initial_scale.unwrap_or(0.1).min(1.0)];
    let mut book = Bookkeeping::new(config, d, 1);
    let mut adapter = Adapter::new(goal, 1);
    let mut prop = vec![0.0; d];
    for it in 0..book.total {
        let b = beta[0];
        let keep = (1.0 - b * b).max(0.0).sqrt();
        for (p, xi) in prop.iter_mut().zip(&x) {
            *p = keep * xi + b * normal(&mut rng);
        }
        let ll_new = target.loglik(&prop)?;
        let ok = accept(&mut rng, ll_new - ll);
        if ok {
            x.copy_from_slice(&prop);
            ll = ll_new;
        }
        adapter.record(0, ok);
        book.record(it, 0, ok);
        if (it + 1) % ADAPT_WINDOW == 0 {
            let adapt = config.adapt && it < book.n_burn;
            book.windows.push(adapter.close_window(&mut beta, adapt, Some(1.0)));
        }
        if it >= book.n_burn {
            book.samples.extend_from_slice(&x);
        }
        report(config, it, &book);
    }
    Ok(book.finish(kind, config, d, goal, beta.to_vec()))
}

/// Independent chains on separate threads with seeds `seed, seed+1, ...`.
///
/// Each chain samples its own [`Posterior::clone_for_thread`] copy.
pub fn sample_chains(kind: SamplerKind, posterior: &Posterior, config: &ChainConfig, chains: usize) -> Result<Vec<ChainResult>> {
    if chains == 0 {
        return Err(Error::InvalidArgument("chains must be ≥ 1".into()));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| {
                let post = posterior.clone_for_thread();
                let mut cfg = config.clone();
                cfg.seed = config.seed.wrapping_add(c as u64);
                scope.spawn(move || sample(kind, &post, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}
