//! One-dimensional photoacoustic tomography.
//!
//! The initial pressure `g` on `[0, 1]` propagates by `u_ττ = u_ξξ` on the
//! real line with zero initial velocity. Sensors at `ξ = 0` (and `ξ = 1` for
//! full data) record `u` at times `i/f`, `i = 1..m`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use super::{assemble_bundle, ProblemBundle, Truth};
use crate::distributions::{Bindings, GaussianIID};
use crate::error::{Error, Result};
use crate::geometry::{build_matern_kl, Continuous1D, Continuous2D, Geometry, Grid1D, Grid2D, MapKind, Mapped, Nodal};
use crate::model::{BlackBoxFn, BlackBoxInput, ForwardModel};
use crate::pde::interpolation_weights;
use crate::samplers::SamplerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatData {
    /// Both sensors.
    Full,
    /// The left sensor only.
    Partial,
}

impl FromStr for PatData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PatData::Full),
            "partial" => Ok(PatData::Partial),
            other => Err(Error::InvalidArgument(format!(
                "unknown PAT data mode '{other}' (expected full or partial)"
            ))),
        }
    }
}

impl fmt::Display for PatData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatData::Full => "full",
            PatData::Partial => "partial",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatTruth {
    /// A fixed-seed draw from the scaled KL prior.
    PriorDraw,
    /// Two Gaussian bumps, see [`two_bump`].
    TwoBump,
}

impl FromStr for PatTruth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior_draw" => Ok(PatTruth::PriorDraw),
            "two_bump" => Ok(PatTruth::TwoBump),
            other => Err(Error::InvalidArgument(format!(
                "unknown PAT truth '{other}' (expected prior_draw or two_bump)"
            ))),
        }
    }
}

impl fmt::Display for PatTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatTruth::PriorDraw => "prior_draw",
            PatTruth::TwoBump => "two_bump",
        })
    }
}

/// `10 exp(−(ξ−0.3)²/(2·0.05²)) + 6 exp(−(ξ−0.7)²/(2·0.08²))`.
pub fn two_bump(xi: f64) -> f64 {
    10.0 * (-(xi - 0.3).powi(2) / (2.0 * 0.05f64.powi(2))).exp()
        + 6.0 * (-(xi - 0.7).powi(2) / (2.0 * 0.08f64.powi(2))).exp()
}

/// Leapfrog solver for `u_ττ = u_ξξ` with zero velocity on an enlarged interval.
///
/// The initial pressure is interpolated linearly from its own grid and
/// extended by zero. The interval ends are held at zero; waves from `[0, 1]`
/// cannot reach them before `τ = 1` when the interval contains `[−1, 2]`.
#[derive(Clone, Debug)]
pub struct WaveSolver {
    n_fine: usize,
    ratio_sq: f64,
    dt: f64,
    n_steps: usize,
    /// Fine node, then the interpolation stencil on the pressure grid.
    inject: Vec<(usize, usize, usize, f64)>,
    n_g: usize,
    sensors: Vec<(usize, usize, f64)>,
    times: Vec<f64>,
}

impl WaveSolver {
    pub fn new(g_grid: &Grid1D, sensors: &[f64], times: &[f64], interval: (f64, f64), dx: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0) {
            return Err(Error::InvalidArgument("dx and dt must be > 0".into()));
        }
        if dt > dx {
            return Err(Error::Cfl { dt, bound: dx });
        }
        let (lo, hi) = interval;
        let cells = ((hi - lo) / dx).round() as usize;
        if cells < 2 || ((hi - lo) / dx - cells as f64).abs() > 1e-9 {
            return Err(Error::InvalidArgument("interval length must be a multiple of dx".into()));
        }
        let fine: Vec<f64> = (0..=cells).map(|j| lo + j as f64 * dx).collect();
        let (g_lo, g_hi) = (g_grid.nodes()[0], g_grid.nodes()[g_grid.len() - 1]);
        let inside: Vec<usize> = (0..=cells).filter(|&j| fine[j] >= g_lo - 1e-12 && fine[j] <= g_hi + 1e-12).collect();
        let targets: Vec<f64> = inside.iter().map(|&j| fine[j].clamp(g_lo, g_hi)).collect();
        let inject = interpolation_weights(g_grid.nodes(), &targets)?
            .into_iter()
            .zip(&inside)
            .map(|((a, b, w), &j)| (j, a, b, w))
            .collect();
        let sensors = interpolation_weights(&fine, sensors)?;
        let t_max = times.iter().cloned().fold(0.0, f64::max);
        if times.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidArgument("observation times must be ≥ 0".into()));
        }
        let n_steps = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
        Ok(WaveSolver {
            n_fine: cells + 1,
            ratio_sq: (dt / dx).powi(2),
            dt,
            n_steps,
            inject,
            n_g: g_grid.len(),
            sensors,
            times: times.to_vec(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.sensors.len() * self.times.len()
    }

    /// Sensor traces `[sensor 0 at all times; sensor 1 at all times; ...]`.
    pub fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_dim("initial pressure", self.n_g, g.len())?;
        let n = self.n_fine;
        let mut prev = vec![0.0; n];
        for &(j, a, b, w) in &self.inject {
            prev[j] = (1.0 - w) * g[a] + w * g[b];
        }
        let record = |u: &[f64], traces: &mut Vec<Vec<f64>>| {
            for (s, &(a, b, w)) in self.sensors.iter().enumerate() {
                traces[s].push((1.0 - w) * u[a] + w * u[b]);
            }
        };
        let mut traces = vec![Vec::with_capacity(self.n_steps + 1); self.sensors.len()];
        record(&prev, &mut traces);
        let r2 = self.ratio_sq;
        // Fine nodes that can be nonzero grow by one cell per step from the support of g.
        let (first, last) = match (self.inject.first(), self.inject.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => (1, 0),
        };
        let span = |step: usize| (first.saturating_sub(step).max(1), (last + step).min(n - 2));
        let mut cur = vec![0.0; n];
        let (lo, hi) = span(1);
        for j in lo..=hi {
            cur[j] = prev[j] + 0.5 * r2 * (prev[j + 1] - 2.0 * prev[j] + prev[j - 1]);
        }
        if self.n_steps >= 1 {
            record(&cur, &mut traces);
        }
        let mut next = vec![0.0; n];
        for step in 2..=self.n_steps {
            let (lo, hi) = span(step);
            let stencil = cur[lo - 1..=hi + 1].windows(3);
            for ((out, p), c) in next[lo..=hi].iter_mut().zip(&prev[lo..=hi]).zip(stencil) {
                *out = 2.0 * c[1] - p + r2 * (c[2] - 2.0 * c[1] + c[0]);
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            record(&cur, &mut traces);
        }
        let mut out = Vec::with_capacity(self.n_obs());
        for trace in &traces {
            for &t in &self.times {
                let s = t / self.dt;
                let k = (s.floor() as usize).min(self.n_steps);
                let frac = s - k as f64;
                let v = if frac > 1e-9 && k < self.n_steps {
                    (1.0 - frac) * trace[k] + frac * trace[k + 1]
                } else {
                    trace[k]
                };
                out.push(v);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct PatSpec {
    pub data: PatData,
    pub n_g: usize,
    pub n_kl: usize,
    pub length_scale: f64,
    pub smoothness: f64,
    pub scale: f64,
    /// Absolute noise standard deviation.
    pub s_noise: f64,
    /// Measurement frequency `f`.
    pub frequency: f64,
    /// Snapshots per sensor `m`.
    pub n_times: usize,
    pub truth: PatTruth,
    pub seed: u64,
    pub truth_seed: u64,
}

impl Default for PatSpec {
    fn default() -> Self {
        PatSpec {
            data: PatData::Full,
            n_g: 121,
            n_kl: 100,
            length_scale: 0.1,
            smoothness: 0.75,
            scale: 15.0,
            s_noise: 0.125,
            frequency: 250.0,
            n_times: 250,
            truth: PatTruth::PriorDraw,
            seed: 0,
            truth_seed: 1,
        }
    }
}

/// Fine-grid spacing and time step of the leapfrog solver.
pub const PAT_DX: f64 = 1.0 / 500.0;

impl PatSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_g < 2 {
            return Err(Error::InvalidArgument(format!("n_g must be ≥ 2, got {}", self.n_g)));
        }
        if self.n_kl == 0 || self.n_kl > self.n_g {
            return Err(Error::InvalidArgument(format!("n_kl must be in 1..={}, got {}", self.n_g, self.n_kl)));
        }
        if !(self.length_scale > 0.0) || !(self.smoothness > 0.0) {
            return Err(Error::InvalidArgument("length_scale and smoothness must be > 0".into()));
        }
        if !(self.scale != 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument("scale must be finite and nonzero".into()));
        }
        if !(self.s_noise >= 0.0 && self.s_noise.is_finite()) {
            return Err(Error::InvalidArgument("s_noise must be ≥ 0".into()));
        }
        if !(self.frequency > 0.0) || self.n_times < 2 {
            return Err(Error::InvalidArgument("frequency must be > 0 and n_times ≥ 2".into()));
        }
        if self.n_times as f64 / self.frequency > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(
                "observation window n_times/frequency must not exceed 1".into(),
            ));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_times).map(|i| i as f64 / self.frequency).collect()
    }
}

/// Black-box PAT forward model over `domain`, whose function space is the pressure grid.
pub fn pat_model(spec: &PatSpec, grid: &Grid1D, domain: Arc<dyn Geometry>) -> Result<ForwardModel> {
    let times = spec.times();
    let sensors: Vec<f64> = match spec.data {
        PatData::Full => vec![0.0, 1.0],
        PatData::Partial => vec![0.0],
    };
    let solver = Arc::new(WaveSolver::new(grid, &sensors, &times, (-1.0, 2.0), PAT_DX, PAT_DX)?);
    let time_grid = Grid1D::with_bounds(times, 0.0, spec.n_times as f64 / spec.frequency)?;
    let range: Arc<dyn Geometry> = match spec.data {
        PatData::Full => Arc::new(Continuous2D::new(Grid2D::new(time_grid, Grid1D::new(sensors)?))),
        PatData::Partial => Arc::new(Continuous1D::new(time_grid)),
    };
    let f: BlackBoxFn = Arc::new(move |g: &[f64]| solver.solve(g));
    Ok(ForwardModel::black_box(f, BlackBoxInput::FunctionValues, domain, range))
}

pub fn build_pat(spec: &PatSpec) -> Result<ProblemBundle> {
    spec.validate()?;
    let grid = Grid1D::uniform(spec.n_g, 0.0, 1.0)?;
    let kl = build_matern_kl(Nodal::on_grid(grid.clone()), spec.length_scale, spec.smoothness, spec.n_kl)?;
    let domain: Arc<dyn Geometry> = Arc::new(Mapped::new(Arc::new(kl), MapKind::Scale(spec.scale))?);
    let model = Arc::new(pat_model(spec, &grid, domain.clone())?);
    let truth = match spec.truth {
        PatTruth::PriorDraw => {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.truth_seed);
            let draw = GaussianIID::standard("x", domain.clone()).sample(&mut rng, 1, &Bindings::new())?;
            let x = draw.sample(0).to_vec();
            let field = domain.par2fun(&x)?;
            Truth {
                parameter: Some(x),
                field,
            }
        }
        PatTruth::TwoBump => Truth {
            parameter: None,
            field: grid.nodes().iter().map(|&xi| two_bump(xi)).collect(),
        },
    };
    let options = json!({
        "data": spec.data.to_string(),
        "n_g": spec.n_g,
        "n_kl": spec.n_kl,
        "length_scale": spec.length_scale,
        "smoothness": spec.smoothness,
        "scale": spec.scale,
        "s_noise": spec.s_noise,
        "frequency": spec.frequency,
        "n_times": spec.n_times,
        "truth": spec.truth.to_string(),
        "seed": spec.seed,
        "truth_seed": spec.truth_seed,
    });
    let s = spec.s_noise;
    assemble_bundle(
        "pat",
        vec![("y".to_string(), model)],
        truth,
        |_| s,
        spec.seed,
        SamplerKind::Pcn,
        options,
    )
}
