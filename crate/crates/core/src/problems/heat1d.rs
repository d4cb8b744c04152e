//! Initial-condition inversion for `u_τ = c² u_ξξ` on `[0, 1]` with zero
//! boundary values, observed at `τ^max`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde_json::json;

use super::{assemble_bundle, relative_noise_sdev, ProblemBundle, Truth};
use crate::error::{Error, Result};
use crate::geometry::{Continuous1D, Geometry, Grid1D, KLExpansion, StepExpansion};
use crate::linalg::CsrMatrix;
use crate::model::ForwardModel;
use crate::pde::{TimeDependentLinearPde, TimeForm, TimeFormFn, TimeScheme};
use crate::samplers::SamplerKind;

/// Time points per `0.01` of simulated time when `n_tau` is not given.
pub const TIME_POINTS_PER_HUNDREDTH: usize = 225;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatVariant {
    /// Three-step expansion, truth `[0, 1, 0.5]`.
    Step3,
    /// Sine KL expansion with 20 modes, truth `g_custom`.
    Kl20,
}

impl FromStr for HeatVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step3" => Ok(HeatVariant::Step3),
            "kl20" => Ok(HeatVariant::Kl20),
            other => Err(Error::InvalidArgument(format!(
                "unknown heat1d variant '{other}' (expected step3 or kl20)"
            ))),
        }
    }
}

impl fmt::Display for HeatVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeatVariant::Step3 => "step3",
            HeatVariant::Kl20 => "kl20",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatObservation {
    Full,
    /// The first half of the grid nodes only.
    Half,
}

impl FromStr for HeatObservation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(HeatObservation::Full),
            "half" => Ok(HeatObservation::Half),
            other => Err(Error::InvalidArgument(format!(
                "unknown observation '{other}' (expected full or half)"
            ))),
        }
    }
}

impl fmt::Display for HeatObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeatObservation::Full => "full",
            HeatObservation::Half => "half",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Heat1dSpec {
    pub variant: HeatVariant,
    pub tau_max: f64,
    pub n_grid: usize,
    /// Number of time points including `τ = 0`; scales with `tau_max` when unset.
    pub n_tau: Option<usize>,
    pub c: f64,
    /// Defaults to 0.10 for `step3` and 0.05 for `kl20`.
    pub noise_level: Option<f64>,
    pub observation: HeatObservation,
    pub scheme: TimeScheme,
    pub seed: u64,
}

impl Default for Heat1dSpec {
    fn default() -> Self {
        Heat1dSpec {
            variant: HeatVariant::Step3,
            tau_max: 0.01,
            n_grid: 100,
            n_tau: None,
            c: 1.0,
            noise_level: None,
            observation: HeatObservation::Full,
            scheme: TimeScheme::ExplicitEuler,
            seed: 0,
        }
    }
}

impl Heat1dSpec {
    pub fn noise(&self) -> f64 {
        self.noise_level.unwrap_or(match self.variant {
            HeatVariant::Step3 => 0.10,
            HeatVariant::Kl20 => 0.05,
        })
    }

    pub fn time_points(&self) -> usize {
        self.n_tau
            .unwrap_or_else(|| ((TIME_POINTS_PER_HUNDREDTH as f64) * self.tau_max / 0.01).ceil().max(2.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau_max must be > 0, got {}", self.tau_max)));
        }
        if self.n_grid < 2 {
            return Err(Error::InvalidArgument(format!("n_grid must be ≥ 2, got {}", self.n_grid)));
        }
        if self.observation == HeatObservation::Half && self.n_grid < 4 {
            return Err(Error::InvalidArgument("half observation needs n_grid ≥ 4".into()));
        }
        if self.time_points() < 2 {
            return Err(Error::InvalidArgument("n_tau must be ≥ 2".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c must be > 0, got {}", self.c)));
        }
        let noise = self.noise();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument("noise_level must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// `g_custom(ξ) = (1/30)(1 − cos(2π(1−ξ)) + e^{−200(ξ−0.5)²} + e^{−200(ξ−0.8)²})`.
pub fn g_custom(xi: f64) -> f64 {
    (1.0 - (2.0 * PI * (1.0 - xi)).cos() + (-200.0 * (xi - 0.5).powi(2)).exp() + (-200.0 * (xi - 0.8).powi(2)).exp())
        / 30.0
}

/// Centred-difference `c² ∂²/∂ξ²` with zero Dirichlet ends on a uniform interior grid.
pub fn diffusion_operator(n: usize, h: f64, c: f64) -> CsrMatrix {
    let a = c * c / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, a));
        }
        t.push((i, i, -2.0 * a));
        if i + 1 < n {
            t.push((i, i + 1, a));
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

pub fn build_heat1d(spec: &Heat1dSpec) -> Result<ProblemBundle> {
    spec.validate()?;
    let n = spec.n_grid;
    let grid = Grid1D::interior(n, 0.0, 1.0)?;
    let h = 1.0 / (n as f64 + 1.0);
    let n_tau = spec.time_points();
    let dt = spec.tau_max / (n_tau as f64 - 1.0);
    if spec.scheme == TimeScheme::ExplicitEuler {
        let bound = h * h / (2.0 * spec.c * spec.c);
        if dt > bound {
            return Err(Error::Cfl { dt, bound });
        }
    }
    let time_steps: Vec<f64> = (0..n_tau)
        .map(|k| if k + 1 == n_tau { spec.tau_max } else { k as f64 * dt })
        .collect();

    let operator = diffusion_operator(n, h, spec.c);
    let form: TimeFormFn = Arc::new(move |g: &[f64], _tau| {
        Ok(TimeForm {
            operator: operator.clone(),
            rhs: vec![0.0; g.len()],
            initial: g.to_vec(),
        })
    });
    let grid_obs = match spec.observation {
        HeatObservation::Full => grid.clone(),
        HeatObservation::Half => grid.truncated(n / 2)?,
    };
    let pde = TimeDependentLinearPde::new(form, true, time_steps, grid.clone(), grid_obs.clone(), spec.scheme)?;

    let (domain, truth): (Arc<dyn Geometry>, Truth) = match spec.variant {
        HeatVariant::Step3 => {
            let geo = StepExpansion::new(grid.clone(), 3)?;
            let x = vec![0.0, 1.0, 0.5];
            let field = geo.par2fun(&x)?;
            (Arc::new(geo), Truth { parameter: Some(x), field })
        }
        HeatVariant::Kl20 => {
            let geo = KLExpansion::new(grid.clone(), 1.5, 10.0, 20)?;
            let field: Vec<f64> = grid.nodes().iter().map(|&xi| g_custom(xi)).collect();
            (Arc::new(geo), Truth { parameter: None, field })
        }
    };
    let range: Arc<dyn Geometry> = Arc::new(Continuous1D::new(grid_obs));
    let model = Arc::new(ForwardModel::time_dependent(pde, domain, range)?);

    let level = spec.noise();
    let options = json!({
        "variant": spec.variant.to_string(),
        "tau_max": spec.tau_max,
        "n_grid": n,
        "n_tau": n_tau,
        "c": spec.c,
        "noise_level": level,
        "observation": spec.observation.to_string(),
        "scheme": format!("{:?}", spec.scheme),
        "seed": spec.seed,
    });
    assemble_bundle(
        "heat1d",
        vec![("y".to_string(), model)],
        truth,
        |y| relative_noise_sdev(level, y),
        spec.seed,
        SamplerKind::Cwmh,
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_discretization() {
        let spec = Heat1dSpec::default();
        assert_eq!(spec.time_points(), 225);
        let b = build_heat1d(&spec).unwrap();
        assert_eq!(b.datasets[0].y_obs.len(), 100);
        assert_eq!(b.recommended, SamplerKind::Cwmh);
        let spec = Heat1dSpec {
            tau_max: 0.02,
            ..spec
        };
        assert_eq!(spec.time_points(), 450);
    }

    #[test]
    fn g_custom_midpoint() {
        let expect = (3.0 + (-18.0f64).exp()) / 30.0;
        assert!((g_custom(0.5) - expect).abs() < 1e-15);
    }

    #[test]
    fn step_data_smoothed_with_single_interior_peak() {
        let spec = Heat1dSpec {
            tau_max: 0.02,
            noise_level: Some(0.0),
            ..Heat1dSpec::default()
        };
        let b = build_heat1d(&spec).unwrap();
        let y = &b.datasets[0].y_exact;
        assert_eq!(&b.datasets[0].y_obs, y);
        let max = y.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max < 1.0);
        assert!(y[0].abs() < 0.05 && y[y.len() - 1].abs() < 0.05);
        let rises = y.windows(2).filter(|w| w[1] > w[0]).count();
        let peak = y.iter().position(|&v| v == max).unwrap();
        assert_eq!(rises, peak, "monotone up to the peak and down after");
    }

    #[test]
    fn cfl_violation_rejected() {
        let spec = Heat1dSpec {
            n_tau: Some(20),
            ..Heat1dSpec::default()
        };
        assert!(matches!(build_heat1d(&spec), Err(Error::Cfl { .. })));
        let implicit = Heat1dSpec {
            n_tau: Some(20),
            scheme: TimeScheme::ImplicitEuler,
            ..Heat1dSpec::default()
        };
        assert!(build_heat1d(&implicit).is_ok());
    }

    #[test]
    fn half_observation_uses_first_half() {
        let spec = Heat1dSpec {
            observation: HeatObservation::Half,
            variant: HeatVariant::Kl20,
            noise_level: Some(0.0),
            ..Heat1dSpec::default()
        };
        let half = build_heat1d(&spec).unwrap();
        let full = build_heat1d(&Heat1dSpec {
            observation: HeatObservation::Full,
            ..spec
        })
        .unwrap();
        assert_eq!(half.datasets[0].y_exact[..], full.datasets[0].y_exact[..50]);
    }
}
