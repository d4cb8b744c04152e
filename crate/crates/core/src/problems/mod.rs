//! Ready-made inverse problems: heat 1D, Poisson 2D, EIT and PAT.
//!
//! Each builder returns a [`ProblemBundle`] holding the forward model(s), the
//! standard Gaussian prior, the synthetic truth and data, and the posterior
//! obtained by conditioning the joint density on the data.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use crate::distributions::{Bindings, GaussianIID, JointDensity, Posterior};
use crate::error::Result;
use crate::geometry::Geometry;
use crate::linalg::norm2;
use crate::model::ForwardModel;
use crate::samplers::SamplerKind;

pub mod eit;
pub mod heat1d;
pub mod pat;
pub mod poisson2d;

pub use eit::{build_eit, EitSpec, EitTruth};
pub use heat1d::{build_heat1d, Heat1dSpec, HeatObservation, HeatVariant};
pub use pat::{build_pat, PatData, PatSpec, PatTruth, WaveSolver};
pub use poisson2d::{build_poisson2d, Poisson2dSpec};

/// Likelihood standard deviation used when the data are noise free, relative
/// to the RMS of the exact data.
pub const NOISE_FREE_SDEV_FRACTION: f64 = 1e-3;

/// `level · ‖y‖₂ / √m`.
pub fn relative_noise_sdev(level: f64, y_exact: &[f64]) -> f64 {
    level * norm2(y_exact) / (y_exact.len() as f64).sqrt()
}

/// `y + s ξ`, or an exact copy when `s = 0`.
pub fn add_noise<R: Rng>(rng: &mut R, y_exact: &[f64], s_noise: f64) -> Vec<f64> {
    if s_noise == 0.0 {
        return y_exact.to_vec();
    }
    y_exact
        .iter()
        .map(|v| v + s_noise * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// The exact field (and coefficients, when the truth lies in the prior's range).
#[derive(Clone, Debug)]
pub struct Truth {
    pub parameter: Option<Vec<f64>>,
    pub field: Vec<f64>,
}

/// One observed data set and the model predicting it.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub model: Arc<ForwardModel>,
    pub y_exact: Vec<f64>,
    pub y_obs: Vec<f64>,
    /// Standard deviation of the noise actually added.
    pub s_noise: f64,
    /// Standard deviation used by the likelihood.
    pub sdev: f64,
}

#[derive(Clone, Debug)]
pub struct ProblemBundle {
    pub name: &'static str,
    pub prior: GaussianIID,
    pub datasets: Vec<Dataset>,
    pub joint: JointDensity,
    pub posterior: Posterior,
    pub truth: Truth,
    pub recommended: SamplerKind,
    /// Problem options as JSON, for run summaries.
    pub options: Value,
}

impl ProblemBundle {
    pub fn domain_geometry(&self) -> &Arc<dyn Geometry> {
        self.prior.geometry()
    }

    pub fn models(&self) -> Vec<Arc<ForwardModel>> {
        self.datasets.iter().map(|d| d.model.clone()).collect()
    }
}

/// Synthesizes data for each model and conditions `x ~ N(0, I)` on it.
///
/// `noise` maps each exact data vector to the noise standard deviation.
/// Noise draws come from one ChaCha20 stream seeded with `seed`, consumed
/// in model order.
pub(crate) fn assemble_bundle(
    name: &'static str,
    models: Vec<(String, Arc<ForwardModel>)>,
    truth: Truth,
    noise: impl Fn(&[f64]) -> f64,
    seed: u64,
    recommended: SamplerKind,
    options: Value,
) -> Result<ProblemBundle> {
    let domain = models[0].1.domain_geometry().clone();
    let prior = GaussianIID::standard("x", domain);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut datasets = Vec::with_capacity(models.len());
    for (label, model) in models {
        let y_exact = model.forward_function(&truth.field)?;
        let s_noise = noise(&y_exact);
        let y_obs = add_noise(&mut rng, &y_exact, s_noise);
        let sdev = if s_noise > 0.0 {
            s_noise
        } else {
            let rms = norm2(&y_exact) / (y_exact.len() as f64).sqrt();
            (NOISE_FREE_SDEV_FRACTION * rms).max(f64::MIN_POSITIVE)
        };
        datasets.push(Dataset {
            name: label,
            model,
            y_exact,
            y_obs,
            s_noise,
            sdev,
        });
    }
    let mut factors = vec![prior.clone()];
    let mut observed = Bindings::new();
    for d in &datasets {
        let range = d.model.range_geometry().clone();
        factors.push(GaussianIID::conditional(&d.name, d.model.clone(), "x", d.sdev, range)?);
        observed.insert(d.name.clone(), d.y_obs.clone());
    }
    let joint = JointDensity::new(factors)?;
    let posterior = joint.condition(&observed)?;
    Ok(ProblemBundle {
        name,
        prior,
        datasets,
        joint,
        posterior,
        truth,
        recommended,
        options,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_noise_convention() {
        let y = [3.0, 4.0];
        assert!((relative_noise_sdev(0.1, &y) - 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_copies_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(add_noise(&mut rng, &[1.0, 2.0], 0.0), vec![1.0, 2.0]);
    }
}
