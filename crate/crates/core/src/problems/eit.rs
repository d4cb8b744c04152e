//! Electrical impedance tomography on the unit disk (shunt model).
//!
//! For each frequency `k` the potential `u_k = v_k + r^k sin(kθ)` solves
//! `∇·(σ∇u_k) = 0`, and the boundary current `σ ∂u_k/∂n` is measured.
//! The conductivity is a Heaviside level set of a Matérn KL field. All four
//! models share one stiffness factorization per conductivity.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde_json::json;

use super::{assemble_bundle, relative_noise_sdev, ProblemBundle, Truth};
use crate::error::{Error, Result};
use crate::femlite::{harmonic_lift, mesh_unit_disk, P1Assembler, TriMesh};
use crate::geometry::{build_matern_kl, Continuous1D, Geometry, Grid1D, MapKind, Mapped, Nodal};
use crate::linalg::LinearSolver;
use crate::model::ForwardModel;
use crate::pde::{LhsAssembly, LhsFn, ObserverFn, RhsFn, SteadyStateLinearPde};
use crate::samplers::SamplerKind;

/// Circular inclusion `(centre x, centre y, radius)`.
pub type Circle = (f64, f64, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EitTruth {
    ThreeCircles,
    OneCircle,
}

impl EitTruth {
    pub fn circles(self) -> Vec<Circle> {
        match self {
            EitTruth::ThreeCircles => vec![(0.5, 0.5, 0.2), (-0.5, 0.6, 0.1), (-0.3, -0.3, 0.3)],
            EitTruth::OneCircle => vec![(0.2, 0.2, 0.4)],
        }
    }
}

impl FromStr for EitTruth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_circles" => Ok(EitTruth::ThreeCircles),
            "one_circle" => Ok(EitTruth::OneCircle),
            other => Err(Error::InvalidArgument(format!(
                "unknown EIT truth '{other}' (expected three_circles or one_circle)"
            ))),
        }
    }
}

impl fmt::Display for EitTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EitTruth::ThreeCircles => "three_circles",
            EitTruth::OneCircle => "one_circle",
        })
    }
}

#[derive(Clone, Debug)]
pub struct EitSpec {
    pub n_rings: usize,
    pub n_sectors: usize,
    pub n_kl: usize,
    pub length_scale: f64,
    pub smoothness: f64,
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    pub frequencies: u32,
    pub noise_level: f64,
    pub truth: EitTruth,
    pub seed: u64,
}

impl Default for EitSpec {
    fn default() -> Self {
        EitSpec {
            n_rings: 8,
            n_sectors: 94,
            n_kl: 64,
            length_scale: 0.2,
            smoothness: 2.0,
            sigma_minus: 1.0,
            sigma_plus: 10.0,
            frequencies: 4,
            noise_level: 0.05,
            truth: EitTruth::ThreeCircles,
            seed: 0,
        }
    }
}

impl EitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_rings < 1 || self.n_sectors < 3 {
            return Err(Error::InvalidArgument("EIT mesh needs n_rings ≥ 1 and n_sectors ≥ 3".into()));
        }
        let n_dof = 1 + self.n_rings * self.n_sectors;
        if self.n_kl == 0 || self.n_kl > n_dof {
            return Err(Error::InvalidArgument(format!("n_kl must be in 1..={n_dof}, got {}", self.n_kl)));
        }
        if !(self.length_scale > 0.0) || !(self.smoothness > 0.0) {
            return Err(Error::InvalidArgument("length_scale and smoothness must be > 0".into()));
        }
        if !(self.sigma_minus > 0.0 && self.sigma_minus < self.sigma_plus) {
            return Err(Error::InvalidArgument("conductivities need 0 < sigma_minus < sigma_plus".into()));
        }
        if self.frequencies == 0 {
            return Err(Error::InvalidArgument("frequencies must be ≥ 1".into()));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidArgument("noise_level must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Nodal conductivity: `σ⁺` at nodes inside any circle, `σ⁻` elsewhere.
pub fn project_circles(mesh: &TriMesh, circles: &[Circle], sigma_minus: f64, sigma_plus: f64) -> Vec<f64> {
    mesh.vertices()
        .iter()
        .map(|&[x, y]| {
            let inside = circles.iter().any(|&(cx, cy, r)| (x - cx).hypot(y - cy) < r);
            if inside {
                sigma_plus
            } else {
                sigma_minus
            }
        })
        .collect()
}

/// Boundary node angles in `[0, 2π)`, in boundary order.
pub fn boundary_angles(mesh: &TriMesh) -> Result<Grid1D> {
    let angles = mesh
        .boundary_nodes()
        .iter()
        .map(|&v| {
            let [x, y] = mesh.vertices()[v];
            y.atan2(x).rem_euclid(2.0 * PI)
        })
        .collect();
    Grid1D::with_bounds(angles, 0.0, 2.0 * PI)
}

/// The models `A_1..A_K`; every model after the first is derived with
/// [`ForwardModel::with_updated_rhs`] and shares its factorization.
pub fn eit_models(mesh: Arc<TriMesh>, domain: Arc<dyn Geometry>, frequencies: u32) -> Result<Vec<ForwardModel>> {
    let asm = Arc::new(P1Assembler::new(mesh.clone())?);
    let boundary = mesh.boundary_nodes().to_vec();
    let range: Arc<dyn Geometry> = Arc::new(Continuous1D::new(boundary_angles(&mesh)?));
    let fixed = boundary.clone();
    let lhs: LhsFn = Arc::new(move |sigma: &[f64]| {
        Ok(LhsAssembly {
            matrix: asm.stiffness(sigma)?,
            dirichlet: fixed.iter().map(|&i| (i, 0.0)).collect(),
        })
    });
    let forms = |k: u32| -> (RhsFn, ObserverFn) {
        let lift = Arc::new(harmonic_lift(k, &mesh));
        let l = lift.clone();
        let rhs: RhsFn = Arc::new(move |_, stiffness| Ok(stiffness.mul_vec(&l).into_iter().map(|v| -v).collect()));
        let bnd = boundary.clone();
        let obs: ObserverFn = Arc::new(move |_, v, stiffness| {
            let total: Vec<f64> = v.iter().zip(lift.iter()).map(|(a, b)| a + b).collect();
            Ok(bnd.iter().map(|&i| stiffness.row(i).map(|(c, a)| a * total[c]).sum()).collect())
        });
        (rhs, obs)
    };
    let (rhs, obs) = forms(1);
    let base = ForwardModel::steady_state(
        SteadyStateLinearPde::new(lhs, rhs, obs, LinearSolver::default()),
        domain,
        range.clone(),
    );
    let mut models = Vec::with_capacity(frequencies as usize);
    for k in 2..=frequencies {
        let (rhs, obs) = forms(k);
        models.push(base.with_updated_rhs(rhs, obs, range.clone())?);
    }
    models.insert(0, base);
    Ok(models)
}

/// Level-set conductivity prior `G_Heavi ∘ G_KL` on the disk mesh.
pub fn eit_geometry(mesh: Arc<TriMesh>, spec: &EitSpec) -> Result<Arc<dyn Geometry>> {
    let kl = build_matern_kl(Nodal::on_mesh(mesh), spec.length_scale, spec.smoothness, spec.n_kl)?;
    Ok(Arc::new(Mapped::new(
        Arc::new(kl),
        MapKind::Heaviside {
            sigma_minus: spec.sigma_minus,
            sigma_plus: spec.sigma_plus,
        },
    )?))
}

pub fn build_eit(spec: &EitSpec) -> Result<ProblemBundle> {
    spec.validate()?;
    let mesh = Arc::new(mesh_unit_disk(spec.n_rings, spec.n_sectors)?);
    let domain = eit_geometry(mesh.clone(), spec)?;
    let models = eit_models(mesh.clone(), domain, spec.frequencies)?;
    let field = project_circles(&mesh, &spec.truth.circles(), spec.sigma_minus, spec.sigma_plus);
    let options = json!({
        "n_rings": spec.n_rings,
        "n_sectors": spec.n_sectors,
        "n_kl": spec.n_kl,
        "length_scale": spec.length_scale,
        "smoothness": spec.smoothness,
        "sigma_minus": spec.sigma_minus,
        "sigma_plus": spec.sigma_plus,
        "frequencies": spec.frequencies,
        "noise_level": spec.noise_level,
        "truth": spec.truth.to_string(),
        "seed": spec.seed,
    });
    let level = spec.noise_level;
    assemble_bundle(
        "eit",
        models
            .into_iter()
            .enumerate()
            .map(|(i, m)| (format!("y{}", i + 1), Arc::new(m)))
            .collect(),
        Truth { parameter: None, field },
        |y| relative_noise_sdev(level, y),
        spec.seed,
        SamplerKind::Mh,
        options,
    )
}

/// Weighted Jaccard index `|A ∩ B| / |A ∪ B|`; 1 when both sets are empty.
pub fn jaccard(a: &[bool], b: &[bool], weights: &[f64]) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for ((&p, &q), &w) in a.iter().zip(b).zip(weights) {
        if p && q {
            inter += w;
        }
        if p || q {
            union += w;
        }
    }
    if union == 0.0 {
        1.0
    } else {
        inter / union
    }
}

/// Weighted relative L2 error `‖est − truth‖ / ‖truth‖`.
pub fn relative_l2(estimate: &[f64], truth: &[f64], weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((e, t), w) in estimate.iter().zip(truth).zip(weights) {
        num += w * (e - t) * (e - t);
        den += w * t * t;
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> EitSpec {
        EitSpec {
            n_rings: 4,
            n_sectors: 24,
            n_kl: 10,
            noise_level: 0.0,
            ..EitSpec::default()
        }
    }

    #[test]
    fn four_models_one_factorization() {
        let b = build_eit(&small_spec()).unwrap();
        assert_eq!(b.datasets.len(), 4);
        let x = vec![0.3; 10];
        let models = b.models();
        let before = models[0].factorizations().unwrap();
        let shared: Vec<Vec<f64>> = models.iter().map(|m| m.forward(&x).unwrap()).collect();
        assert_eq!(models[0].factorizations().unwrap(), before + 1);
        for (m, y) in models.iter().zip(&shared) {
            let alone = m.clone_for_thread().forward(&x).unwrap();
            for (a, c) in alone.iter().zip(y) {
                assert!((a - c).abs() <= 1e-12 * (1.0 + c.abs()));
            }
        }
        for d in &b.datasets {
            assert_eq!(d.y_obs, d.y_exact);
            assert_eq!(d.y_obs.len(), 24);
        }
    }

    #[test]
    fn constant_background_matches_harmonic_flux() {
        let mesh = Arc::new(mesh_unit_disk(8, 94).unwrap());
        let spec = EitSpec::default();
        let models = eit_models(mesh.clone(), eit_geometry(mesh.clone(), &spec).unwrap(), 4).unwrap();
        let sigma = vec![1.0; mesh.num_vertices()];
        let dtheta = 2.0 * PI / 94.0;
        let angles = boundary_angles(&mesh).unwrap();
        for (k, m) in (1..=4).zip(&models) {
            let y = m.forward_function(&sigma).unwrap();
            let kf = k as f64;
            let factor = 2.0 * (1.0 - (kf * dtheta).cos()) / (kf * kf * dtheta);
            let exact: Vec<f64> = angles.nodes().iter().map(|t| kf * (kf * t).sin() * factor).collect();
            let err: f64 = y.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(err / norm < 0.05, "k = {k}: {}", err / norm);
        }
    }

    #[test]
    fn sign_preserving_perturbation_leaves_output_unchanged() {
        let b = build_eit(&small_spec()).unwrap();
        let m = &b.datasets[0].model;
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut nudged = x.clone();
        nudged[9] += 1e-9;
        assert_eq!(m.forward(&x).unwrap(), m.forward(&nudged).unwrap());
    }

    #[test]
    fn metrics() {
        let w = [1.0, 1.0, 2.0];
        assert_eq!(jaccard(&[true, true, false], &[true, false, false], &w), 0.5);
        assert_eq!(jaccard(&[false; 3], &[false; 3], &w), 1.0);
        assert!((relative_l2(&[1.0, 1.0, 2.0], &[1.0, 1.0, 1.0], &w) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
