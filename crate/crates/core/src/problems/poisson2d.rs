//! Log-conductivity inversion for `−∇·(e^w ∇u) = 1` on the unit square.
//!
//! Zero Dirichlet data on the left and right sides, natural boundary
//! conditions on the top and bottom, and the full nodal solution observed.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use super::{assemble_bundle, relative_noise_sdev, ProblemBundle, Truth};
use crate::distributions::{Bindings, GaussianIID};
use crate::error::{Error, Result};
use crate::femlite::{mesh_unit_square, BoundaryMarker, P1Assembler, TriMesh};
use crate::geometry::{build_matern_kl, Geometry, MapKind, Mapped, Nodal};
use crate::linalg::LinearSolver;
use crate::model::ForwardModel;
use crate::pde::{LhsAssembly, LhsFn, ObserverFn, RhsFn, SteadyStateLinearPde};
use crate::samplers::SamplerKind;

#[derive(Clone, Debug)]
pub struct Poisson2dSpec {
    pub nx: usize,
    pub ny: usize,
    pub n_kl: usize,
    pub length_scale: f64,
    pub smoothness: f64,
    pub noise_level: f64,
    pub seed: u64,
    /// Seed of the prior draw used as the truth.
    pub truth_seed: u64,
}

impl Default for Poisson2dSpec {
    fn default() -> Self {
        Poisson2dSpec {
            nx: 32,
            ny: 32,
            n_kl: 32,
            length_scale: 0.1,
            smoothness: 2.0,
            noise_level: 0.01,
            seed: 0,
            truth_seed: 2,
        }
    }
}

impl Poisson2dSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidArgument(format!(
                "mesh dimensions must be ≥ 4, got {}x{}",
                self.nx, self.ny
            )));
        }
        let n_dof = (self.nx + 1) * (self.ny + 1);
        if self.n_kl == 0 || self.n_kl > n_dof {
            return Err(Error::InvalidArgument(format!("n_kl must be in 1..={n_dof}, got {}", self.n_kl)));
        }
        if !(self.length_scale > 0.0) || !(self.smoothness > 0.0) {
            return Err(Error::InvalidArgument("length_scale and smoothness must be > 0".into()));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidArgument("noise_level must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Steady Poisson forward model with conductivity as the PDE parameter.
pub fn poisson_model(mesh: Arc<TriMesh>, domain: Arc<dyn Geometry>) -> Result<ForwardModel> {
    let asm = Arc::new(P1Assembler::new(mesh.clone())?);
    let mut fixed = mesh.marked_nodes(BoundaryMarker::Left);
    fixed.extend(mesh.marked_nodes(BoundaryMarker::Right));
    fixed.sort_unstable();
    fixed.dedup();
    let a = asm.clone();
    let lhs: LhsFn = Arc::new(move |sigma: &[f64]| {
        Ok(LhsAssembly {
            matrix: a.stiffness(sigma)?,
            dirichlet: fixed.iter().map(|&i| (i, 0.0)).collect(),
        })
    });
    let load = asm.load_density(&vec![1.0; mesh.num_vertices()])?;
    let rhs: RhsFn = Arc::new(move |_, _| Ok(load.clone()));
    let obs: ObserverFn = Arc::new(|_, u, _| Ok(u.to_vec()));
    let pde = SteadyStateLinearPde::new(lhs, rhs, obs, LinearSolver::default());
    let range: Arc<dyn Geometry> = Arc::new(Nodal::on_mesh(mesh));
    Ok(ForwardModel::steady_state(pde, domain, range))
}

pub fn build_poisson2d(spec: &Poisson2dSpec) -> Result<ProblemBundle> {
    spec.validate()?;
    let mesh = Arc::new(mesh_unit_square(spec.nx, spec.ny)?);
    let kl = build_matern_kl(Nodal::on_mesh(mesh.clone()), spec.length_scale, spec.smoothness, spec.n_kl)?;
    let domain: Arc<dyn Geometry> = Arc::new(Mapped::new(Arc::new(kl), MapKind::Exp)?);
    let model = Arc::new(poisson_model(mesh, domain.clone())?);

    let mut rng = ChaCha20Rng::seed_from_u64(spec.truth_seed);
    let draw = GaussianIID::standard("x", domain.clone()).sample(&mut rng, 1, &Bindings::new())?;
    let x_true = draw.sample(0).to_vec();
    let field = domain.par2fun(&x_true)?;

    let options = json!({
        "nx": spec.nx,
        "ny": spec.ny,
        "n_kl": spec.n_kl,
        "length_scale": spec.length_scale,
        "smoothness": spec.smoothness,
        "noise_level": spec.noise_level,
        "seed": spec.seed,
        "truth_seed": spec.truth_seed,
    });
    let level = spec.noise_level;
    assemble_bundle(
        "poisson2d",
        vec![("y".to_string(), model)],
        Truth {
            parameter: Some(x_true),
            field,
        },
        |y| relative_noise_sdev(level, y),
        spec.seed,
        SamplerKind::Pcn,
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameter_gives_symmetric_solution_with_dirichlet_sides() {
        let spec = Poisson2dSpec {
            nx: 8,
            ny: 8,
            n_kl: 8,
            ..Poisson2dSpec::default()
        };
        let b = build_poisson2d(&spec).unwrap();
        let model = &b.datasets[0].model;
        let u = model.forward(&vec![0.0; 8]).unwrap();
        let mesh = mesh_unit_square(8, 8).unwrap();
        for (i, &[x, y]) in mesh.vertices().iter().enumerate() {
            let j = mesh
                .vertices()
                .iter()
                .position(|&[x2, y2]| (x2 - (1.0 - x)).abs() < 1e-12 && (y2 - y).abs() < 1e-12)
                .unwrap();
            assert!((u[i] - u[j]).abs() < 1e-8);
        }
        for i in mesh.marked_nodes(BoundaryMarker::Left).into_iter().chain(mesh.marked_nodes(BoundaryMarker::Right)) {
            assert_eq!(u[i], 0.0);
        }
    }

    #[test]
    fn default_range_has_1089_nodes() {
        let b = build_poisson2d(&Poisson2dSpec::default()).unwrap();
        assert_eq!(b.datasets[0].y_obs.len(), 1089);
        assert_eq!(b.domain_geometry().par_dim(), 32);
        assert_eq!(b.recommended, SamplerKind::Pcn);
    }
}
