use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::{json, Value};

use crate::error::{check_dim, Error, Result};
use crate::femlite::{interval_mass, interval_stiffness, P1Assembler, TriMesh};
use crate::linalg::CsrMatrix;

use super::{Geometry, Grid1D, Support};

#[derive(Clone, Debug)]
pub enum NodalSupport {
    Mesh(Arc<TriMesh>),
    Grid(Grid1D),
}

/// Nodal values of a P1 field: the identity map on `n_dof` coefficients.
#[derive(Clone, Debug)]
pub struct Nodal {
    support: NodalSupport,
}

impl Nodal {
    pub fn on_mesh(mesh: Arc<TriMesh>) -> Self {
        Nodal {
            support: NodalSupport::Mesh(mesh),
        }
    }

    pub fn on_grid(grid: Grid1D) -> Self {
        Nodal {
            support: NodalSupport::Grid(grid),
        }
    }

    pub fn nodal_support(&self) -> &NodalSupport {
        &self.support
    }

    pub fn n_dof(&self) -> usize {
        match &self.support {
            NodalSupport::Mesh(m) => m.num_vertices(),
            NodalSupport::Grid(g) => g.len(),
        }
    }

    /// Spatial dimension of the support.
    pub fn spatial_dim(&self) -> usize {
        match &self.support {
            NodalSupport::Mesh(_) => 2,
            NodalSupport::Grid(_) => 1,
        }
    }

    /// P1 stiffness and mass matrices with natural boundary conditions.
    pub fn stiffness_and_mass(&self) -> Result<(CsrMatrix, CsrMatrix)> {
        match &self.support {
            NodalSupport::Mesh(m) => {
                let asm = P1Assembler::new(m.clone())?;
                Ok((asm.stiffness(&vec![1.0; m.num_vertices()])?, asm.mass()))
            }
            NodalSupport::Grid(g) => Ok((interval_stiffness(g.nodes()), interval_mass(g.nodes()))),
        }
    }

    fn support_descriptor(&self) -> Value {
        match &self.support {
            NodalSupport::Mesh(m) => json!({
                "mesh_vertices": m.num_vertices(),
                "mesh_triangles": m.num_triangles(),
                "mesh_hash": format!("{:016x}", m.content_hash()),
            }),
            NodalSupport::Grid(g) => g.descriptor(),
        }
    }
}

impl Geometry for Nodal {
    fn par_dim(&self) -> usize {
        self.n_dof()
    }

    fn fun_dim(&self) -> usize {
        self.n_dof()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Nodal parameter", self.n_dof(), x.len())?;
        Ok(x.to_vec())
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("Nodal function", self.n_dof(), f.len())?;
        Ok(f.to_vec())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({
            "kind": "nodal",
            "par_dim": self.par_dim(),
            "fun_dim": self.fun_dim(),
            "support": self.support_descriptor(),
        })
    }

    fn support(&self) -> Support {
        match &self.support {
            NodalSupport::Mesh(m) => Support::Mesh(m.clone()),
            NodalSupport::Grid(g) => Support::Grid1D(g.clone()),
        }
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(self.clone())
    }
}

/// Truncated KL expansion `Σ x_i √λ_i e_i` of a Matérn-type field on a nodal support.
#[derive(Clone, Debug)]
pub struct MaternKL {
    base: Nodal,
    length_scale: f64,
    smoothness: f64,
    num_terms: usize,
    mu: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    /// Mode-major M-orthonormal eigenvectors, `modes[i * n + j]`.
    modes: Vec<f64>,
    /// Node-major `√λ_i e_i`, so `par2fun` is one dense mat-vec.
    synthesis: Vec<f64>,
    /// Mode-major `M e_i / √λ_i`, so `fun2par` is one dense mat-vec.
    analysis: Vec<f64>,
}

/// Builds the expansion from the generalized eigenproblem `(K + M/ℓ²) e = μ M e`.
///
/// The `num_terms` smallest eigenpairs are kept, eigenvectors are
/// M-orthonormal with their first significant entry positive, and
/// `√λ_i = (μ_i/μ_1)^{-(ν + d/2)/2}`, so `√λ_1 = 1`.
pub fn build_matern_kl(base: Nodal, length_scale: f64, smoothness: f64, num_terms: usize) -> Result<MaternKL> {
    if !(length_scale > 0.0) {
        return Err(Error::InvalidArgument("length_scale must be > 0".into()));
    }
    if !(smoothness > 0.0) {
        return Err(Error::InvalidArgument("smoothness must be > 0".into()));
    }
    let n = base.n_dof();
    if num_terms == 0 || num_terms > n {
        return Err(Error::InvalidArgument(format!(
            "num_terms must be in 1..={n}, got {num_terms}"
        )));
    }
    let (k, m) = base.stiffness_and_mass()?;
    let m_dense = m.to_dense();
    let a_dense = k.to_dense() + &m_dense / (length_scale * length_scale);
    let chol = m_dense
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigen("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ, computed with two triangular solves.
    let x = l
        .solve_lower_triangular(&a_dense)
        .ok_or_else(|| Error::Eigen("singular mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Eigen("singular mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut y = DMatrix::zeros(n, num_terms);
    let mut mu = Vec::with_capacity(num_terms);
    for (col, &idx) in order.iter().take(num_terms).enumerate() {
        y.set_column(col, &eig.eigenvectors.column(idx));
        mu.push(eig.eigenvalues[idx]);
    }
    if !(mu[0] > 0.0) {
        return Err(Error::Eigen(format!("non-positive leading eigenvalue {}", mu[0])));
    }
    // e = L⁻ᵀ y.
    let e = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Eigen("singular mass factor".into()))?;
    let exponent = -(smoothness + base.spatial_dim() as f64 / 2.0) / 2.0;
    let sqrt_lambda: Vec<f64> = mu.iter().map(|&v| (v / mu[0]).powf(exponent)).collect();
    let mut modes = Vec::with_capacity(n * num_terms);
    for i in 0..num_terms {
        let mut col: Vec<f64> = e.column(i).iter().copied().collect();
        let inf = col.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let first = col.iter().copied().find(|v| v.abs() > 1e-10 * inf).unwrap_or(1.0);
        if first < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        modes.extend(col);
    }
    let mut synthesis = vec![0.0; n * num_terms];
    let mut analysis = Vec::with_capacity(n * num_terms);
    for i in 0..num_terms {
        let mode = &modes[i * n..(i + 1) * n];
        for (j, v) in mode.iter().enumerate() {
            synthesis[j * num_terms + i] = sqrt_lambda[i] * v;
        }
        analysis.extend(m.mul_vec(mode).into_iter().map(|v| v / sqrt_lambda[i]));
    }
    Ok(MaternKL {
        base,
        length_scale,
        smoothness,
        num_terms,
        mu,
        sqrt_lambda,
        modes,
        synthesis,
        analysis,
    })
}

impl MaternKL {
    pub fn base(&self) -> &Nodal {
        &self.base
    }

    /// Generalized eigenvalues `μ_i` in increasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_lambda
    }

    /// Nodal values of eigenvector `i` (zero-based).
    pub fn mode(&self, i: usize) -> &[f64] {
        let n = self.base.n_dof();
        &self.modes[i * n..(i + 1) * n]
    }
}

impl Geometry for MaternKL {
    fn par_dim(&self) -> usize {
        self.num_terms
    }

    fn fun_dim(&self) -> usize {
        self.base.n_dof()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("MaternKL parameter", self.num_terms, x.len())?;
        Ok(self
            .synthesis
            .chunks_exact(self.num_terms)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.base.n_dof();
        check_dim("MaternKL function", n, f.len())?;
        Ok(self
            .analysis
            .chunks_exact(n)
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({
            "kind": "matern_kl",
            "par_dim": self.par_dim(),
            "fun_dim": self.fun_dim(),
            "length_scale": self.length_scale,
            "smoothness": self.smoothness,
            "num_terms": self.num_terms,
            "spatial_dim": self.base.spatial_dim(),
            "support": self.base.support_descriptor(),
        })
    }

    fn support(&self) -> Support {
        self.base.support()
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(self.base.clone())
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::femlite::mesh_unit_square;

    #[test]
    fn neumann_interval_eigenvalues() {
        let ell = 0.1;
        let base = Nodal::on_grid(Grid1D::uniform(200, 0.0, 1.0).unwrap());
        let kl = build_matern_kl(base, ell, 0.75, 5).unwrap();
        for (i, mu) in kl.eigenvalues().iter().enumerate() {
            let exact = 1.0 / (ell * ell) + (PI * i as f64).powi(2);
            assert!(((mu - exact) / exact).abs() < 0.02, "mode {i}: {mu} vs {exact}");
        }
        assert_eq!(kl.sqrt_eigenvalues()[0], 1.0);
    }

    #[test]
    fn mass_orthonormal_and_sign_fixed() {
        let mesh = Arc::new(mesh_unit_square(6, 6).unwrap());
        let base = Nodal::on_mesh(mesh);
        let (_, m) = base.stiffness_and_mass().unwrap();
        let kl = build_matern_kl(base, 0.3, 2.0, 10).unwrap();
        for i in 0..10 {
            let mi = m.mul_vec(kl.mode(i));
            for j in 0..10 {
                let ip: f64 = mi.iter().zip(kl.mode(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-8, "({i},{j}) = {ip}");
            }
            let mode = kl.mode(i);
            let inf = mode.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let first = mode.iter().find(|v| v.abs() > 1e-10 * inf).unwrap();
            assert!(*first > 0.0);
        }
        let s = kl.sqrt_eigenvalues();
        assert!(s.windows(2).all(|w| w[1] <= w[0]) && s.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn matern_round_trip() {
        let base = Nodal::on_grid(Grid1D::uniform(50, 0.0, 1.0).unwrap());
        let kl = build_matern_kl(base, 0.2, 1.0, 12).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let back = kl.fun2par(&kl.par2fun(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenvalue_exponent_formula() {
        // μ₂/μ₁ = 4 with ν = 0.75, d = 1 gives 4^{-0.625}.
        let exponent: f64 = -(0.75 + 0.5) / 2.0;
        assert_eq!(4f64.powf(exponent), 4f64.powf(-0.625));
        let base = Nodal::on_grid(Grid1D::uniform(400, 0.0, 1.0).unwrap());
        // Choose ℓ so that μ₂/μ₁ = 1 + π²ℓ² equals 4 in the continuum.
        let ell = 3f64.sqrt() / PI;
        let kl = build_matern_kl(base, ell, 0.75, 2).unwrap();
        let ratio = kl.eigenvalues()[1] / kl.eigenvalues()[0];
        assert!((ratio - 4.0).abs() < 1e-3, "{ratio}");
        let expected = ratio.powf(-0.625);
        assert!((kl.sqrt_eigenvalues()[1] - expected).abs() < 1e-14);
        assert!((kl.sqrt_eigenvalues()[1] - 4f64.powf(-0.625)).abs() < 1e-3);
    }

    #[test]
    fn too_many_terms_rejected() {
        let base = Nodal::on_grid(Grid1D::uniform(5, 0.0, 1.0).unwrap());
        assert!(build_matern_kl(base.clone(), 0.1, 1.0, 6).is_err());
        assert!(build_matern_kl(base, -0.1, 1.0, 2).is_err());
    }
}
