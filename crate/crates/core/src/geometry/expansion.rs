use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{check_dim, Error, Result};

use super::{Continuous1D, Geometry, Grid1D, Support};

/// Piecewise-constant field with `n_steps` equal-width intervals of the grid domain.
///
/// Intervals are half-open with the last one closed, so a node sitting on an
/// internal breakpoint belongs to the interval on its right.
#[derive(Clone, Debug)]
pub struct StepExpansion {
    grid: Grid1D,
    n_steps: usize,
    membership: Vec<usize>,
    counts: Vec<usize>,
}

impl StepExpansion {
    pub fn new(grid: Grid1D, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
        }
        let (lo, hi) = grid.bounds();
        let width = (hi - lo) / n_steps as f64;
        let membership: Vec<usize> = grid
            .nodes()
            .iter()
            .map(|&xi| (((xi - lo) / width).floor().max(0.0) as usize).min(n_steps - 1))
            .collect();
        let mut counts = vec![0; n_steps];
        for &m in &membership {
            counts[m] += 1;
        }
        Ok(StepExpansion {
            grid,
            n_steps,
            membership,
            counts,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Interval index of every grid node.
    pub fn membership(&self) -> &[usize] {
        &self.membership
    }
}

impl Geometry for StepExpansion {
    fn par_dim(&self) -> usize {
        self.n_steps
    }

    fn fun_dim(&self) -> usize {
        self.grid.len()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("StepExpansion parameter", self.n_steps, x.len())?;
        Ok(self.membership.iter().map(|&m| x[m]).collect())
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("StepExpansion function", self.grid.len(), f.len())?;
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!(
                "step interval {i} contains no grid node, so fun2par is undefined"
            )));
        }
        let mut sums = vec![0.0; self.n_steps];
        for (&m, &v) in self.membership.iter().zip(f) {
            sums[m] += v;
        }
        Ok(sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| s / c as f64)
            .collect())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({
            "kind": "step_expansion",
            "par_dim": self.par_dim(),
            "fun_dim": self.fun_dim(),
            "n_steps": self.n_steps,
            "grid": self.grid.descriptor(),
        })
    }

    fn support(&self) -> Support {
        Support::Grid1D(self.grid.clone())
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(Continuous1D::new(self.grid.clone()))
    }
}

/// Sine-series KL expansion `(1/a) Σ x_i √λ_i e_i` with `λ_i = i^{-γ}`.
///
/// The basis `e_i(ξ) = √2 sin(iπ ξ̃)` uses the coordinate `ξ̃` relative to the
/// grid's domain bounds, so every mode vanishes on the boundary.
#[derive(Clone, Debug)]
pub struct KLExpansion {
    grid: Grid1D,
    decay_rate: f64,
    normalizer: f64,
    num_modes: usize,
    sqrt_lambda: Vec<f64>,
    /// Mode-major basis values, `basis[i * n + j] = e_{i+1}(ξ_j)`.
    basis: Vec<f64>,
    weights: Vec<f64>,
}

impl KLExpansion {
    pub fn new(grid: Grid1D, decay_rate: f64, normalizer: f64, num_modes: usize) -> Result<Self> {
        if !(decay_rate > 0.0) {
            return Err(Error::InvalidArgument("decay_rate must be > 0".into()));
        }
        if !(normalizer > 0.0) {
            return Err(Error::InvalidArgument("normalizer must be > 0".into()));
        }
        if num_modes == 0 {
            return Err(Error::InvalidArgument("num_modes must be ≥ 1".into()));
        }
        let (lo, hi) = grid.bounds();
        let sqrt_lambda = (1..=num_modes)
            .map(|i| (i as f64).powf(-decay_rate).sqrt())
            .collect();
        let mut basis = Vec::with_capacity(num_modes * grid.len());
        for i in 1..=num_modes {
            for &xi in grid.nodes() {
                let t = (xi - lo) / (hi - lo);
                basis.push(SQRT_2 * (i as f64 * PI * t).sin());
            }
        }
        let weights = grid.trapezoid_weights();
        Ok(KLExpansion {
            grid,
            decay_rate,
            normalizer,
            num_modes,
            sqrt_lambda,
            basis,
            weights,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_lambda
    }

    /// Values of mode `i` (zero-based) on the grid.
    pub fn mode(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.basis[i * n..(i + 1) * n]
    }

    /// Quadrature inner product used by `fun2par`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

impl Geometry for KLExpansion {
    fn par_dim(&self) -> usize {
        self.num_modes
    }

    fn fun_dim(&self) -> usize {
        self.grid.len()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("KLExpansion parameter", self.num_modes, x.len())?;
        let mut f = vec![0.0; self.grid.len()];
        for (i, &xi) in x.iter().enumerate() {
            let c = xi * self.sqrt_lambda[i] / self.normalizer;
            for (fj, ej) in f.iter_mut().zip(self.mode(i)) {
                *fj += c * ej;
            }
        }
        Ok(f)
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("KLExpansion function", self.grid.len(), f.len())?;
        Ok((0..self.num_modes)
            .map(|i| self.normalizer * self.inner(f, self.mode(i)) / self.sqrt_lambda[i])
            .collect())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({
            "kind": "kl_expansion",
            "par_dim": self.par_dim(),
            "fun_dim": self.fun_dim(),
            "decay_rate": self.decay_rate,
            "normalizer": self.normalizer,
            "num_modes": self.num_modes,
            "grid": self.grid.descriptor(),
        })
    }

    fn support(&self) -> Support {
        Support::Grid1D(self.grid.clone())
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(Continuous1D::new(self.grid.clone()))
    }
}
