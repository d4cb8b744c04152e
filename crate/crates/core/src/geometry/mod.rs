//! Parameterizations mapping coefficient vectors to discretized fields.
//!
//! Every geometry has a parameter space (what samplers explore) and a function
//! space (nodal values fed to a PDE). `par2fun` maps the former to the latter;
//! `fun2par` is its left inverse where one exists.

mod expansion;
mod mapped;
mod matern;

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{check_dim, Error, Result};
use crate::femlite::TriMesh;

pub use expansion::{KLExpansion, StepExpansion};
pub use mapped::{heaviside, MapKind, Mapped};
pub use matern::{build_matern_kl, MaternKL, Nodal, NodalSupport};

/// Where function values live, for plotting and export.
#[derive(Clone, Debug)]
pub enum Support {
    /// Values indexed by position only (coefficients).
    Index(usize),
    Grid1D(Grid1D),
    Grid2D(Grid2D),
    Mesh(Arc<TriMesh>),
}

pub trait Geometry: fmt::Debug + Send + Sync {
    fn par_dim(&self) -> usize;

    fn fun_dim(&self) -> usize;

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>>;

    /// True when `par2fun` is linear, so statistics commute with it.
    fn is_linear(&self) -> bool;

    /// JSON metadata: `kind`, dimensions and hyperparameters.
    fn descriptor(&self) -> Value;

    /// Support of the function values.
    fn support(&self) -> Support;

    /// Identity geometry on the function space.
    fn fun_geometry(&self) -> Arc<dyn Geometry>;
}

/// Strictly increasing 1D nodes inside a domain `[lo, hi]`.
///
/// The bounds need not be nodes: the heat problem uses interior nodes only,
/// while expansion bases and quadrature refer to the full domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Grid1D {
    /// Grid whose domain is spanned by its first and last node.
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        let (lo, hi) = match (nodes.first(), nodes.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into())),
        };
        Self::with_bounds(nodes, lo, hi)
    }

    pub fn with_bounds(nodes: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into()));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid nodes must be finite".into()));
        }
        if let Some(i) = nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "grid nodes must be strictly increasing (nodes {i} and {})",
                i + 1
            )));
        }
        if !(lo <= nodes[0] && hi >= nodes[nodes.len() - 1] && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "grid bounds [{lo}, {hi}] do not contain the nodes"
            )));
        }
        Ok(Grid1D { nodes, lo, hi })
    }

    /// `n` equispaced nodes strictly inside `[lo, hi]` with spacing `(hi - lo)/(n + 1)`.
    pub fn interior(n: usize, lo: f64, hi: f64) -> Result<Self> {
        let h = (hi - lo) / (n as f64 + 1.0);
        Self::with_bounds((1..=n).map(|i| lo + i as f64 * h).collect(), lo, hi)
    }

    /// `n` equispaced nodes including both end points.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into()));
        }
        let h = (hi - lo) / (n as f64 - 1.0);
        let mut nodes: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        nodes[n - 1] = hi;
        Self::with_bounds(nodes, lo, hi)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// First `n` nodes, keeping the domain bounds.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::with_bounds(self.nodes[..n.min(self.len())].to_vec(), self.lo, self.hi)
    }

    /// Trapezoid weights over `[lo, nodes.., hi]` for functions vanishing at
    /// any bound that is not itself a node.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                let left = if i == 0 { self.lo } else { self.nodes[i - 1] };
                let right = if i + 1 == n { self.hi } else { self.nodes[i + 1] };
                0.5 * (right - left)
            })
            .collect()
    }

    fn descriptor(&self) -> Value {
        json!({ "n": self.len(), "lo": self.lo, "hi": self.hi })
    }
}

/// Tensor grid; flattened values run fastest along `axis1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    pub axis1: Grid1D,
    pub axis2: Grid1D,
}

impl Grid2D {
    pub fn new(axis1: Grid1D, axis2: Grid1D) -> Self {
        Grid2D { axis1, axis2 }
    }

    pub fn len(&self) -> usize {
        self.axis1.len() * self.axis2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Identity geometry on a 1D grid.
#[derive(Clone, Debug)]
pub struct Continuous1D {
    grid: Grid1D,
}

impl Continuous1D {
    pub fn new(grid: Grid1D) -> Self {
        Continuous1D { grid }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
}

impl Geometry for Continuous1D {
    fn par_dim(&self) -> usize {
        self.grid.len()
    }

    fn fun_dim(&self) -> usize {
        self.grid.len()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Continuous1D parameter", self.grid.len(), x.len())?;
        Ok(x.to_vec())
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("Continuous1D function", self.grid.len(), f.len())?;
        Ok(f.to_vec())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({ "kind": "continuous1d", "par_dim": self.par_dim(), "fun_dim": self.fun_dim(), "grid": self.grid.descriptor() })
    }

    fn support(&self) -> Support {
        Support::Grid1D(self.grid.clone())
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(self.clone())
    }
}

/// Identity geometry on a tensor grid.
#[derive(Clone, Debug)]
pub struct Continuous2D {
    grid: Grid2D,
}

impl Continuous2D {
    pub fn new(grid: Grid2D) -> Self {
        Continuous2D { grid }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
}

impl Geometry for Continuous2D {
    fn par_dim(&self) -> usize {
        self.grid.len()
    }

    fn fun_dim(&self) -> usize {
        self.grid.len()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Continuous2D parameter", self.grid.len(), x.len())?;
        Ok(x.to_vec())
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("Continuous2D function", self.grid.len(), f.len())?;
        Ok(f.to_vec())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({
            "kind": "continuous2d",
            "par_dim": self.par_dim(),
            "fun_dim": self.fun_dim(),
            "axis1": self.grid.axis1.descriptor(),
            "axis2": self.grid.axis2.descriptor(),
        })
    }

    fn support(&self) -> Support {
        Support::Grid2D(self.grid.clone())
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(self.clone())
    }
}

/// Identity geometry on plain vectors with no spatial structure.
#[derive(Clone, Debug)]
pub struct Discrete {
    n: usize,
}

impl Discrete {
    pub fn new(n: usize) -> Self {
        Discrete { n }
    }
}

impl Geometry for Discrete {
    fn par_dim(&self) -> usize {
        self.n
    }

    fn fun_dim(&self) -> usize {
        self.n
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Discrete parameter", self.n, x.len())?;
        Ok(x.to_vec())
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("Discrete function", self.n, f.len())?;
        Ok(f.to_vec())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Value {
        json!({ "kind": "discrete", "par_dim": self.n, "fun_dim": self.n })
    }

    fn support(&self) -> Support {
        Support::Index(self.n)
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        Arc::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_grid_spacing() {
        let g = Grid1D::interior(100, 0.0, 1.0).unwrap();
        let h = 1.0 / 101.0;
        assert_eq!(g.len(), 100);
        assert!((g.nodes()[0] - h).abs() < 1e-15);
        assert!((g.nodes()[99] - (1.0 - h)).abs() < 1e-14);
        assert_eq!(g.bounds(), (0.0, 1.0));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(vec![0.0]).is_err());
        assert!(Grid1D::new(vec![0.0, 0.0]).is_err());
        assert!(Grid1D::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(Grid1D::with_bounds(vec![0.0, 1.0], 0.5, 2.0).is_err());
        assert!(Grid1D::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn trapezoid_weights_omit_bound_halves() {
        // Spacing 0.25: the two half-cells at the bounds carry no node.
        let g = Grid1D::interior(7, 0.0, 2.0).unwrap();
        assert!((g.trapezoid_weights().iter().sum::<f64>() - 1.75).abs() < 1e-14);
        let u = Grid1D::uniform(5, 0.0, 1.0).unwrap();
        assert_eq!(u.trapezoid_weights(), vec![0.125, 0.25, 0.25, 0.25, 0.125]);
    }

    #[test]
    fn identity_geometries_check_dimensions() {
        let c = Continuous1D::new(Grid1D::uniform(4, 0.0, 1.0).unwrap());
        let err = c.par2fun(&[1.0; 3]).unwrap_err().to_string();
        assert!(err.contains("expected 4") && err.contains("got 3"), "{err}");
        assert_eq!(c.fun2par(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let g2 = Continuous2D::new(Grid2D::new(c.grid().clone(), Grid1D::uniform(2, 0.0, 1.0).unwrap()));
        assert_eq!(g2.par_dim(), 8);
    }
}
