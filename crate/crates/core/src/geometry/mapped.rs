use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{Geometry, Support};

/// Level-set map `½(σ⁺(1 − sign r) + σ⁻(1 + sign r))` with `sign(0) = 0`.
///
/// Negative level-set values map to `σ⁺`, positive ones to `σ⁻`.
pub fn heaviside(r: &[f64], sigma_minus: f64, sigma_plus: f64) -> Vec<f64> {
    r.iter()
        .map(|&v| {
            let s = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            0.5 * (sigma_plus * (1.0 - s) + sigma_minus * (1.0 + s))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapKind {
    Heaviside { sigma_minus: f64, sigma_plus: f64 },
    Scale(f64),
    Exp,
}

impl MapKind {
    fn apply(&self, f: Vec<f64>) -> Vec<f64> {
        match *self {
            MapKind::Heaviside {
                sigma_minus,
                sigma_plus,
            } => heaviside(&f, sigma_minus, sigma_plus),
            MapKind::Scale(c) => f.into_iter().map(|v| c * v).collect(),
            MapKind::Exp => f.into_iter().map(f64::exp).collect(),
        }
    }

    fn invert(&self, f: &[f64]) -> Result<Vec<f64>> {
        match *self {
            MapKind::Heaviside { .. } => Err(Error::NonInvertible("heaviside")),
            MapKind::Scale(c) => Ok(f.iter().map(|v| v / c).collect()),
            MapKind::Exp => {
                if let Some(i) = f.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "log of non-positive value {} at index {i}",
                        f[i]
                    )));
                }
                Ok(f.iter().map(|v| v.ln()).collect())
            }
        }
    }

    fn descriptor(&self) -> Value {
        match *self {
            MapKind::Heaviside {
                sigma_minus,
                sigma_plus,
            } => json!({ "kind": "heaviside", "sigma_minus": sigma_minus, "sigma_plus": sigma_plus }),
            MapKind::Scale(c) => json!({ "kind": "scale", "factor": c }),
            MapKind::Exp => json!({ "kind": "exp" }),
        }
    }
}

/// A base geometry followed by a pointwise map on its function values.
#[derive(Clone, Debug)]
pub struct Mapped {
    base: Arc<dyn Geometry>,
    map: MapKind,
}

impl Mapped {
    pub fn new(base: Arc<dyn Geometry>, map: MapKind) -> Result<Self> {
        match map {
            MapKind::Heaviside {
                sigma_minus,
                sigma_plus,
            } if !(sigma_minus < sigma_plus) => {
                return Err(Error::InvalidArgument(format!(
                    "heaviside needs σ⁻ < σ⁺, got {sigma_minus} and {sigma_plus}"
                )))
            }
            MapKind::Scale(c) if !(c.is_finite() && c != 0.0) => {
                return Err(Error::InvalidArgument(format!("scale factor must be finite and non-zero, got {c}")))
            }
            _ => {}
        }
        Ok(Mapped { base, map })
    }

    pub fn base(&self) -> &Arc<dyn Geometry> {
        &self.base
    }

    pub fn map(&self) -> MapKind {
        self.map
    }
}

impl Geometry for Mapped {
    fn par_dim(&self) -> usize {
        self.base.par_dim()
    }

    fn fun_dim(&self) -> usize {
        self.base.fun_dim()
    }

    fn par2fun(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.map.apply(self.base.par2fun(x)?))
    }

    fn fun2par(&self, f: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_dim("Mapped function", self.fun_dim(), f.len())?;
        self.base.fun2par(&self.map.invert(f)?)
    }

    fn is_linear(&self) -> bool {
        matches!(self.map, MapKind::Scale(_)) && self.base.is_linear()
    }

    fn descriptor(&self) -> Value {
        json!({
            "kind": "mapped",
            "par_dim": self.par_dim(),
            "fun_dim": self.fun_dim(),
            "map": self.map.descriptor(),
            "base": self.base.descriptor(),
        })
    }

    fn support(&self) -> Support {
        self.base.support()
    }

    fn fun_geometry(&self) -> Arc<dyn Geometry> {
        self.base.fun_geometry()
    }
}
