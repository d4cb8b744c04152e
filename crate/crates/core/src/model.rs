//! Forward models `A = O ∘ S ∘ G` binding a PDE (or a black box) to geometries.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::geometry::Geometry;
use crate::pde::{FactorCache, ObserverFn, RhsFn, SteadyStateLinearPde, TimeDependentLinearPde};

pub type BlackBoxFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// What a black-box callable receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlackBoxInput {
    /// Field values after `par2fun`.
    FunctionValues,
    /// The raw parameter vector.
    Parameters,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Pde,
    BlackBox,
}

enum Operator {
    TimeDependent(TimeDependentLinearPde),
    SteadyState(SteadyStateLinearPde),
    BlackBox { f: BlackBoxFn, input: BlackBoxInput },
}

pub struct ForwardModel {
    domain: Arc<dyn Geometry>,
    range: Arc<dyn Geometry>,
    op: Operator,
}

impl fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match &self.op {
            Operator::TimeDependent(p) => format!("{p:?}"),
            Operator::SteadyState(p) => format!("{p:?}"),
            Operator::BlackBox { input, .. } => format!("BlackBox({input:?})"),
        };
        f.debug_struct("ForwardModel")
            .field("domain", &self.domain.descriptor()["kind"])
            .field("range", &self.range.descriptor()["kind"])
            .field("op", &op)
            .finish()
    }
}

impl ForwardModel {
    pub fn time_dependent(pde: TimeDependentLinearPde, domain: Arc<dyn Geometry>, range: Arc<dyn Geometry>) -> Result<Self> {
        check_dim("PDE solution grid vs domain function space", domain.fun_dim(), pde.grid_sol().len())?;
        check_dim("PDE observation grid vs range", range.par_dim(), pde.grid_obs().len())?;
        Ok(ForwardModel {
            domain,
            range,
            op: Operator::TimeDependent(pde),
        })
    }

    pub fn steady_state(pde: SteadyStateLinearPde, domain: Arc<dyn Geometry>, range: Arc<dyn Geometry>) -> Self {
        ForwardModel {
            domain,
            range,
            op: Operator::SteadyState(pde),
        }
    }

    pub fn black_box(f: BlackBoxFn, input: BlackBoxInput, domain: Arc<dyn Geometry>, range: Arc<dyn Geometry>) -> Self {
        ForwardModel {
            domain,
            range,
            op: Operator::BlackBox { f, input },
        }
    }

    pub fn domain_geometry(&self) -> &Arc<dyn Geometry> {
        &self.domain
    }

    pub fn range_geometry(&self) -> &Arc<dyn Geometry> {
        &self.range
    }

    pub fn kind(&self) -> ModelKind {
        match self.op {
            Operator::BlackBox { .. } => ModelKind::BlackBox,
            _ => ModelKind::Pde,
        }
    }

    /// `A(x)`: maps parameters to function values and evaluates the operator.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("forward model parameter", self.domain.par_dim(), x.len())?;
        if let Operator::BlackBox {
            f,
            input: BlackBoxInput::Parameters,
        } = &self.op
        {
            return self.checked_output(f(x)?);
        }
        let g = self.domain.par2fun(x)?;
        self.forward_function(&g)
    }

    /// Evaluates the operator on function values directly.
    pub fn forward_function(&self, g: &[f64]) -> Result<Vec<f64>> {
        let y = match &self.op {
            Operator::TimeDependent(p) => {
                check_dim("forward model function", self.domain.fun_dim(), g.len())?;
                p.forward(g)?
            }
            Operator::SteadyState(p) => {
                check_dim("forward model function", self.domain.fun_dim(), g.len())?;
                p.forward(g)?
            }
            Operator::BlackBox {
                f,
                input: BlackBoxInput::FunctionValues,
            } => {
                check_dim("forward model function", self.domain.fun_dim(), g.len())?;
                f(g)?
            }
            Operator::BlackBox {
                input: BlackBoxInput::Parameters,
                ..
            } => {
                return Err(Error::Unsupported(
                    "this black-box model takes parameters, not function values",
                ))
            }
        };
        self.checked_output(y)
    }

    fn checked_output(&self, y: Vec<f64>) -> Result<Vec<f64>> {
        check_dim("forward model output", self.range.par_dim(), y.len())?;
        Ok(y)
    }

    /// Model with a new right-hand side and observer sharing the factorization cache.
    pub fn with_updated_rhs(&self, rhs: RhsFn, observer: ObserverFn, range: Arc<dyn Geometry>) -> Result<Self> {
        match &self.op {
            Operator::SteadyState(p) => Ok(ForwardModel {
                domain: self.domain.clone(),
                range,
                op: Operator::SteadyState(p.with_updated(rhs, observer)),
            }),
            _ => Err(Error::Unsupported(
                "with_updated_rhs requires a steady-state PDE model",
            )),
        }
    }

    /// Factorizations performed by the underlying steady-state PDE, if any.
    pub fn factorizations(&self) -> Option<usize> {
        match &self.op {
            Operator::SteadyState(p) => Some(p.factorizations()),
            _ => None,
        }
    }

    /// Copy with private mutable state, for use on another thread.
    pub fn clone_for_thread(&self) -> Self {
        clone_group_for_thread([self]).pop().expect("one model")
    }
}

/// Matrix `M` and offset `b` of an affine model `A(x) = M x + b`.
///
/// Column `j` is `A(e_j) − A(0)`; the result is meaningful only when the
/// model really is affine in its parameter.
pub fn affine_operator(model: &ForwardModel) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = model.domain_geometry().par_dim();
    let offset = model.forward(&vec![0.0; n])?;
    let mut matrix = DMatrix::zeros(offset.len(), n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = model.forward(&e)?;
        e[j] = 0.0;
        for (i, (c, b)) in col.iter().zip(&offset).enumerate() {
            matrix[(i, j)] = c - b;
        }
    }
    Ok((matrix, offset))
}

/// Clones models for another thread, keeping caches shared within the group.
///
/// Models that shared a factorization cache before share one fresh cache
/// afterwards, so per-thread copies keep the single-factorization behaviour.
pub fn clone_group_for_thread<'a>(models: impl IntoIterator<Item = &'a ForwardModel>) -> Vec<ForwardModel> {
    let mut remap: HashMap<*const Mutex<FactorCache>, Arc<Mutex<FactorCache>>> = HashMap::new();
    models
        .into_iter()
        .map(|m| {
            let op = match &m.op {
                Operator::TimeDependent(p) => Operator::TimeDependent(p.clone_for_thread()),
                Operator::SteadyState(p) => {
                    let key = Arc::as_ptr(p.cache_handle());
                    let copy = match remap.get(&key) {
                        Some(cache) => p.clone_with_cache(cache.clone()),
                        None => {
                            let copy = p.clone_for_thread();
                            remap.insert(key, copy.cache_handle().clone());
                            copy
                        }
                    };
                    Operator::SteadyState(copy)
                }
                Operator::BlackBox { f, input } => Operator::BlackBox {
                    f: f.clone(),
                    input: *input,
                },
            };
            ForwardModel {
                domain: m.domain.clone(),
                range: m.range.clone(),
                op,
            }
        })
        .collect()
}
