//! Isotropic Gaussian densities, joint distributions and posteriors.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::geometry::Geometry;
use crate::model::{clone_group_for_thread, ForwardModel};
use crate::samples::Samples;

/// Values bound to variable names.
pub type Bindings = BTreeMap<String, Vec<f64>>;

/// Log-density interface consumed by the samplers.
pub trait Target {
    fn dim(&self) -> usize;

    fn log_prior(&self, x: &[f64]) -> Result<f64>;

    fn loglik(&self, x: &[f64]) -> Result<f64>;

    fn logpdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_prior(x)? + self.loglik(x)?)
    }

    /// True when the prior is `N(0, I)`, as pCN requires.
    fn has_standard_prior(&self) -> bool {
        false
    }
}

/// Target given directly by a log-density, with a flat prior.
pub struct DensityTarget<F> {
    dim: usize,
    logpdf: F,
}

impl<F: Fn(&[f64]) -> f64> DensityTarget<F> {
    pub fn new(dim: usize, logpdf: F) -> Self {
        DensityTarget { dim, logpdf }
    }
}

impl<F: Fn(&[f64]) -> f64> Target for DensityTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_prior(&self, _: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn loglik(&self, x: &[f64]) -> Result<f64> {
        Ok((self.logpdf)(x))
    }
}

/// Standard Gaussian prior times a user log-likelihood.
pub struct StandardPriorTarget<F> {
    dim: usize,
    loglik: F,
}

impl<F: Fn(&[f64]) -> f64> StandardPriorTarget<F> {
    pub fn new(dim: usize, loglik: F) -> Self {
        StandardPriorTarget { dim, loglik }
    }
}

impl<F: Fn(&[f64]) -> f64> Target for StandardPriorTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_prior(&self, x: &[f64]) -> Result<f64> {
        Ok(iid_logpdf(x, None, 1.0))
    }

    fn loglik(&self, x: &[f64]) -> Result<f64> {
        Ok((self.loglik)(x))
    }

    fn has_standard_prior(&self) -> bool {
        true
    }
}

fn iid_logpdf(value: &[f64], mean: Option<&[f64]>, sdev: f64) -> f64 {
    let n = value.len() as f64;
    let sq: f64 = match mean {
        Some(m) => value.iter().zip(m).map(|(v, m)| (v - m) * (v - m)).sum(),
        None => value.iter().map(|v| v * v).sum(),
    };
    -0.5 * n * (2.0 * PI * sdev * sdev).ln() - sq / (2.0 * sdev * sdev)
}

#[derive(Clone, Debug)]
pub enum Mean {
    Vector(Vec<f64>),
    /// `model(input)` where `input` names another variable.
    Model { model: Arc<ForwardModel>, input: String },
}

/// `N(mean, s² I)` over a named variable.
#[derive(Clone, Debug)]
pub struct GaussianIID {
    name: String,
    mean: Mean,
    sdev: f64,
    geometry: Arc<dyn Geometry>,
}

fn check_sdev(sdev: f64) -> Result<()> {
    if !(sdev > 0.0 && sdev.is_finite()) {
        return Err(Error::InvalidArgument(format!("sdev must be positive and finite, got {sdev}")));
    }
    Ok(())
}

impl GaussianIID {
    pub fn new(name: &str, mean: Vec<f64>, sdev: f64, geometry: Arc<dyn Geometry>) -> Result<Self> {
        check_sdev(sdev)?;
        check_dim("Gaussian mean vs geometry", geometry.par_dim(), mean.len())?;
        Ok(GaussianIID {
            name: name.to_string(),
            mean: Mean::Vector(mean),
            sdev,
            geometry,
        })
    }

    /// Zero mean, unit variance.
    pub fn standard(name: &str, geometry: Arc<dyn Geometry>) -> Self {
        let n = geometry.par_dim();
        GaussianIID::new(name, vec![0.0; n], 1.0, geometry).expect("valid standard Gaussian")
    }

    /// Data distribution `N(model(input), s² I)`.
    pub fn conditional(
        name: &str,
        model: Arc<ForwardModel>,
        input: &str,
        sdev: f64,
        geometry: Arc<dyn Geometry>,
    ) -> Result<Self> {
        check_sdev(sdev)?;
        check_dim("data geometry vs model range", model.range_geometry().par_dim(), geometry.par_dim())?;
        Ok(GaussianIID {
            name: name.to_string(),
            mean: Mean::Model {
                model,
                input: input.to_string(),
            },
            sdev,
            geometry,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mean(&self) -> &Mean {
        &self.mean
    }

    pub fn sdev(&self) -> f64 {
        self.sdev
    }

    pub fn geometry(&self) -> &Arc<dyn Geometry> {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.par_dim()
    }

    /// Name of the variable the mean depends on, if any.
    pub fn depends_on(&self) -> Option<&str> {
        match &self.mean {
            Mean::Vector(_) => None,
            Mean::Model { input, .. } => Some(input),
        }
    }

    pub fn is_standard(&self) -> bool {
        matches!(&self.mean, Mean::Vector(m) if m.iter().all(|v| *v == 0.0)) && self.sdev == 1.0
    }

    /// Mean vector, evaluating the model on the bound input when needed.
    pub fn mean_given(&self, bindings: &Bindings) -> Result<Vec<f64>> {
        match &self.mean {
            Mean::Vector(m) => Ok(m.clone()),
            Mean::Model { model, input } => {
                let x = bindings
                    .get(input)
                    .ok_or_else(|| Error::MissingConditioning(input.clone()))?;
                model.forward(x)
            }
        }
    }

    /// `−(n/2) log(2πs²) − ‖value − mean‖²/(2s²)`.
    pub fn logpdf(&self, value: &[f64], bindings: &Bindings) -> Result<f64> {
        check_dim("Gaussian value", self.dim(), value.len())?;
        let mean = self.mean_given(bindings)?;
        Ok(iid_logpdf(value, Some(&mean), self.sdev))
    }

    /// The same density with its mean fixed by `bindings`.
    pub fn given(&self, bindings: &Bindings) -> Result<GaussianIID> {
        let mean = self.mean_given(bindings)?;
        Ok(GaussianIID {
            name: self.name.clone(),
            mean: Mean::Vector(mean),
            sdev: self.sdev,
            geometry: self.geometry.clone(),
        })
    }

    /// `count` independent draws `mean + s ξ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize, bindings: &Bindings) -> Result<Samples> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be ≥ 1".into()));
        }
        let mean = self.mean_given(bindings)?;
        let mut values = Vec::with_capacity(count * mean.len());
        for _ in 0..count {
            values.extend(mean.iter().map(|m| m + self.sdev * rng.sample::<f64, _>(StandardNormal)));
        }
        Samples::new(values, mean.len(), self.geometry.clone())
    }
}

/// One data term `N(y_obs; A(x), s² I)` of a posterior.
#[derive(Clone, Debug)]
pub struct Likelihood {
    pub name: String,
    pub model: Arc<ForwardModel>,
    pub data: Vec<f64>,
    pub sdev: f64,
}

impl Likelihood {
    pub fn new(name: &str, model: Arc<ForwardModel>, data: Vec<f64>, sdev: f64) -> Result<Self> {
        check_sdev(sdev)?;
        check_dim("observed data vs model range", model.range_geometry().par_dim(), data.len())?;
        Ok(Likelihood {
            name: name.to_string(),
            model,
            data,
            sdev,
        })
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        let y = self.model.forward(x)?;
        Ok(iid_logpdf(&self.data, Some(&y), self.sdev))
    }
}

/// Ordered product of Gaussian factors linked by model means.
#[derive(Clone, Debug)]
pub struct JointDensity {
    factors: Vec<GaussianIID>,
}

impl JointDensity {
    pub fn new(factors: Vec<GaussianIID>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for f in &factors {
            if !names.insert(f.name().to_string()) {
                return Err(Error::InvalidArgument(format!("duplicate variable '{}'", f.name())));
            }
        }
        for f in &factors {
            if let Some(dep) = f.depends_on() {
                if !names.contains(dep) {
                    return Err(Error::UnknownVariable(dep.to_string()));
                }
            }
        }
        // Each factor has at most one parent, so a cycle shows up as a walk
        // longer than the number of factors.
        for f in &factors {
            let mut cur = f;
            for step in 0..=factors.len() {
                match cur.depends_on() {
                    None => break,
                    Some(dep) => {
                        if step == factors.len() {
                            return Err(Error::InvalidArgument(format!(
                                "dependency cycle through '{}'",
                                f.name()
                            )));
                        }
                        cur = factors.iter().find(|g| g.name() == dep).expect("checked above");
                    }
                }
            }
        }
        Ok(JointDensity { factors })
    }

    pub fn factors(&self) -> &[GaussianIID] {
        &self.factors
    }

    /// Sum of all factor log-densities; every variable must be bound.
    pub fn logpdf(&self, values: &Bindings) -> Result<f64> {
        let mut total = 0.0;
        for f in &self.factors {
            let v = values
                .get(f.name())
                .ok_or_else(|| Error::MissingConditioning(f.name().to_string()))?;
            total += f.logpdf(v, values)?;
        }
        Ok(total)
    }

    /// Posterior of the single unobserved variable given the observed ones.
    pub fn condition(&self, observed: &Bindings) -> Result<Posterior> {
        for name in observed.keys() {
            if !self.factors.iter().any(|f| f.name() == name) {
                return Err(Error::UnknownVariable(name.clone()));
            }
        }
        let free: Vec<&GaussianIID> = self
            .factors
            .iter()
            .filter(|f| !observed.contains_key(f.name()))
            .collect();
        let prior = match free.as_slice() {
            [one] => (*one).clone(),
            [] => return Err(Error::InvalidArgument("every variable is observed".into())),
            many => {
                let names: Vec<&str> = many.iter().map(|f| f.name()).collect();
                return Err(Error::InvalidArgument(format!(
                    "exactly one unobserved variable is supported, found {}",
                    names.join(", ")
                )));
            }
        };
        if prior.depends_on().is_some() {
            return Err(Error::Unsupported("the unobserved variable must have a fixed mean"));
        }
        let mut likelihoods = Vec::new();
        for f in self.factors.iter().filter(|f| observed.contains_key(f.name())) {
            match f.mean() {
                Mean::Model { model, input } if input == prior.name() => {
                    likelihoods.push(Likelihood::new(f.name(), model.clone(), observed[f.name()].clone(), f.sdev())?);
                }
                _ => {
                    return Err(Error::Unsupported(
                        "observed variables must depend on the unobserved one through a model",
                    ))
                }
            }
        }
        Posterior::new(prior, likelihoods)
    }
}

/// Prior over `x` times independent Gaussian likelihood terms.
#[derive(Clone, Debug)]
pub struct Posterior {
    prior: GaussianIID,
    likelihoods: Vec<Likelihood>,
}

impl Posterior {
    pub fn new(prior: GaussianIID, likelihoods: Vec<Likelihood>) -> Result<Self> {
        if prior.depends_on().is_some() {
            return Err(Error::Unsupported("the prior must have a fixed mean"));
        }
        for l in &likelihoods {
            check_dim("likelihood model domain vs prior", prior.dim(), l.model.domain_geometry().par_dim())?;
        }
        Ok(Posterior { prior, likelihoods })
    }

    pub fn prior(&self) -> &GaussianIID {
        &self.prior
    }

    pub fn likelihoods(&self) -> &[Likelihood] {
        &self.likelihoods
    }

    pub fn geometry(&self) -> &Arc<dyn Geometry> {
        self.prior.geometry()
    }

    /// Copy whose models own private caches, preserving sharing between terms.
    pub fn clone_for_thread(&self) -> Posterior {
        let models = clone_group_for_thread(self.likelihoods.iter().map(|l| l.model.as_ref()));
        let likelihoods = self
            .likelihoods
            .iter()
            .zip(models)
            .map(|(l, m)| Likelihood {
                name: l.name.clone(),
                model: Arc::new(m),
                data: l.data.clone(),
                sdev: l.sdev,
            })
            .collect();
        Posterior {
            prior: self.prior.clone(),
            likelihoods,
        }
    }
}

impl Target for Posterior {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_prior(&self, x: &[f64]) -> Result<f64> {
        self.prior.logpdf(x, &Bindings::new())
    }

    fn loglik(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for l in &self.likelihoods {
            total += l.logpdf(x)?;
        }
        Ok(total)
    }

    fn has_standard_prior(&self) -> bool {
        self.prior.is_standard()
    }
}
