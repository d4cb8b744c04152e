use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::femlite::{apply_dirichlet, constrain_load, P1System};
use crate::linalg::{CsrMatrix, Factorization, LinearSolver, SolveInfo, SymbolicCholesky};

/// Unconstrained system matrix plus the Dirichlet data to eliminate.
#[derive(Clone, Debug)]
pub struct LhsAssembly {
    pub matrix: CsrMatrix,
    pub dirichlet: Vec<(usize, f64)>,
}

pub type LhsFn = Arc<dyn Fn(&[f64]) -> Result<LhsAssembly> + Send + Sync>;
/// Right-hand side from the parameter and the unconstrained matrix.
pub type RhsFn = Arc<dyn Fn(&[f64], &CsrMatrix) -> Result<Vec<f64>> + Send + Sync>;
/// Observation from the parameter, the solution and the unconstrained matrix.
pub type ObserverFn = Arc<dyn Fn(&[f64], &[f64], &CsrMatrix) -> Result<Vec<f64>> + Send + Sync>;

struct CacheEntry {
    hash: u64,
    param: Vec<f64>,
    matrix: CsrMatrix,
    dirichlet: Vec<(usize, f64)>,
    factor: Factorization,
}

/// Factorization shared by every model derived through `with_updated`.
#[derive(Default)]
pub struct FactorCache {
    entry: Option<CacheEntry>,
    symbolic: Option<Arc<SymbolicCholesky>>,
    factorizations: usize,
}

/// Content hash of a parameter vector's bit patterns.
pub fn parameter_hash(param: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    param.len().hash(&mut h);
    for v in param {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Steady linear problem `K(m) u = b(m)` with Dirichlet elimination.
///
/// The factorization of `K` is cached by parameter content: a hash is
/// compared first and the stored copy of the parameter settles equality, so
/// a hash collision can never return a wrong factor.
pub struct SteadyStateLinearPde {
    lhs: LhsFn,
    rhs: RhsFn,
    observer: ObserverFn,
    solver: LinearSolver,
    reuse_assembled: bool,
    cache: Arc<Mutex<FactorCache>>,
    assembled: Option<Vec<f64>>,
}

impl std::fmt::Debug for SteadyStateLinearPde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SteadyStateLinearPde")
            .field("solver", &self.solver)
            .field("reuse_assembled", &self.reuse_assembled)
            .field("factorizations", &self.factorizations())
            .finish()
    }
}

impl SteadyStateLinearPde {
    pub fn new(lhs: LhsFn, rhs: RhsFn, observer: ObserverFn, solver: LinearSolver) -> Self {
        SteadyStateLinearPde {
            lhs,
            rhs,
            observer,
            solver,
            reuse_assembled: true,
            cache: Arc::new(Mutex::new(FactorCache::default())),
            assembled: None,
        }
    }

    pub fn with_reuse(mut self, reuse_assembled: bool) -> Self {
        self.reuse_assembled = reuse_assembled;
        self
    }

    pub fn solver(&self) -> LinearSolver {
        self.solver
    }

    /// Problem with a new right-hand side and observer sharing this factor cache.
    pub fn with_updated(&self, rhs: RhsFn, observer: ObserverFn) -> Self {
        SteadyStateLinearPde {
            lhs: self.lhs.clone(),
            rhs,
            observer,
            solver: self.solver,
            reuse_assembled: self.reuse_assembled,
            cache: self.cache.clone(),
            assembled: None,
        }
    }

    /// Copy with its own empty cache (the symbolic analysis stays shared).
    pub fn clone_for_thread(&self) -> Self {
        let cache = FactorCache {
            symbolic: self.lock().symbolic.clone(),
            ..FactorCache::default()
        };
        self.clone_with_cache(Arc::new(Mutex::new(cache)))
    }

    pub(crate) fn cache_handle(&self) -> &Arc<Mutex<FactorCache>> {
        &self.cache
    }

    pub(crate) fn clone_with_cache(&self, cache: Arc<Mutex<FactorCache>>) -> Self {
        SteadyStateLinearPde {
            lhs: self.lhs.clone(),
            rhs: self.rhs.clone(),
            observer: self.observer.clone(),
            solver: self.solver,
            reuse_assembled: self.reuse_assembled,
            cache,
            assembled: None,
        }
    }

    /// Number of numeric factorizations performed through the shared cache.
    pub fn factorizations(&self) -> usize {
        self.lock().factorizations
    }

    /// Assembles and factors the system for `param` unless the cache already holds it.
    pub fn assemble(&mut self, param: &[f64]) -> Result<()> {
        {
            let mut cache = self.lock();
            self.ensure_factor(&mut cache, param)?;
        }
        self.assembled = Some(param.to_vec());
        Ok(())
    }

    pub fn solve(&self) -> Result<(Vec<f64>, SolveInfo)> {
        let param = self
            .assembled
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("solve called before assemble".into()))?;
        let mut cache = self.lock();
        self.ensure_factor(&mut cache, param)?;
        self.solve_cached(&cache, param)
    }

    pub fn observe(&self, solution: &[f64]) -> Result<Vec<f64>> {
        let param = self
            .assembled
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("observe called before assemble".into()))?;
        let mut cache = self.lock();
        self.ensure_factor(&mut cache, param)?;
        let entry = cache.entry.as_ref().expect("factor present after ensure");
        (self.observer)(param, solution, &entry.matrix)
    }

    /// `observe ∘ solve ∘ assemble` in one locked pass.
    pub fn forward(&self, param: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.lock();
        self.ensure_factor(&mut cache, param)?;
        let (u, _) = self.solve_cached(&cache, param)?;
        let entry = cache.entry.as_ref().expect("factor present after ensure");
        (self.observer)(param, &u, &entry.matrix)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, FactorCache> {
        self.cache.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn ensure_factor(&self, cache: &mut FactorCache, param: &[f64]) -> Result<()> {
        let hash = parameter_hash(param);
        if self.reuse_assembled {
            if let Some(e) = &cache.entry {
                if e.hash == hash && e.param == param {
                    return Ok(());
                }
            }
        }
        cache.entry = None;
        let LhsAssembly { matrix, dirichlet } = (self.lhs)(param)?;
        let system = P1System {
            stiffness: matrix.clone(),
            load: vec![0.0; matrix.nrows()],
            dirichlet: Vec::new(),
        };
        let (nodes, values): (Vec<usize>, Vec<f64>) = dirichlet.iter().copied().unzip();
        let constrained = apply_dirichlet(&system, &nodes, &values)?;
        let factor = Factorization::new(self.solver, &constrained.stiffness, cache.symbolic.as_ref())?;
        if let Some(sym) = factor.symbolic() {
            cache.symbolic = Some(sym.clone());
        }
        cache.factorizations += 1;
        cache.entry = Some(CacheEntry {
            hash,
            param: param.to_vec(),
            matrix,
            dirichlet: constrained.dirichlet,
            factor,
        });
        Ok(())
    }

    fn solve_cached(&self, cache: &FactorCache, param: &[f64]) -> Result<(Vec<f64>, SolveInfo)> {
        let entry = cache.entry.as_ref().expect("factor present after ensure");
        let b = (self.rhs)(param, &entry.matrix)?;
        let b = constrain_load(&entry.matrix, &entry.dirichlet, &b)?;
        entry.factor.solve(&b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femlite::{mesh_unit_square, solve_p1, BoundaryMarker, P1Assembler, Rhs};

    fn poisson(n: usize) -> (SteadyStateLinearPde, usize) {
        let mesh = Arc::new(mesh_unit_square(n, n).unwrap());
        let asm = Arc::new(P1Assembler::new(mesh.clone()).unwrap());
        let mut fixed = mesh.marked_nodes(BoundaryMarker::Left);
        fixed.extend(mesh.marked_nodes(BoundaryMarker::Right));
        let a = asm.clone();
        let lhs: LhsFn = Arc::new(move |sigma: &[f64]| {
            Ok(LhsAssembly {
                matrix: a.stiffness(sigma)?,
                dirichlet: fixed.iter().map(|&i| (i, 0.0)).collect(),
            })
        });
        let a = asm.clone();
        let rhs: RhsFn = Arc::new(move |_, _| a.load_density(&vec![1.0; a.mesh().num_vertices()]));
        let obs: ObserverFn = Arc::new(|_, u, _| Ok(u.to_vec()));
        (SteadyStateLinearPde::new(lhs, rhs, obs, LinearSolver::default()), mesh.num_vertices())
    }

    #[test]
    fn cache_counts_factorizations() {
        let (mut pde, n) = poisson(6);
        let sigma = vec![1.0; n];
        pde.assemble(&sigma).unwrap();
        pde.assemble(&sigma).unwrap();
        assert_eq!(pde.factorizations(), 1);
        let mut perturbed = sigma.clone();
        perturbed[3] += 1e-9;
        pde.assemble(&perturbed).unwrap();
        assert_eq!(pde.factorizations(), 2);
        let (u, _) = pde.solve().unwrap();
        assert_eq!(pde.observe(&u).unwrap(), u);
    }

    #[test]
    fn no_reuse_refactors_every_time() {
        let (pde, n) = poisson(4);
        let pde = pde.with_reuse(false);
        let sigma = vec![2.0; n];
        pde.forward(&sigma).unwrap();
        pde.forward(&sigma).unwrap();
        assert_eq!(pde.factorizations(), 2);
    }

    #[test]
    fn matches_direct_femlite_solution() {
        let (pde, n) = poisson(8);
        let mesh = Arc::new(mesh_unit_square(8, 8).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let sigma: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
        let sys = crate::femlite::assemble_p1(&asm, &sigma, Rhs::Density(&vec![1.0; n])).unwrap();
        let mut fixed = mesh.marked_nodes(BoundaryMarker::Left);
        fixed.extend(mesh.marked_nodes(BoundaryMarker::Right));
        let sys = apply_dirichlet(&sys, &fixed, &vec![0.0; fixed.len()]).unwrap();
        let direct = solve_p1(&sys).unwrap();
        let via = pde.forward(&sigma).unwrap();
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_cache_and_thread_clone() {
        let (pde, n) = poisson(5);
        let twice: RhsFn = {
            let base = pde.rhs.clone();
            Arc::new(move |p, k| Ok(base(p, k)?.into_iter().map(|v| 2.0 * v).collect()))
        };
        let other = pde.with_updated(twice, pde.observer.clone());
        let sigma = vec![1.5; n];
        let a = pde.forward(&sigma).unwrap();
        let b = other.forward(&sigma).unwrap();
        assert_eq!(pde.factorizations(), 1);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        let private = pde.clone_for_thread();
        private.forward(&sigma).unwrap();
        assert_eq!(private.factorizations(), 1);
        assert_eq!(pde.factorizations(), 1);
    }
}
