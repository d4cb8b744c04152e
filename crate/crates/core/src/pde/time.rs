use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Grid1D;
use crate::linalg::{CsrMatrix, SolveInfo};

/// Threshold on `max |u|` beyond which a time integration is declared unstable.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

const BLOW_UP_CHECK_EVERY: usize = 8;

/// Operator, source and initial state returned by a time-dependent form.
#[derive(Clone, Debug)]
pub struct TimeForm {
    pub operator: CsrMatrix,
    pub rhs: Vec<f64>,
    pub initial: Vec<f64>,
}

pub type TimeFormFn = Arc<dyn Fn(&[f64], f64) -> Result<TimeForm> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeScheme {
    ExplicitEuler,
    ImplicitEuler,
}

/// Linear evolution `du/dτ = D u + f` with initial state from the form.
///
/// The form is evaluated as `form(g, τ)`. When it is flagged time independent
/// it is evaluated once at `τ₀`; otherwise every step re-evaluates it.
pub struct TimeDependentLinearPde {
    form: TimeFormFn,
    time_independent: bool,
    time_steps: Vec<f64>,
    grid_sol: Grid1D,
    grid_obs: Grid1D,
    scheme: TimeScheme,
    /// Per observation point `(left node, right node, right weight)`.
    interp: Vec<(usize, usize, f64)>,
    assembled: Option<Assembled>,
    implicit_cache: Arc<Mutex<Option<ImplicitFactor>>>,
}

struct Assembled {
    param: Vec<f64>,
    form: TimeForm,
}

struct ImplicitFactor {
    operator: CsrMatrix,
    dt: f64,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Solution at every time point, `states[k]` at `time_steps[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSolution {
    pub states: Vec<Vec<f64>>,
}

impl TimeSolution {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl std::fmt::Debug for TimeDependentLinearPde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeDependentLinearPde")
            .field("time_independent", &self.time_independent)
            .field("n_time", &self.time_steps.len())
            .field("n_grid", &self.grid_sol.len())
            .field("n_obs", &self.grid_obs.len())
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl TimeDependentLinearPde {
    pub fn new(
        form: TimeFormFn,
        time_independent: bool,
        time_steps: Vec<f64>,
        grid_sol: Grid1D,
        grid_obs: Grid1D,
        scheme: TimeScheme,
    ) -> Result<Self> {
        if time_steps.len() < 2 || time_steps[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "time steps need at least two points starting at 0".into(),
            ));
        }
        if time_steps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("time steps must be strictly increasing".into()));
        }
        let interp = interpolation_weights(grid_sol.nodes(), grid_obs.nodes())?;
        Ok(TimeDependentLinearPde {
            form,
            time_independent,
            time_steps,
            grid_sol,
            grid_obs,
            scheme,
            interp,
            assembled: None,
            implicit_cache: Arc::new(Mutex::new(None)),
        })
    }

    pub fn time_steps(&self) -> &[f64] {
        &self.time_steps
    }

    pub fn grid_sol(&self) -> &Grid1D {
        &self.grid_sol
    }

    pub fn grid_obs(&self) -> &Grid1D {
        &self.grid_obs
    }

    pub fn scheme(&self) -> TimeScheme {
        self.scheme
    }

    /// Copy with private mutable state and an empty factor cache.
    pub fn clone_for_thread(&self) -> Self {
        TimeDependentLinearPde {
            form: self.form.clone(),
            time_independent: self.time_independent,
            time_steps: self.time_steps.clone(),
            grid_sol: self.grid_sol.clone(),
            grid_obs: self.grid_obs.clone(),
            scheme: self.scheme,
            interp: self.interp.clone(),
            assembled: None,
            implicit_cache: Arc::new(Mutex::new(None)),
        }
    }

    /// Evaluates the form at `τ₀` and stores it with the parameter.
    pub fn assemble(&mut self, param: &[f64]) -> Result<()> {
        let form = self.evaluate_form(param, self.time_steps[0])?;
        self.assembled = Some(Assembled {
            param: param.to_vec(),
            form,
        });
        Ok(())
    }

    /// Integrates the assembled problem and returns every time step.
    pub fn solve(&self) -> Result<(TimeSolution, SolveInfo)> {
        let a = self
            .assembled
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("solve called before assemble".into()))?;
        let mut states = Vec::with_capacity(self.time_steps.len());
        self.integrate(&a.param, &a.form, |u| states.push(u.to_vec()))?;
        let info = SolveInfo {
            iterations: self.time_steps.len() - 1,
            residual: 0.0,
        };
        Ok((TimeSolution { states }, info))
    }

    /// Final-time state interpolated onto the observation grid.
    pub fn observe(&self, solution: &TimeSolution) -> Result<Vec<f64>> {
        check_dim("time solution length", self.time_steps.len(), solution.states.len())?;
        self.restrict(solution.final_state())
    }

    /// `observe ∘ solve ∘ assemble` without storing intermediate states.
    pub fn forward(&self, param: &[f64]) -> Result<Vec<f64>> {
        let form = self.evaluate_form(param, self.time_steps[0])?;
        let last = self.integrate(param, &form, |_| {})?;
        self.restrict(&last)
    }

    fn restrict(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim("solution state", self.grid_sol.len(), u.len())?;
        Ok(self
            .interp
            .iter()
            .map(|&(i, j, w)| (1.0 - w) * u[i] + w * u[j])
            .collect())
    }

    fn evaluate_form(&self, param: &[f64], tau: f64) -> Result<TimeForm> {
        let form = (self.form)(param, tau)?;
        let n = self.grid_sol.len();
        check_dim("time form operator rows", n, form.operator.nrows())?;
        check_dim("time form operator columns", n, form.operator.ncols())?;
        check_dim("time form source", n, form.rhs.len())?;
        check_dim("time form initial state", n, form.initial.len())?;
        Ok(form)
    }

    /// Steps from the initial state, visiting every state; returns the last.
    fn integrate(&self, param: &[f64], first: &TimeForm, mut visit: impl FnMut(&[f64])) -> Result<Vec<f64>> {
        let n = self.grid_sol.len();
        let mut u = first.initial.clone();
        visit(&u);
        let mut du = vec![0.0; n];
        let mut current = None;
        for k in 0..self.time_steps.len() - 1 {
            let dt = self.time_steps[k + 1] - self.time_steps[k];
            match self.scheme {
                TimeScheme::ExplicitEuler => {
                    if !self.time_independent && k > 0 {
                        current = Some(self.evaluate_form(param, self.time_steps[k])?);
                    }
                    let form = current.as_ref().unwrap_or(first);
                    form.operator.mul_vec_into(&u, &mut du);
                    for ((ui, di), fi) in u.iter_mut().zip(&du).zip(&form.rhs) {
                        *ui += dt * (di + fi);
                    }
                }
                TimeScheme::ImplicitEuler => {
                    if !self.time_independent {
                        current = Some(self.evaluate_form(param, self.time_steps[k + 1])?);
                    }
                    let form = current.as_ref().unwrap_or(first);
                    let b = DVector::from_iterator(n, u.iter().zip(&form.rhs).map(|(ui, fi)| ui + dt * fi));
                    let x = self.implicit_solve(&form.operator, dt, &b)?;
                    u.copy_from_slice(x.as_slice());
                }
            }
            // Growth between checks can only overflow to infinity, which is still caught.
            if (k + 1) % BLOW_UP_CHECK_EVERY == 0 || k + 2 == self.time_steps.len() {
                let magnitude = u.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
                if magnitude > BLOW_UP_THRESHOLD {
                    return Err(Error::UnstableTimeStep { step: k + 1, magnitude });
                }
            }
            visit(&u);
        }
        Ok(u)
    }

    /// Solves `(I − Δτ D) x = b`, reusing the LU factor while `D` and `Δτ` repeat.
    fn implicit_solve(&self, operator: &CsrMatrix, dt: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut cache = self.implicit_cache.lock().expect("implicit cache poisoned");
        let stale = match cache.as_ref() {
            Some(c) => c.dt != dt || c.operator != *operator,
            None => true,
        };
        if stale {
            let n = operator.nrows();
            let a = DMatrix::identity(n, n) - operator.to_dense() * dt;
            *cache = Some(ImplicitFactor {
                operator: operator.clone(),
                dt,
                lu: a.lu(),
            });
        }
        cache
            .as_ref()
            .and_then(|c| c.lu.solve(b))
            .ok_or(Error::NonInvertible("implicit Euler system matrix"))
    }
}

/// Linear interpolation weights of `targets` on strictly increasing `nodes`.
pub fn interpolation_weights(nodes: &[f64], targets: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
    let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
    targets
        .iter()
        .map(|&p| {
            if !(p >= first && p <= last) {
                return Err(Error::InvalidArgument(format!(
                    "observation point {p} lies outside the solution grid [{first}, {last}]"
                )));
            }
            let j = nodes.partition_point(|&x| x < p);
            if nodes[j] == p {
                return Ok((j, j, 0.0));
            }
            let i = j - 1;
            Ok((i, j, (p - nodes[i]) / (nodes[j] - nodes[i])))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::linalg::norm2;

    fn laplacian(n: usize, h: f64, c: f64) -> CsrMatrix {
        let k = c * c / (h * h);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -2.0 * k));
            if i > 0 {
                t.push((i, i - 1, k));
            }
            if i + 1 < n {
                t.push((i, i + 1, k));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn heat(n_tau: usize, tau_max: f64, scheme: TimeScheme, obs: Option<Grid1D>) -> TimeDependentLinearPde {
        let grid = Grid1D::interior(100, 0.0, 1.0).unwrap();
        let d = laplacian(100, 1.0 / 101.0, 1.0);
        let form: TimeFormFn = Arc::new(move |g: &[f64], _| {
            Ok(TimeForm {
                operator: d.clone(),
                rhs: vec![0.0; g.len()],
                initial: g.to_vec(),
            })
        });
        let times = (0..n_tau).map(|k| tau_max * k as f64 / (n_tau - 1) as f64).collect();
        let obs = obs.unwrap_or_else(|| grid.clone());
        TimeDependentLinearPde::new(form, true, times, grid, obs, scheme).unwrap()
    }

    fn sine(grid: &Grid1D) -> Vec<f64> {
        grid.nodes().iter().map(|x| (PI * x).sin()).collect()
    }

    #[test]
    fn zero_dynamics_stay_zero() {
        let mut pde = heat(20, 0.01, TimeScheme::ExplicitEuler, None);
        pde.assemble(&[0.0; 100]).unwrap();
        let (sol, _) = pde.solve().unwrap();
        assert_eq!(sol.states.len(), 20);
        assert!(sol.states.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn heat_matches_analytic_decay() {
        let mut pde = heat(225, 0.01, TimeScheme::ExplicitEuler, None);
        let g = sine(pde.grid_sol());
        pde.assemble(&g).unwrap();
        let (sol, _) = pde.solve().unwrap();
        let y = pde.observe(&sol).unwrap();
        let exact: Vec<f64> = g.iter().map(|v| v * (-PI * PI * 0.01f64).exp()).collect();
        let err: Vec<f64> = y.iter().zip(&exact).map(|(a, b)| a - b).collect();
        assert!(norm2(&err) / norm2(&exact) <= 1e-2);
        assert_eq!(pde.forward(&g).unwrap(), y);
    }

    #[test]
    fn explicit_blow_up_detected() {
        // Δτ = 4h² violates the explicit bound h²/2.
        let h = 1.0 / 101.0;
        let n_tau = 400;
        let pde = heat(n_tau, 4.0 * h * h * (n_tau - 1) as f64, TimeScheme::ExplicitEuler, None);
        let g: Vec<f64> = pde.grid_sol().nodes().iter().map(|x| (PI * x).sin() + 1e-3 * (90.0 * PI * x).sin()).collect();
        let err = pde.forward(&g).unwrap_err().to_string();
        assert!(err.contains("unstable time step"), "{err}");
        let implicit = heat(n_tau, 4.0 * h * h * (n_tau - 1) as f64, TimeScheme::ImplicitEuler, None);
        assert!(implicit.forward(&g).is_ok());
    }

    #[test]
    fn half_observation_and_midpoints() {
        let grid = Grid1D::interior(100, 0.0, 1.0).unwrap();
        let half = heat(10, 0.001, TimeScheme::ExplicitEuler, Some(grid.truncated(50).unwrap()));
        let full = heat(10, 0.001, TimeScheme::ExplicitEuler, None);
        let g = sine(&grid);
        assert_eq!(half.forward(&g).unwrap(), full.forward(&g).unwrap()[..50].to_vec());
        let w = interpolation_weights(grid.nodes(), &[0.5 * (grid.nodes()[3] + grid.nodes()[4])]).unwrap();
        assert_eq!(w[0].0, 3);
        assert_eq!(w[0].1, 4);
        assert!((w[0].2 - 0.5).abs() < 1e-12);
        assert!(interpolation_weights(grid.nodes(), &[0.0]).is_err());
    }

    #[test]
    fn explicit_implicit_gap_is_first_order() {
        let grid = Grid1D::interior(100, 0.0, 1.0).unwrap();
        let g = sine(&grid);
        let gap = |n_tau| {
            let e = heat(n_tau, 0.01, TimeScheme::ExplicitEuler, None).forward(&g).unwrap();
            let i = heat(n_tau, 0.01, TimeScheme::ImplicitEuler, None).forward(&g).unwrap();
            norm2(&e.iter().zip(&i).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let ratio = gap(225) / gap(449);
        assert!((1.5..=2.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn solve_before_assemble_is_an_error() {
        let pde = heat(5, 0.001, TimeScheme::ExplicitEuler, None);
        assert!(pde.solve().is_err());
    }

    #[test]
    fn time_varying_source_is_re_evaluated() {
        let grid = Grid1D::uniform(3, 0.0, 1.0).unwrap();
        let form: TimeFormFn = Arc::new(|g: &[f64], tau| {
            Ok(TimeForm {
                operator: CsrMatrix::from_triplets(3, 3, &[]),
                rhs: vec![tau; 3],
                initial: g.to_vec(),
            })
        });
        let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let pde = TimeDependentLinearPde::new(form, false, times, grid.clone(), grid, TimeScheme::ExplicitEuler).unwrap();
        // Left Riemann sum of ∫₀¹ τ dτ.
        let y = pde.forward(&[0.0; 3]).unwrap();
        assert!((y[0] - 0.495).abs() < 1e-12, "{}", y[0]);
    }
}
