use std::collections::HashMap;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{CsrMatrix, Factorization, LinearSolver, SolveInfo};

use super::assembly::{P1Assembler, P1System};
use super::mesh::TriMesh;

/// Symmetric elimination of Dirichlet constraints.
///
/// Constrained rows and columns are zeroed (keeping their slots so the
/// sparsity pattern is unchanged), the diagonal set to one, and the load
/// adjusted so the solution takes the prescribed values exactly.
pub fn apply_dirichlet(system: &P1System, nodes: &[usize], values: &[f64]) -> Result<P1System> {
    check_dim("Dirichlet values", nodes.len(), values.len())?;
    let n = system.stiffness.nrows();
    let mut prescribed: HashMap<usize, f64> = system.dirichlet.iter().copied().collect();
    for (&node, &value) in nodes.iter().zip(values) {
        if node >= n {
            return Err(Error::InvalidArgument(format!("Dirichlet node {node} out of range")));
        }
        if let Some(&old) = prescribed.get(&node) {
            if old != value {
                return Err(Error::InvalidArgument(format!(
                    "conflicting Dirichlet values at node {node}: {old} and {value}"
                )));
            }
        }
        prescribed.insert(node, value);
    }
    let mut constrained = vec![None; n];
    for (&node, &value) in &prescribed {
        constrained[node] = Some(value);
    }
    let mut load = system.load.clone();
    let mut k = system.stiffness.clone();
    // Move known columns to the right-hand side first, using the original entries.
    for (r, item) in load.iter_mut().enumerate().take(n) {
        if constrained[r].is_some() {
            continue;
        }
        for (c, v) in system.stiffness.row(r) {
            if let Some(g) = constrained[c] {
                *item -= v * g;
            }
        }
    }
    let triplets = system.stiffness.triplets();
    {
        let vals = k.values_mut();
        for (slot, (r, c, _)) in triplets.into_iter().enumerate() {
            if constrained[r].is_some() || constrained[c].is_some() {
                vals[slot] = if r == c { 1.0 } else { 0.0 };
            }
        }
    }
    for (node, g) in constrained.iter().enumerate() {
        if let Some(g) = g {
            load[node] = *g;
        }
    }
    let mut dirichlet: Vec<(usize, f64)> = prescribed.into_iter().collect();
    dirichlet.sort_by_key(|(i, _)| *i);
    Ok(P1System {
        stiffness: k,
        load,
        dirichlet,
    })
}

/// Load vector of an already-eliminated system for a new right-hand side.
///
/// `stiffness` is the unconstrained matrix; the result matches the load that
/// [`apply_dirichlet`] would produce for the same constraints.
pub fn constrain_load(stiffness: &CsrMatrix, dirichlet: &[(usize, f64)], load: &[f64]) -> Result<Vec<f64>> {
    let n = stiffness.nrows();
    check_dim("load vector", n, load.len())?;
    let mut constrained = vec![None; n];
    for &(node, value) in dirichlet {
        if node >= n {
            return Err(Error::InvalidArgument(format!("Dirichlet node {node} out of range")));
        }
        constrained[node] = Some(value);
    }
    let mut out = load.to_vec();
    for (r, item) in out.iter_mut().enumerate() {
        match constrained[r] {
            Some(g) => *item = g,
            None => {
                for (c, v) in stiffness.row(r) {
                    if let Some(g) = constrained[c] {
                        *item -= v * g;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Solves a constrained system with the default sparse direct solver.
pub fn solve_p1(system: &P1System) -> Result<Vec<f64>> {
    solve_p1_with(system, LinearSolver::default()).map(|(u, _)| u)
}

pub fn solve_p1_with(system: &P1System, solver: LinearSolver) -> Result<(Vec<f64>, SolveInfo)> {
    Factorization::new(solver, &system.stiffness, None)?.solve(&system.load)
}

/// Harmonic lifting `r^k sin(kθ)` at the mesh nodes.
pub fn harmonic_lift(k: u32, mesh: &TriMesh) -> Vec<f64> {
    mesh.vertices()
        .iter()
        .map(|&[x, y]| {
            let r = x.hypot(y);
            let theta = y.atan2(x);
            r.powi(k as i32) * (k as f64 * theta).sin()
        })
        .collect()
}

/// Boundary current functional from element gradients, in boundary order.
///
/// The normal derivative is the P1 gradient on the triangle owning each
/// boundary edge, dotted with the outward edge normal; σ is the element mean.
/// Each edge contributes half its integral to each endpoint. Only first-order
/// accurate: on ring meshes the owning triangle is sheared relative to the
/// edge normal, so prefer [`boundary_flux`].
pub fn boundary_flux_gradient(assembler: &P1Assembler, sigma: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mesh = assembler.mesh();
    check_dim("boundary flux conductivity", mesh.num_vertices(), sigma.len())?;
    check_dim("boundary flux potential", mesh.num_vertices(), u.len())?;
    let position: HashMap<usize, usize> = mesh
        .boundary_nodes()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let mut out = vec![0.0; mesh.boundary_nodes().len()];
    for &([a, b], t) in mesh.boundary_edges_with_owner() {
        let tri = mesh.triangles()[t];
        let g = assembler.gradients(t);
        let mut grad = [0.0; 2];
        for (loc, &v) in tri.iter().enumerate() {
            grad[0] += u[v] * g[loc][0];
            grad[1] += u[v] * g[loc][1];
        }
        let s = tri.iter().map(|&v| sigma[v]).sum::<f64>() / 3.0;
        let [pa, pb] = [mesh.vertices()[a], mesh.vertices()[b]];
        // Counter-clockwise traversal: outward normal times length is (dy, -dx).
        let flux_len = grad[0] * (pb[1] - pa[1]) - grad[1] * (pb[0] - pa[0]);
        let half = 0.5 * s * flux_len;
        out[position[&a]] += half;
        out[position[&b]] += half;
    }
    Ok(out)
}

/// Boundary current functional `b_i = ∫_{∂Γ} σ ∂u/∂n φ_i ds`, in boundary order.
///
/// Evaluated in weak form as `(K_σ u)_i = ∫_Γ σ ∇u·∇φ_i` at the boundary
/// nodes, which equals the boundary integral by Green's identity for a
/// source-free potential.
pub fn boundary_flux(
    assembler: &P1Assembler,
    sigma: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let mesh = assembler.mesh();
    check_dim("boundary flux potential", mesh.num_vertices(), u.len())?;
    let k = assembler.stiffness(sigma)?;
    Ok(mesh
        .boundary_nodes()
        .iter()
        .map(|&v| k.row(v).map(|(c, a)| a * u[c]).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::femlite::assembly::{assemble_p1, Rhs};
    use crate::femlite::mesh::{mesh_unit_disk, mesh_unit_square, BoundaryMarker};
    use crate::linalg::norm2;

    fn manufactured_error(m: usize) -> (f64, f64) {
        let mesh = Arc::new(mesh_unit_square(m, m).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let exact: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|&[x, y]| (PI * x).sin() * (PI * y).sin())
            .collect();
        let f: Vec<f64> = exact.iter().map(|u| 2.0 * PI * PI * u).collect();
        let n = mesh.num_vertices();
        let sys = assemble_p1(&asm, &vec![1.0; n], Rhs::Density(&f)).unwrap();
        let bnd = mesh.boundary_nodes().to_vec();
        let sys = apply_dirichlet(&sys, &bnd, &vec![0.0; bnd.len()]).unwrap();
        let u = solve_p1(&sys).unwrap();
        let err: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let mass = asm.mass();
        let l2 = crate::linalg::dot(&err, &mass.mul_vec(&err)).sqrt();
        let k1 = asm.stiffness(&vec![1.0; n]).unwrap();
        let energy = crate::linalg::dot(&err, &k1.mul_vec(&err)).sqrt();
        (l2, energy)
    }

    #[test]
    fn manufactured_solution_converges_quadratically() {
        let (e8, _) = manufactured_error(8);
        let (e16, _) = manufactured_error(16);
        let ratio = e8 / e16;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn energy_error_decreases_under_refinement() {
        let errs: Vec<f64> = [4, 8, 16].iter().map(|&m| manufactured_error(m).1).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn zero_dirichlet_zero_source_gives_zero() {
        let mesh = Arc::new(mesh_unit_disk(3, 12).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let sys = assemble_p1(&asm, &vec![2.0; mesh.num_vertices()], Rhs::Zero).unwrap();
        let bnd = mesh.boundary_nodes().to_vec();
        let sys = apply_dirichlet(&sys, &bnd, &vec![0.0; bnd.len()]).unwrap();
        assert!(solve_p1(&sys).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_values_reproduced_and_symmetric() {
        let mesh = Arc::new(mesh_unit_square(6, 6).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let n = mesh.num_vertices();
        let sys = assemble_p1(&asm, &vec![1.0; n], Rhs::Density(&vec![1.0; n])).unwrap();
        let left = mesh.marked_nodes(BoundaryMarker::Left);
        let vals: Vec<f64> = left.iter().map(|&v| 1.0 + v as f64).collect();
        let sys = apply_dirichlet(&sys, &left, &vals).unwrap();
        assert_eq!(sys.stiffness.asymmetry(), 0.0);
        let u = solve_p1(&sys).unwrap();
        for (&v, &g) in left.iter().zip(&vals) {
            assert_eq!(u[v], g);
        }
        let r = sys.stiffness.mul_vec(&u);
        let res: Vec<f64> = r.iter().zip(&sys.load).map(|(a, b)| a - b).collect();
        assert!(norm2(&res) / norm2(&sys.load) <= 1e-10);
    }

    #[test]
    fn constrain_load_matches_elimination() {
        let mesh = Arc::new(mesh_unit_disk(3, 10).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let n = mesh.num_vertices();
        let sigma: Vec<f64> = (0..n).map(|i| 1.0 + (i % 4) as f64).collect();
        let f: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let sys = assemble_p1(&asm, &sigma, Rhs::Density(&f)).unwrap();
        let bnd = mesh.boundary_nodes().to_vec();
        let vals: Vec<f64> = (0..bnd.len()).map(|i| i as f64 * 0.1).collect();
        let constrained = apply_dirichlet(&sys, &bnd, &vals).unwrap();
        let load = constrain_load(&sys.stiffness, &constrained.dirichlet, &sys.load).unwrap();
        assert_eq!(load, constrained.load);
    }

    #[test]
    fn conflicting_dirichlet_rejected() {
        let mesh = Arc::new(mesh_unit_square(2, 2).unwrap());
        let asm = P1Assembler::new(mesh).unwrap();
        let sys = assemble_p1(&asm, &[1.0; 9], Rhs::Zero).unwrap();
        assert!(apply_dirichlet(&sys, &[0, 0], &[1.0, 2.0]).is_err());
        assert!(apply_dirichlet(&sys, &[0, 0], &[1.0, 1.0]).is_ok());
    }

    #[test]
    fn solvers_agree() {
        let mesh = Arc::new(mesh_unit_disk(5, 20).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let n = mesh.num_vertices();
        let sigma: Vec<f64> = (0..n).map(|i| 1.0 + (i % 4) as f64).collect();
        let sys = assemble_p1(&asm, &sigma, Rhs::Density(&vec![1.0; n])).unwrap();
        let bnd = mesh.boundary_nodes().to_vec();
        let sys = apply_dirichlet(&sys, &bnd, &vec![0.0; bnd.len()]).unwrap();
        let (a, _) = solve_p1_with(&sys, LinearSolver::DenseCholesky).unwrap();
        let (b, _) = solve_p1_with(&sys, LinearSolver::SparseCholesky).unwrap();
        let (c, info) =
            solve_p1_with(&sys, LinearSolver::ConjugateGradient { rel_tol: 1e-12 }).unwrap();
        assert!(info.residual <= 1e-12);
        for i in 0..n {
            assert!((a[i] - b[i]).abs() < 1e-12);
            assert!((a[i] - c[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn lift_boundary_and_centre_values() {
        let mesh = mesh_unit_disk(4, 30).unwrap();
        for k in 1..=4 {
            let lift = harmonic_lift(k, &mesh);
            assert_eq!(lift[0], 0.0);
            for &v in mesh.boundary_nodes() {
                let [x, y] = mesh.vertices()[v];
                let expected = (k as f64 * y.atan2(x)).sin();
                assert!((lift[v] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lift_is_nearly_discrete_harmonic() {
        let mesh = Arc::new(mesh_unit_disk(16, 64).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let k = asm.stiffness(&vec![1.0; mesh.num_vertices()]).unwrap();
        let lift = harmonic_lift(2, &mesh);
        let r = k.mul_vec(&lift);
        let boundary: std::collections::HashSet<usize> =
            mesh.boundary_nodes().iter().copied().collect();
        let interior: f64 = r
            .iter()
            .enumerate()
            .filter(|(i, _)| !boundary.contains(i))
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt();
        let h = 1.0 / 16.0;
        assert!(interior <= h * norm2(&lift), "{interior}");
    }

    #[test]
    fn flux_of_constant_vanishes_and_is_linear() {
        let mesh = Arc::new(mesh_unit_disk(4, 24).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let n = mesh.num_vertices();
        let sigma = vec![1.0; n];
        for flux in [boundary_flux, boundary_flux_gradient] {
            let c = flux(&asm, &sigma, &vec![3.0; n]).unwrap();
            assert!(c.iter().all(|v| v.abs() < 1e-12));
            let u = harmonic_lift(3, &mesh);
            let f1 = flux(&asm, &sigma, &u).unwrap();
            let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
            let f2 = flux(&asm, &sigma, &u2).unwrap();
            for (a, b) in f1.iter().zip(&f2) {
                assert_eq!(2.0 * a, *b);
            }
        }
    }

    /// `∫ k sin(k(θ_i + t)) hat(t) dt` over the two arcs adjacent to boundary node i.
    fn analytic_weak_current(k: u32, n_sectors: usize) -> Vec<f64> {
        let dth = 2.0 * PI / n_sectors as f64;
        let kf = k as f64;
        (0..n_sectors)
            .map(|i| {
                let theta = i as f64 * dth;
                // Closed form of ∫_{-h}^{h} sin(k(θ+t)) (1 - |t|/h) dt.
                let tri = 2.0 * (1.0 - (kf * dth).cos()) / (kf * kf * dth);
                kf * (kf * theta).sin() * tri
            })
            .collect()
    }

    #[test]
    fn harmonic_flux_matches_analytic_normal_derivative() {
        let mesh = Arc::new(mesh_unit_disk(8, 94).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let sigma = vec![1.0; mesh.num_vertices()];
        for k in 1..=4 {
            let u = harmonic_lift(k, &mesh);
            let b = boundary_flux(&asm, &sigma, &u).unwrap();
            let a = analytic_weak_current(k, 94);
            let err: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
            let rel = norm2(&err) / norm2(&a);
            assert!(rel < 0.05, "k = {k}: relative error {rel}");
        }
    }

    #[test]
    fn gradient_flux_exact_for_linear_potential() {
        let mesh = Arc::new(mesh_unit_square(4, 4).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        let b = boundary_flux_gradient(&asm, &vec![1.0; mesh.num_vertices()], &u).unwrap();
        // ∂u/∂n = +1 on the right side, -1 on the left, 0 on top and bottom.
        let total_right: f64 = mesh
            .boundary_nodes()
            .iter()
            .zip(&b)
            .filter(|(v, _)| mesh.vertices()[**v][0] == 1.0)
            .map(|(_, f)| f)
            .sum();
        assert!((total_right - 1.0).abs() < 1e-12, "{total_right}");
        assert!((b.iter().sum::<f64>()).abs() < 1e-12);
    }
}
