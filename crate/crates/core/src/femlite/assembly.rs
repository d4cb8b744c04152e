use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::CsrMatrix;

use super::mesh::TriMesh;

/// Precomputed element geometry and CSR slot map for one mesh.
///
/// The stiffness pattern of a P1 discretization depends only on the mesh, so
/// repeated assemblies (one per MCMC proposal) just refill the value array.
#[derive(Debug)]
pub struct P1Assembler {
    mesh: Arc<TriMesh>,
    areas: Vec<f64>,
    /// Gradients of the three barycentric hat functions per triangle.
    grads: Vec<[[f64; 2]; 3]>,
    pattern: CsrMatrix,
    slots: Vec<[[usize; 3]; 3]>,
}

impl P1Assembler {
    pub fn new(mesh: Arc<TriMesh>) -> Result<Self> {
        let n = mesh.num_vertices();
        let mut areas = Vec::with_capacity(mesh.num_triangles());
        let mut grads = Vec::with_capacity(mesh.num_triangles());
        let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let area = mesh.triangle_area(t);
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            let p = tri.map(|v| mesh.vertices()[v]);
            let mut g = [[0.0; 2]; 3];
            for i in 0..3 {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                g[i] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
            }
            areas.push(area);
            grads.push(g);
            for &i in tri {
                for &j in tri {
                    triplets.push((i, j, 0.0));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, n, &triplets);
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[0usize; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        s[a][b] = pattern.slot(tri[a], tri[b]).expect("pattern slot");
                    }
                }
                s
            })
            .collect();
        Ok(P1Assembler {
            mesh,
            areas,
            grads,
            pattern,
            slots,
        })
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn gradients(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.grads[t]
    }

    /// `∫ σ ∇φ_i·∇φ_j` with σ per triangle taken as the mean of its nodal values.
    pub fn stiffness(&self, sigma: &[f64]) -> Result<CsrMatrix> {
        check_dim("nodal conductivity", self.mesh.num_vertices(), sigma.len())?;
        if let Some(i) = sigma.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "conductivity must be positive (node {i} has {})",
                sigma[i]
            )));
        }
        let mut k = self.pattern.clone();
        let vals = k.values_mut();
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let s = (sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]]) / 3.0;
            let g = &self.grads[t];
            let w = s * self.areas[t];
            for a in 0..3 {
                for b in 0..3 {
                    vals[self.slots[t][a][b]] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
        Ok(k)
    }

    /// Consistent P1 mass matrix.
    pub fn mass(&self) -> CsrMatrix {
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for t in 0..self.areas.len() {
            let w = self.areas[t] / 12.0;
            for a in 0..3 {
                for b in 0..3 {
                    vals[self.slots[t][a][b]] += if a == b { 2.0 * w } else { w };
                }
            }
        }
        m
    }

    /// Load vector `∫ f φ_i` for a nodal (P1-interpolated) source density.
    pub fn load_density(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim("source density", self.mesh.num_vertices(), f.len())?;
        Ok(self.mass().mul_vec(f))
    }
}

/// Right-hand side of a P1 assembly.
#[derive(Clone, Debug)]
pub enum Rhs<'a> {
    /// Nodal source density `f`, load `∫ f φ_i`.
    Density(&'a [f64]),
    /// Lifting function values, load `-∫ σ ∇u_lift·∇φ_i`.
    Lifting(&'a [f64]),
    Zero,
}

/// Assembled (possibly constrained) linear system.
#[derive(Clone, Debug)]
pub struct P1System {
    pub stiffness: CsrMatrix,
    pub load: Vec<f64>,
    pub dirichlet: Vec<(usize, f64)>,
}

pub fn assemble_p1(assembler: &P1Assembler, sigma: &[f64], rhs: Rhs<'_>) -> Result<P1System> {
    let stiffness = assembler.stiffness(sigma)?;
    let n = stiffness.nrows();
    let load = match rhs {
        Rhs::Density(f) => assembler.load_density(f)?,
        Rhs::Lifting(u) => {
            check_dim("lifting function", n, u.len())?;
            stiffness.mul_vec(u).into_iter().map(|v| -v).collect()
        }
        Rhs::Zero => vec![0.0; n],
    };
    Ok(P1System {
        stiffness,
        load,
        dirichlet: Vec::new(),
    })
}

/// P1 stiffness `∫ φ_i' φ_j'` on a 1D node set.
pub fn interval_stiffness(nodes: &[f64]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * nodes.len());
    for (e, w) in nodes.windows(2).enumerate() {
        let k = 1.0 / (w[1] - w[0]);
        t.extend([(e, e, k), (e + 1, e + 1, k), (e, e + 1, -k), (e + 1, e, -k)]);
    }
    CsrMatrix::from_triplets(nodes.len(), nodes.len(), &t)
}

/// Consistent P1 mass matrix on a 1D node set.
pub fn interval_mass(nodes: &[f64]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * nodes.len());
    for (e, w) in nodes.windows(2).enumerate() {
        let h = w[1] - w[0];
        t.extend([
            (e, e, h / 3.0),
            (e + 1, e + 1, h / 3.0),
            (e, e + 1, h / 6.0),
            (e + 1, e, h / 6.0),
        ]);
    }
    CsrMatrix::from_triplets(nodes.len(), nodes.len(), &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femlite::mesh::{mesh_unit_disk, mesh_unit_square};

    #[test]
    fn reference_triangle_element_matrix() {
        let mesh = TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![0, 1, 2],
            vec![],
        )
        .unwrap();
        let asm = P1Assembler::new(Arc::new(mesh)).unwrap();
        let k = asm.stiffness(&[1.0; 3]).unwrap();
        let expected = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.get(i, j) - 0.5 * expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn row_sums_vanish() {
        let mesh = Arc::new(mesh_unit_disk(4, 17).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let sigma: Vec<f64> = (0..mesh.num_vertices()).map(|i| 1.0 + (i % 5) as f64).collect();
        let k = asm.stiffness(&sigma).unwrap();
        let sums = k.mul_vec(&vec![1.0; mesh.num_vertices()]);
        assert!(sums.iter().all(|s| s.abs() < 1e-10));
    }

    #[test]
    fn stiffness_is_linear_in_sigma() {
        let mesh = Arc::new(mesh_unit_square(5, 4).unwrap());
        let asm = P1Assembler::new(mesh.clone()).unwrap();
        let sigma: Vec<f64> = (0..mesh.num_vertices()).map(|i| 0.5 + (i % 3) as f64).collect();
        let k1 = asm.stiffness(&sigma).unwrap();
        let doubled: Vec<f64> = sigma.iter().map(|s| 2.0 * s).collect();
        let k2 = asm.stiffness(&doubled).unwrap();
        for (a, b) in k1.values().iter().zip(k2.values()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn assembly_is_bitwise_deterministic() {
        let mesh = Arc::new(mesh_unit_disk(3, 11).unwrap());
        let sigma: Vec<f64> = (0..mesh.num_vertices()).map(|i| 1.0 + 0.1 * i as f64).collect();
        let a = P1Assembler::new(mesh.clone()).unwrap().stiffness(&sigma).unwrap();
        let b = P1Assembler::new(mesh).unwrap().stiffness(&sigma).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_positive_sigma_rejected() {
        let mesh = Arc::new(mesh_unit_square(2, 2).unwrap());
        let asm = P1Assembler::new(mesh).unwrap();
        let mut sigma = vec![1.0; 9];
        sigma[4] = 0.0;
        assert!(asm.stiffness(&sigma).is_err());
    }

    #[test]
    fn mass_integrates_constants() {
        let mesh = Arc::new(mesh_unit_square(6, 3).unwrap());
        let m = P1Assembler::new(mesh).unwrap().mass();
        let total: f64 = m.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let m1 = interval_mass(&[0.0, 0.2, 0.5, 1.0]);
        assert!((m1.values().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let k1 = interval_stiffness(&[0.0, 0.2, 0.5, 1.0]);
        assert!(k1.mul_vec(&[1.0; 4]).iter().all(|v| v.abs() < 1e-12));
    }
}
