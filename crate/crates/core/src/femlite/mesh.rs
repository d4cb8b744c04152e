use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    Left,
    Right,
    Top,
    Bottom,
    Outer,
}

impl fmt::Display for BoundaryMarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMarker::Left => "left",
            BoundaryMarker::Right => "right",
            BoundaryMarker::Top => "top",
            BoundaryMarker::Bottom => "bottom",
            BoundaryMarker::Outer => "outer",
        })
    }
}

impl FromStr for BoundaryMarker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "left" => BoundaryMarker::Left,
            "right" => BoundaryMarker::Right,
            "top" => BoundaryMarker::Top,
            "bottom" => BoundaryMarker::Bottom,
            "outer" => BoundaryMarker::Outer,
            other => return Err(format!("unknown boundary marker '{other}'")),
        })
    }
}

/// Triangulation with counter-clockwise triangles and an ordered boundary loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    /// Consecutive boundary nodes, counter-clockwise, paired with the owning triangle.
    boundary_edges: Vec<([usize; 2], usize)>,
    markers: Vec<(usize, BoundaryMarker)>,
}

impl TriMesh {
    /// Validates orientation and boundary consistency.
    ///
    /// `boundary_nodes` must list the boundary loop counter-clockwise; every
    /// consecutive pair (cyclically) has to be an edge owned by exactly one
    /// triangle.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_nodes: Vec<usize>,
        markers: Vec<(usize, BoundaryMarker)>,
    ) -> Result<Self> {
        let n = vertices.len();
        let mut edge_owner: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            let area = signed_area(&vertices, tri);
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_owner.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut boundary_edges = Vec::with_capacity(boundary_nodes.len());
        for (i, &a) in boundary_nodes.iter().enumerate() {
            let b = boundary_nodes[(i + 1) % boundary_nodes.len()];
            let owners = edge_owner.get(&(a.min(b), a.max(b))).ok_or_else(|| {
                Error::InvalidArgument(format!("boundary nodes {a} and {b} are not adjacent"))
            })?;
            if owners.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "boundary edge ({a}, {b}) belongs to {} triangles",
                    owners.len()
                )));
            }
            boundary_edges.push(([a, b], owners[0]));
        }
        let free_edges = edge_owner.values().filter(|o| o.len() == 1).count();
        if free_edges != boundary_edges.len() {
            return Err(Error::InvalidArgument(format!(
                "boundary loop covers {} of {free_edges} boundary edges",
                boundary_edges.len()
            )));
        }
        if let Some(&(v, _)) = markers.iter().find(|(v, _)| *v >= n) {
            return Err(Error::InvalidArgument(format!("marker on missing vertex {v}")));
        }
        Ok(TriMesh {
            vertices,
            triangles,
            boundary_nodes,
            boundary_edges,
            markers,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.boundary_edges.iter().map(|(e, _)| *e)
    }

    pub(crate) fn boundary_edges_with_owner(&self) -> &[([usize; 2], usize)] {
        &self.boundary_edges
    }

    pub fn markers(&self) -> &[(usize, BoundaryMarker)] {
        &self.markers
    }

    /// Nodes carrying `marker`, in ascending index order.
    pub fn marked_nodes(&self, marker: BoundaryMarker) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .markers
            .iter()
            .filter(|(_, m)| *m == marker)
            .map(|(v, _)| *v)
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Lumped nodal areas: one third of every adjacent triangle.
    pub fn nodal_areas(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(t) / 3.0;
            for &v in tri {
                w[v] += a;
            }
        }
        w
    }

    /// Order-sensitive FNV-1a digest of coordinates and connectivity.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in &self.vertices {
            eat(&v[0].to_le_bytes());
            eat(&v[1].to_le_bytes());
        }
        for t in &self.triangles {
            for &i in t {
                eat(&(i as u64).to_le_bytes());
            }
        }
        h
    }

    /// Plain-text dump: `v x y`, `t i j k`, `b i marker` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {}\n", v[0], v[1]));
        }
        for t in &self.triangles {
            out.push_str(&format!("t {} {} {}\n", t[0], t[1], t[2]));
        }
        let mut marked: HashMap<usize, Vec<BoundaryMarker>> = HashMap::new();
        for (v, m) in &self.markers {
            marked.entry(*v).or_default().push(*m);
        }
        for &v in &self.boundary_nodes {
            match marked.get(&v) {
                Some(ms) => {
                    for m in ms {
                        out.push_str(&format!("b {v} {m}\n"));
                    }
                }
                None => out.push_str(&format!("b {v} -\n")),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| {
            Error::InvalidArgument(format!("mesh text line {}: {msg}", line + 1))
        };
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut boundary = Vec::new();
        let mut markers = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            match (tag, rest.as_slice()) {
                ("v", [x, y]) => vertices.push([
                    x.parse().map_err(|_| bad(ln, "bad x"))?,
                    y.parse().map_err(|_| bad(ln, "bad y"))?,
                ]),
                ("t", [i, j, k]) => triangles.push([
                    i.parse().map_err(|_| bad(ln, "bad index"))?,
                    j.parse().map_err(|_| bad(ln, "bad index"))?,
                    k.parse().map_err(|_| bad(ln, "bad index"))?,
                ]),
                ("b", [i, m]) => {
                    let i: usize = i.parse().map_err(|_| bad(ln, "bad index"))?;
                    if boundary.last() != Some(&i) {
                        boundary.push(i);
                    }
                    if *m != "-" {
                        markers.push((i, m.parse().map_err(|e: String| bad(ln, &e))?));
                    }
                }
                _ => return Err(bad(ln, "unrecognised record")),
            }
        }
        TriMesh::new(vertices, triangles, boundary, markers)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn signed_area(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let [a, b, c] = [v[t[0]], v[t[1]], v[t[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Structured mesh of the unit square, each cell split along its (+1, +1) diagonal.
pub fn mesh_unit_square(nx: usize, ny: usize) -> Result<TriMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("mesh_unit_square needs nx, ny >= 1".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut boundary = Vec::new();
    boundary.extend((0..nx).map(|i| id(i, 0)));
    boundary.extend((0..ny).map(|j| id(nx, j)));
    boundary.extend((1..=nx).rev().map(|i| id(i, ny)));
    boundary.extend((1..=ny).rev().map(|j| id(0, j)));
    let mut markers = Vec::new();
    for i in 0..=nx {
        markers.push((id(i, 0), BoundaryMarker::Bottom));
        markers.push((id(i, ny), BoundaryMarker::Top));
    }
    for j in 0..=ny {
        markers.push((id(0, j), BoundaryMarker::Left));
        markers.push((id(nx, j), BoundaryMarker::Right));
    }
    TriMesh::new(vertices, triangles, boundary, markers)
}

/// Unit disk: a centre node plus `n_rings` concentric rings of `n_sectors` nodes.
pub fn mesh_unit_disk(n_rings: usize, n_sectors: usize) -> Result<TriMesh> {
    if n_rings == 0 || n_sectors < 3 {
        return Err(Error::InvalidArgument(
            "mesh_unit_disk needs n_rings >= 1 and n_sectors >= 3".into(),
        ));
    }
    let id = |ring: usize, s: usize| 1 + (ring - 1) * n_sectors + s % n_sectors;
    let mut vertices = vec![[0.0, 0.0]];
    for ring in 1..=n_rings {
        let r = ring as f64 / n_rings as f64;
        for s in 0..n_sectors {
            let theta = 2.0 * PI * s as f64 / n_sectors as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(n_sectors * (2 * n_rings - 1));
    for s in 0..n_sectors {
        triangles.push([0, id(1, s), id(1, s + 1)]);
    }
    for ring in 1..n_rings {
        for s in 0..n_sectors {
            triangles.push([id(ring, s), id(ring + 1, s), id(ring + 1, s + 1)]);
            triangles.push([id(ring, s), id(ring + 1, s + 1), id(ring, s + 1)]);
        }
    }
    let boundary: Vec<usize> = (0..n_sectors).map(|s| id(n_rings, s)).collect();
    let markers = boundary.iter().map(|&v| (v, BoundaryMarker::Outer)).collect();
    TriMesh::new(vertices, triangles, boundary, markers)
}
