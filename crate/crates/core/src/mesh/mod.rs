//! Closed oriented triangle meshes immersed in an ambient chart.

mod generators;
mod io;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::ambient::{Ambient, AmbientError};
use crate::geom::{corner_normal, face_geom, normalize_in, FaceGeom};
use crate::real::{inner, Vec3};

pub use generators::{
    make_clifford_torus, make_flat_subtorus, make_genus2, make_sphere, make_torus, perturb, refine, Perturbation,
};
pub use io::{load_mesh, load_obj, load_ply, save_obj, save_ply, PlyChannel};

/// Relative degeneracy guard: faces with area below this multiple of the
/// mean face area are rejected.
pub const AREA_EPS_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} has invalid or repeated vertex indices")]
    BadFace { face: usize },
    #[error("edge ({a}, {b}) is shared by {count} faces (expected 2)")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("edge ({a}, {b}) is traversed twice in the same direction (inconsistent orientation)")]
    Orientation { a: usize, b: usize },
    #[error("vertex {vertex} has a non-disk link")]
    NonManifoldVertex { vertex: usize },
    #[error("vertex {vertex} is not referenced by any face")]
    IsolatedVertex { vertex: usize },
    #[error("mesh is not connected")]
    Disconnected,
    #[error("face {face} is degenerate (area {area:e})")]
    Degenerate { face: usize, area: f64 },
    #[error("vertex {vertex}: {source}")]
    Domain {
        vertex: usize,
        #[source]
        source: AmbientError,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid generator argument: {0}")]
    Argument(String),
}

/// Half-edge connectivity. Half-edge `3f + k` runs from corner `k` to corner
/// `k + 1` of face `f`.
#[derive(Debug)]
pub struct Topology {
    faces: Vec<[usize; 3]>,
    twin: Vec<usize>,
    vertex_faces: Vec<Vec<usize>>,
    /// 1-ring in cyclic (counter-clockwise) order.
    neighbors: Vec<Vec<usize>>,
    edges: Vec<[usize; 2]>,
    euler: i64,
}

impl Topology {
    pub fn new(n_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n_vertices) || f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::BadFace { face: fi });
            }
        }
        let nh = 3 * faces.len();
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::with_capacity(nh);
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *undirected.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        // report the first offending edge in face order for stable messages
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let count = undirected[&key];
                if count != 2 {
                    return Err(MeshError::NonManifoldEdge { a: key.0, b: key.1, count });
                }
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(nh);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if directed.insert((a, b), 3 * fi + k).is_some() {
                    return Err(MeshError::Orientation { a: a.min(b), b: a.max(b) });
                }
            }
        }
        let mut twin = vec![usize::MAX; nh];
        let mut edges = Vec::with_capacity(nh / 2);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                twin[3 * fi + k] = directed[&(b, a)];
                if a < b {
                    edges.push([a, b]);
                }
            }
        }
        let mut vertex_faces = vec![Vec::new(); n_vertices];
        let mut outgoing = vec![usize::MAX; n_vertices];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                vertex_faces[f[k]].push(fi);
                if outgoing[f[k]] == usize::MAX {
                    outgoing[f[k]] = 3 * fi + k;
                }
            }
        }
        let mut neighbors = Vec::with_capacity(n_vertices);
        for v in 0..n_vertices {
            if outgoing[v] == usize::MAX {
                return Err(MeshError::IsolatedVertex { vertex: v });
            }
            let start = outgoing[v];
            let mut h = start;
            let mut ring = Vec::new();
            loop {
                let f = h / 3;
                let k = h % 3;
                ring.push(faces[f][(k + 1) % 3]);
                // previous half-edge of the face ends at v; its twin leaves v
                let prev = 3 * f + (k + 2) % 3;
                h = twin[prev];
                if h == start || ring.len() > vertex_faces[v].len() {
                    break;
                }
            }
            if ring.len() != vertex_faces[v].len() {
                return Err(MeshError::NonManifoldVertex { vertex: v });
            }
            neighbors.push(ring);
        }
        // connectivity over the vertex graph
        let mut seen = vec![false; n_vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        if count != n_vertices {
            return Err(MeshError::Disconnected);
        }
        let euler = n_vertices as i64 - edges.len() as i64 + faces.len() as i64;
        Ok(Topology { faces, twin, vertex_faces, neighbors, edges, euler })
    }

    pub fn n_vertices(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.euler
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn twin(&self, h: usize) -> usize {
        self.twin[h]
    }

    pub fn next(&self, h: usize) -> usize {
        3 * (h / 3) + (h % 3 + 1) % 3
    }

    pub fn origin(&self, h: usize) -> usize {
        self.faces[h / 3][h % 3]
    }

    /// Vertices at combinatorial distance ≤ 2 from `v`, sorted.
    pub fn two_ring(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        for &w in &self.neighbors[v] {
            out.push(w);
            out.extend_from_slice(&self.neighbors[w]);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A discrete immersion: chart positions over a fixed connectivity.
#[derive(Clone, Debug)]
pub struct Immersion {
    vertices: Vec<Vec3<f64>>,
    topology: Arc<Topology>,
    ambient: Arc<Ambient>,
    tags: Option<Vec<u32>>,
}

impl Immersion {
    pub fn new(vertices: Vec<Vec3<f64>>, faces: Vec<[usize; 3]>, ambient: Arc<Ambient>) -> Result<Self, MeshError> {
        let topology = Arc::new(Topology::new(vertices.len(), faces)?);
        Self::from_parts(vertices, topology, ambient)
    }

    pub fn from_parts(
        vertices: Vec<Vec3<f64>>,
        topology: Arc<Topology>,
        ambient: Arc<Ambient>,
    ) -> Result<Self, MeshError> {
        let m = Immersion { vertices, topology, ambient, tags: None };
        m.validate_geometry()?;
        Ok(m)
    }

    /// Same connectivity and ambient, new positions.
    pub fn with_positions(&self, vertices: Vec<Vec3<f64>>) -> Result<Self, MeshError> {
        assert_eq!(vertices.len(), self.vertices.len());
        let m = Immersion {
            vertices,
            topology: self.topology.clone(),
            ambient: self.ambient.clone(),
            tags: self.tags.clone(),
        };
        m.validate_geometry()?;
        Ok(m)
    }

    /// Same positions and connectivity in another ambient.
    pub fn with_ambient(&self, ambient: Arc<Ambient>) -> Result<Self, MeshError> {
        let m = Immersion {
            vertices: self.vertices.clone(),
            topology: self.topology.clone(),
            ambient,
            tags: self.tags.clone(),
        };
        m.validate_geometry()?;
        Ok(m)
    }

    pub fn with_tags(mut self, tags: Vec<u32>) -> Self {
        assert_eq!(tags.len(), self.vertices.len());
        self.tags = Some(tags);
        self
    }

    fn validate_geometry(&self) -> Result<(), MeshError> {
        for (v, x) in self.vertices.iter().enumerate() {
            if !self.ambient.contains(x) {
                return Err(MeshError::Domain { vertex: v, source: AmbientError::OutOfDomain(*x) });
            }
        }
        let areas = self.face_areas();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        let eps = AREA_EPS_REL * mean;
        for (f, a) in areas.iter().enumerate() {
            if !(a.is_finite() && *a > eps) {
                return Err(MeshError::Degenerate { face: f, area: *a });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn ambient(&self) -> &Arc<Ambient> {
        &self.ambient
    }

    pub fn tags(&self) -> Option<&[u32]> {
        self.tags.as_deref()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.topology.euler_characteristic()
    }

    pub fn face_geom(&self, f: usize) -> FaceGeom<f64> {
        let [a, b, c] = self.topology.faces()[f];
        face_geom(&self.ambient, [&self.vertices[a], &self.vertices[b], &self.vertices[c]])
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.topology.n_faces()).map(|f| self.face_geom(f).area).collect()
    }

    pub fn area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// `ḡ`-lengths of all edges (metric at the edge midpoint).
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.topology
            .edges()
            .iter()
            .map(|&[a, b]| {
                let d = self.ambient.delta(&self.vertices[a], &self.vertices[b]);
                let mid = [
                    self.vertices[a][0] + 0.5 * d[0],
                    self.vertices[a][1] + 0.5 * d[1],
                    self.vertices[a][2] + 0.5 * d[2],
                ];
                inner(&self.ambient.metric_unchecked(&mid), &d, &d).sqrt()
            })
            .collect()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let l = self.edge_lengths();
        l.iter().sum::<f64>() / l.len() as f64
    }

    /// Vertex normals, unit in `ḡ` at the vertex (face normals with
    /// [`corner_normal`](crate::geom::corner_normal) weights).
    pub fn vertex_normals(&self) -> Vec<Vec3<f64>> {
        let mut acc = vec![[0.0; 3]; self.vertices.len()];
        for (f, fv) in self.topology.faces().iter().enumerate() {
            let fg = self.face_geom(f);
            for (k, &v) in fv.iter().enumerate() {
                let cn = corner_normal(&fg, k);
                for c in 0..3 {
                    acc[v][c] += cn[c];
                }
            }
        }
        acc.iter().zip(&self.vertices).map(|(n, x)| normalize_in(&self.ambient.metric_unchecked(x), n)).collect()
    }

    /// Arithmetic mean of the chart positions (unwrapped around vertex 0 on
    /// the torus).
    pub fn centroid(&self) -> Vec3<f64> {
        let x0 = self.vertices[0];
        let mut c = [0.0; 3];
        for x in &self.vertices {
            let d = self.ambient.delta(&x0, x);
            for k in 0..3 {
                c[k] += x0[k] + d[k];
            }
        }
        let n = self.vertices.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Relative standard deviation of the chart distances to the centroid.
    pub fn asphericity(&self) -> f64 {
        let c = self.centroid();
        let r: Vec<f64> = self
            .vertices
            .iter()
            .map(|x| {
                let d = self.ambient.delta(&c, x);
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })
            .collect();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        var.sqrt() / mean
    }

    /// Minimum interior angle (degrees) and the face attaining it.
    pub fn min_angle(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for f in 0..self.topology.n_faces() {
            let ang = crate::geom::corner_angles(&self.face_geom(f));
            for a in ang {
                if a.to_degrees() < best.0 {
                    best = (a.to_degrees(), f);
                }
            }
        }
        best
    }

    pub fn max_valence(&self) -> usize {
        (0..self.vertices.len()).map(|v| self.topology.neighbors(v).len()).max().unwrap_or(0)
    }
}
