use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Immersion, MeshError};
use crate::ambient::{stereographic, Ambient, AmbientKind};
use crate::real::Vec3;

/// 1-to-4 split; `mid` produces the new vertex of an edge.
fn split_faces<F>(verts: &mut Vec<Vec3<f64>>, faces: &[[usize; 3]], mut mid: F) -> Vec<[usize; 3]>
where
    F: FnMut(&Vec3<f64>, &Vec3<f64>) -> Vec3<f64>,
{
    let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::with_capacity(4 * faces.len());
    let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3<f64>>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&i) = cache.get(&key) {
            return i;
        }
        let p = mid(&verts[key.0], &verts[key.1]);
        verts.push(p);
        cache.insert(key, verts.len() - 1);
        verts.len() - 1
    };
    for &[a, b, c] in faces {
        let ab = midpoint(a, b, verts);
        let bc = midpoint(b, c, verts);
        let ca = midpoint(c, a, verts);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    out
}

/// Icosphere of the given chart radius about `center`, vertices relaxed
/// tangentially (see [`SPHERE_RELAX_ITERS`]).
pub fn make_sphere(subdiv: u32, radius: f64, center: Vec3<f64>, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::Argument(format!("sphere radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3<f64>> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |p: &Vec3<f64>| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    for v in verts.iter_mut() {
        *v = unit(v);
    }
    for _ in 0..subdiv {
        faces = split_faces(&mut verts, &faces, |a, b| unit(&[a[0] + b[0], a[1] + b[1], a[2] + b[2]]));
    }
    let verts = relax_on_sphere(verts, &faces, SPHERE_RELAX_ITERS);
    let verts = verts
        .into_iter()
        .map(|p| [center[0] + radius * p[0], center[1] + radius * p[1], center[2] + radius * p[2]])
        .collect();
    Immersion::new(verts, faces, ambient)
}

/// Umbrella iterations used by [`make_sphere`].
pub const SPHERE_RELAX_ITERS: usize = 100;

/// Jacobi umbrella smoothing projected back to the unit sphere. Removes the
/// density kinks along the icosahedron edges left by midpoint subdivision,
/// which otherwise show up as O(1) lines in fourth-order quantities.
fn relax_on_sphere(mut x: Vec<Vec3<f64>>, faces: &[[usize; 3]], iters: usize) -> Vec<Vec3<f64>> {
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); x.len()];
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if !nbrs[a].contains(&b) {
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
    }
    for _ in 0..iters {
        x = nbrs
            .iter()
            .map(|ring| {
                let mut s = [0.0; 3];
                for &w in ring {
                    for k in 0..3 {
                        s[k] += x[w][k];
                    }
                }
                let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
                [s[0] / n, s[1] / n, s[2] / n]
            })
            .collect();
    }
    x
}

fn grid_faces(nu: usize, nv: usize) -> Vec<[usize; 3]> {
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    faces
}

/// Torus of revolution about the chart z-axis with radii `big_r > small_r`.
pub fn make_torus(
    nu: usize,
    nv: usize,
    big_r: f64,
    small_r: f64,
    ambient: Arc<Ambient>,
) -> Result<Immersion, MeshError> {
    if nu < 3 || nv < 3 || !(big_r > small_r && small_r > 0.0) {
        return Err(MeshError::Argument(format!(
            "torus needs n_u, n_v >= 3 and R > r > 0 (got {nu}, {nv}, {big_r}, {small_r})"
        )));
    }
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let v = TAU * j as f64 / nv as f64;
            let w = big_r + small_r * v.cos();
            verts.push([w * u.cos(), w * u.sin(), small_r * v.sin()]);
        }
    }
    Immersion::new(verts, grid_faces(nu, nv), ambient)
}

/// Coordinate 2-torus `{z = height}` inside a flat 3-torus ambient.
pub fn make_flat_subtorus(n: usize, height: f64, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    let AmbientKind::FlatTorus { period } = *ambient.kind() else {
        return Err(MeshError::Argument("flat subtorus needs a flat-torus ambient".into()));
    };
    if n < 3 {
        return Err(MeshError::Argument(format!("flat subtorus needs n >= 3, got {n}")));
    }
    let h = period / n as f64;
    let mut verts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            verts.push([i as f64 * h, j as f64 * h, height]);
        }
    }
    Immersion::new(verts, grid_faces(n, n), ambient)
}

/// Minimal Clifford torus (both circle radii `r/√2`) in the round sphere of
/// radius `r`, in the stereographic chart.
pub fn make_clifford_torus(nu: usize, nv: usize, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    let AmbientKind::Sphere { radius } = *ambient.kind() else {
        return Err(MeshError::Argument("Clifford torus needs a sphere ambient".into()));
    };
    if nu < 3 || nv < 3 {
        return Err(MeshError::Argument(format!("Clifford torus needs n_u, n_v >= 3 (got {nu}, {nv})")));
    }
    let c = radius * FRAC_1_SQRT_2;
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let v = TAU * j as f64 / nv as f64;
            verts.push(stereographic(&[c * u.cos(), c * u.sin(), c * v.cos(), c * v.sin()], radius));
        }
    }
    Immersion::new(verts, grid_faces(nu, nv), ambient)
}

/// Genus-2 surface: boundary of a voxel slab with two square holes, each
/// quad split into two triangles, scaled to unit cell size `cell`.
pub fn make_genus2(cell: f64, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    const NX: usize = 5;
    const NY: usize = 3;
    const NZ: usize = 1;
    let filled = |x: isize, y: isize, z: isize| {
        (0..NX as isize).contains(&x)
            && (0..NY as isize).contains(&y)
            && (0..NZ as isize).contains(&z)
            && !(y == 1 && (x == 1 || x == 3))
    };
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut vid = |p: [usize; 3], verts: &mut Vec<Vec3<f64>>| -> usize {
        *index.entry(p).or_insert_with(|| {
            verts.push([p[0] as f64 * cell, p[1] as f64 * cell, p[2] as f64 * cell]);
            verts.len() - 1
        })
    };
    let mut faces = Vec::new();
    for x in 0..NX {
        for y in 0..NY {
            for z in 0..NZ {
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                if !filled(xi, yi, zi) {
                    continue;
                }
                for axis in 0..3 {
                    for sign in [1isize, -1] {
                        let mut nb = [xi, yi, zi];
                        nb[axis] += sign;
                        if filled(nb[0], nb[1], nb[2]) {
                            continue;
                        }
                        // in-plane axes (a, b) with e_a × e_b = e_axis
                        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                        let mut base = [x, y, z];
                        if sign > 0 {
                            base[axis] += 1;
                        }
                        let corner = |da: usize, db: usize| {
                            let mut p = base;
                            p[a] += da;
                            p[b] += db;
                            p
                        };
                        let mut q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        if sign < 0 {
                            q.reverse();
                        }
                        let ids: Vec<usize> = q.iter().map(|p| vid(*p, &mut verts)).collect();
                        faces.push([ids[0], ids[1], ids[2]]);
                        faces.push([ids[0], ids[2], ids[3]]);
                    }
                }
            }
        }
    }
    Immersion::new(verts, faces, ambient)
}

/// Midpoint 1-to-4 refinement (no smoothing).
pub fn refine(m: &Immersion) -> Result<Immersion, MeshError> {
    let amb = m.ambient().clone();
    let mut verts = m.vertices().to_vec();
    let faces = split_faces(&mut verts, m.faces(), |a, b| {
        let d = amb.delta(a, b);
        [a[0] + 0.5 * d[0], a[1] + 0.5 * d[1], a[2] + 0.5 * d[2]]
    });
    Immersion::new(verts, faces, amb)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perturbation {
    /// Zonal Legendre mode `P_l(cos θ)` about the chart z-axis through the
    /// centroid.
    Harmonic { l: u32 },
    /// Independent uniform values in `[-1, 1]` per vertex.
    Random,
}

fn legendre(l: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return p0;
    }
    for n in 1..l {
        let n = n as f64;
        let p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Displaces every vertex along its `ḡ`-unit normal by
/// `amplitude · field(v)`.
pub fn perturb(m: &Immersion, mode: Perturbation, amplitude: f64, seed: u64) -> Result<Immersion, MeshError> {
    if !(amplitude >= 0.0) {
        return Err(MeshError::Argument(format!("amplitude must be nonnegative, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(m.clone());
    }
    let normals = m.vertex_normals();
    let field: Vec<f64> = match mode {
        Perturbation::Harmonic { l } => {
            let c = m.centroid();
            m.vertices()
                .iter()
                .map(|x| {
                    let d = m.ambient().delta(&c, x);
                    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    legendre(l, if r > 0.0 { d[2] / r } else { 0.0 })
                })
                .collect()
        }
        Perturbation::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m.n_vertices()).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        }
    };
    let verts = m
        .vertices()
        .iter()
        .zip(&normals)
        .zip(&field)
        .map(|((x, n), s)| {
            let a = amplitude * s;
            [x[0] + a * n[0], x[1] + a * n[1], x[2] + a * n[2]]
        })
        .collect();
    m.with_positions(verts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eu() -> Arc<Ambient> {
        Arc::new(Ambient::euclidean())
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert_eq!(legendre(1, 0.3), 0.3);
        assert!((legendre(2, 0.3) - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((legendre(3, 0.5) - 0.5 * (5.0 * 0.125 - 1.5)).abs() < 1e-15);
    }

    #[test]
    fn icosphere_faces_point_outward() {
        let m = make_sphere(1, 1.0, [0.0; 3], eu()).unwrap();
        for f in 0..m.faces().len() {
            let g = m.face_geom(f);
            let [a, _, _] = m.faces()[f];
            assert!(crate::real::dot(&g.normal, &m.vertices()[a]) > 0.0);
        }
    }

    #[test]
    fn torus_faces_point_outward() {
        let m = make_torus(8, 6, 2.0, 0.5, eu()).unwrap();
        let g = m.face_geom(0);
        // first face sits at u≈0, v≈0 where the outward normal is +x
        assert!(g.normal[0] > 0.0);
    }

    #[test]
    fn genus2_characteristic() {
        let m = make_genus2(1.0, eu()).unwrap();
        assert_eq!(m.euler_characteristic(), -2);
    }

    #[test]
    fn generator_arguments_are_checked() {
        assert!(make_sphere(0, -1.0, [0.0; 3], eu()).is_err());
        assert!(make_torus(2, 8, 2.0, 0.5, eu()).is_err());
        assert!(make_torus(8, 8, 0.5, 2.0, eu()).is_err());
        assert!(make_flat_subtorus(8, 0.0, eu()).is_err());
        assert!(make_clifford_torus(8, 8, eu()).is_err());
    }
}
