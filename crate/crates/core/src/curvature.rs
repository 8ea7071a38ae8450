//! Discrete fundamental forms, curvatures, energies and residuals.
//!
//! Conventions: `ν` is the vertex normal (outward for the generated
//! spheres, see [`corner_normal`](crate::geom::corner_normal)), `S = −∇ν` is fitted per vertex in a `ḡ`-orthonormal
//! tangent frame, `H = tr S` (the unit sphere has `H = −2`), `|A|² = |S|²`.
//! The trace of `S` is taken from the cotangent Laplacian so that the energy
//! has a consistent derivative; the fit supplies only the trace-free part.
//! Integrals use mixed Voronoi dual areas.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ambient::Ambient;
use crate::geom::{corner_angles, corner_normal, face_geom, metric_cross, normalize_in, star_shape, StarShape};
use crate::mesh::{Immersion, Topology};
use crate::real::{inner, Mat3, Real, Vec3};

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error("Euler characteristic {0} is odd; a closed orientable surface must have even χ")]
    OddEuler(i64),
    #[error("{0}")]
    NotApplicable(String),
}

/// Per-face and per-vertex curvature data of an immersion.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    /// Induced metric in the basis of the two edges leaving corner 0.
    pub face_metric: Vec<[[f64; 2]; 2]>,
    pub normals: Vec<Vec3<f64>>,
    pub frames: Vec<[Vec3<f64>; 2]>,
    /// Second fundamental form (scalar, codim 1) in the vertex frame.
    pub second_form: Vec<[[f64; 2]; 2]>,
    pub abs_a2: Vec<f64>,
    /// Scalar mean curvature `tr S`.
    pub mean: Vec<f64>,
    /// Mean curvature vector `H ν`.
    pub mean_vector: Vec<Vec3<f64>>,
    pub angle_defect: Vec<f64>,
    /// Angle defect divided by the dual area.
    pub gauss: Vec<f64>,
    pub dual_area: Vec<f64>,
}

impl CurvatureField {
    pub fn abs_h2(&self) -> Vec<f64> {
        self.mean.iter().map(|h| h * h).collect()
    }

    pub fn energy(&self) -> f64 {
        self.abs_a2.iter().zip(&self.dual_area).map(|(a, w)| a * w).sum()
    }

    pub fn willmore(&self) -> f64 {
        0.25 * self.mean.iter().zip(&self.dual_area).map(|(h, w)| h * h * w).sum::<f64>()
    }

    pub fn max_a2(&self) -> f64 {
        self.abs_a2.iter().cloned().fold(0.0, f64::max)
    }
}

/// `ḡ`-unit vertex normal at `v`.
pub(crate) fn vertex_normal_at<T: Real>(
    amb: &Ambient,
    topo: &Topology,
    v: usize,
    pos: &impl Fn(usize) -> Vec3<T>,
) -> Vec3<T> {
    let mut n = [T::zero(); 3];
    for &f in topo.vertex_faces(v) {
        let fv = topo.faces()[f];
        let k = fv.iter().position(|&u| u == v).unwrap();
        let p = [pos(fv[0]), pos(fv[1]), pos(fv[2])];
        let cn = corner_normal(&face_geom(amb, [&p[0], &p[1], &p[2]]), k);
        for c in 0..3 {
            n[c] += cn[c];
        }
    }
    normalize_in(&amb.metric_lift(&pos(v)), &n)
}

/// Shape operator and dual area at `v`. The trace-free part comes from the
/// normal fit, the trace from the cotangent tension field
/// `Δx + Σ_k Γ̄(t_k, t_k)` paired with `ν`.
pub(crate) fn star_at<T: Real>(
    amb: &Ambient,
    topo: &Topology,
    v: usize,
    pos: &impl Fn(usize) -> Vec3<T>,
    nrm: &impl Fn(usize) -> Vec3<T>,
) -> (StarShape<T>, T) {
    let x = pos(v);
    let g = amb.metric_lift(&x);
    let nu = nrm(v);
    let ring = topo.neighbors(v);
    let np: Vec<Vec3<T>> = ring.iter().map(|&w| pos(w)).collect();
    let nn: Vec<Vec3<T>> = ring.iter().map(|&w| nrm(w)).collect();
    let mut s = star_shape(amb, &x, &nu, &g, &np, &nn);
    let mut area = T::zero();
    let mut lap = [T::zero(); 3];
    for &f in topo.vertex_faces(v) {
        let fv = topo.faces()[f];
        let k = fv.iter().position(|&u| u == v).unwrap();
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        let p = [pos(fv[0]), pos(fv[1]), pos(fv[2])];
        let fg = face_geom(amb, [&p[0], &p[1], &p[2]]);
        area += fg.corner_area[k];
        let ea = amb.delta(&x, &p[a]);
        let eb = amb.delta(&x, &p[b]);
        for c in 0..3 {
            lap[c] += (fg.cot[b] * ea[c] + fg.cot[a] * eb[c]).scale(0.5);
        }
    }
    let mut tension = [lap[0] / area, lap[1] / area, lap[2] / area];
    if !amb.is_flat_constant() {
        let gam = amb.christoffel_lift(&x);
        for t in &s.frame {
            for (c, out) in tension.iter_mut().enumerate() {
                let mut acc = T::zero();
                for i in 0..3 {
                    for j in 0..3 {
                        acc += gam[c][i][j] * t[i] * t[j];
                    }
                }
                *out += acc;
            }
        }
    }
    s.set_trace(inner(&g, &tension, &nu));
    (s, area)
}

pub(crate) fn shape_at<T: Real>(
    amb: &Ambient,
    topo: &Topology,
    v: usize,
    pos: &impl Fn(usize) -> Vec3<T>,
    nrm: &impl Fn(usize) -> Vec3<T>,
) -> StarShape<T> {
    star_at(amb, topo, v, pos, nrm).0
}

/// `(|A|²·dualarea, H²·dualarea)` at one vertex.
pub(crate) fn vertex_energy<T: Real>(
    amb: &Ambient,
    topo: &Topology,
    v: usize,
    pos: &impl Fn(usize) -> Vec3<T>,
    nrm: &impl Fn(usize) -> Vec3<T>,
) -> (T, T) {
    let (s, w) = star_at(amb, topo, v, pos, nrm);
    let h = s.mean();
    (s.norm2() * w, h * h * w)
}

pub fn fundamental_forms(m: &Immersion) -> CurvatureField {
    let amb = m.ambient().as_ref();
    let topo = m.topology().as_ref();
    let x = m.vertices();
    let nv = x.len();
    let faces = topo.faces();
    let fgs: Vec<_> = (0..faces.len()).into_par_iter().map(|f| m.face_geom(f)).collect();
    let mut dual_area = vec![0.0; nv];
    let mut angle_sum = vec![0.0; nv];
    let mut normal_acc = vec![[0.0; 3]; nv];
    for (f, fg) in fgs.iter().enumerate() {
        let ang = corner_angles(fg);
        for k in 0..3 {
            let v = faces[f][k];
            dual_area[v] += fg.corner_area[k];
            angle_sum[v] += ang[k];
            let cn = corner_normal(fg, k);
            for c in 0..3 {
                normal_acc[v][c] += cn[c];
            }
        }
    }
    let normals: Vec<Vec3<f64>> = (0..nv).map(|v| normalize_in(&amb.metric_unchecked(&x[v]), &normal_acc[v])).collect();
    let pos = |i: usize| x[i];
    let nrm = |i: usize| normals[i];
    let shapes: Vec<StarShape<f64>> = (0..nv).into_par_iter().map(|v| shape_at(amb, topo, v, &pos, &nrm)).collect();
    let face_metric = fgs
        .iter()
        .enumerate()
        .map(|(f, fg)| {
            let [a, b, c] = faces[f];
            let e1 = amb.delta(&x[a], &x[b]);
            let e2 = amb.delta(&x[a], &x[c]);
            let g = &fg.metric;
            [[inner(g, &e1, &e1), inner(g, &e1, &e2)], [inner(g, &e2, &e1), inner(g, &e2, &e2)]]
        })
        .collect();
    let angle_defect: Vec<f64> = angle_sum.iter().map(|s| 2.0 * PI - s).collect();
    let gauss = angle_defect.iter().zip(&dual_area).map(|(d, a)| d / a).collect();
    let mean: Vec<f64> = shapes.iter().map(|s| s.mean()).collect();
    let mean_vector = mean.iter().zip(&normals).map(|(h, n)| [h * n[0], h * n[1], h * n[2]]).collect();
    CurvatureField {
        face_metric,
        frames: shapes.iter().map(|s| s.frame).collect(),
        second_form: shapes.iter().map(|s| s.s).collect(),
        abs_a2: shapes.iter().map(|s| s.norm2()).collect(),
        mean,
        mean_vector,
        normals,
        angle_defect,
        gauss,
        dual_area,
    }
}

pub fn energy_e(m: &Immersion) -> f64 {
    fundamental_forms(m).energy()
}

pub fn energy_w(m: &Immersion) -> f64 {
    fundamental_forms(m).willmore()
}

/// `|Σ_v k_g·dualarea − 2πχ|`.
pub fn gauss_bonnet_residual(m: &Immersion) -> f64 {
    let cf = fundamental_forms(m);
    let total: f64 = cf.angle_defect.iter().sum();
    (total - 2.0 * PI * m.euler_characteristic() as f64).abs()
}

/// `(E − 4W + 4πχ) / E`; vanishes in the continuum for flat ambients.
pub fn gauss_equation_residual(m: &Immersion) -> f64 {
    let cf = fundamental_forms(m);
    let e = cf.energy();
    (e - 4.0 * cf.willmore() + 4.0 * PI * m.euler_characteristic() as f64) / e
}

/// Nearest integer to `∫k_g / 4π` and the distance to it.
pub fn white_multiple_check(m: &Immersion) -> Result<(i64, f64), CurvatureError> {
    if !m.ambient().is_euclidean() {
        return Err(CurvatureError::NotApplicable("integrality check needs a euclidean ambient".into()));
    }
    let chi = m.euler_characteristic();
    if chi % 2 != 0 {
        return Err(CurvatureError::OddEuler(chi));
    }
    let cf = fundamental_forms(m);
    let q = cf.angle_defect.iter().sum::<f64>() / (4.0 * PI);
    let n = q.round();
    Ok((n as i64, (q - n).abs()))
}

#[derive(Clone, Debug, Serialize)]
pub struct CodazziReport {
    pub per_vertex: Vec<f64>,
    pub per_face: Vec<f64>,
    pub l2: f64,
    /// `|∇A|` per face (same discretization), used by the interior monitor.
    pub nabla_a: Vec<f64>,
}

/// Ambient lower-index tensor `T = S_ij t_i♭ ⊗ t_j♭`, which restricts to the
/// second fundamental form on the tangent plane and kills `ν`.
fn ambient_second_form(g: &Mat3<f64>, frame: &[Vec3<f64>; 2], s: &[[f64; 2]; 2]) -> Mat3<f64> {
    let flat = |t: &Vec3<f64>| crate::real::mat_vec(g, t);
    let tf = [flat(&frame[0]), flat(&frame[1])];
    let mut out = [[0.0; 3]; 3];
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] += s[i][j] * tf[i][a] * tf[j][b];
                }
            }
        }
    }
    out
}

pub(crate) fn ambient_second_form_pub(g: &Mat3<f64>, frame: &[Vec3<f64>; 2], s: &[[f64; 2]; 2]) -> Mat3<f64> {
    ambient_second_form(g, frame, s)
}

fn bilinear(t: &Mat3<f64>, a: &Vec3<f64>, b: &Vec3<f64>) -> f64 {
    inner(t, a, b)
}

/// Antisymmetrized covariant derivative of `A` minus the ambient curvature
/// term, per face (linear interpolation of the vertex tensors).
pub fn codazzi_residual(m: &Immersion) -> CodazziReport {
    let cf = fundamental_forms(m);
    codazzi_from_field(m, &cf)
}

pub fn codazzi_from_field(m: &Immersion, cf: &CurvatureField) -> CodazziReport {
    let amb = m.ambient().as_ref();
    let x = m.vertices();
    let faces = m.faces();
    let tensors: Vec<Mat3<f64>> = (0..x.len())
        .map(|v| ambient_second_form(&amb.metric_unchecked(&x[v]), &cf.frames[v], &cf.second_form[v]))
        .collect();
    let results: Vec<(f64, f64, f64)> = (0..faces.len())
        .into_par_iter()
        .map(|f| {
            let [a, b, c] = faces[f];
            let fg = m.face_geom(f);
            let g = fg.metric;
            let e1 = amb.delta(&x[a], &x[b]);
            let e2 = amb.delta(&x[a], &x[c]);
            let bary =
                [x[a][0] + (e1[0] + e2[0]) / 3.0, x[a][1] + (e1[1] + e2[1]) / 3.0, x[a][2] + (e1[2] + e2[2]) / 3.0];
            let nu = normalize_in(&g, &fg.normal);
            let u1 = normalize_in(&g, &e1);
            let u2 = metric_cross(&g, &nu, &u1);
            let gram = [[inner(&g, &e1, &e1), inner(&g, &e1, &e2)], [inner(&g, &e1, &e2), inner(&g, &e2, &e2)]];
            let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
            let coef = |u: &Vec3<f64>| {
                let r = [inner(&g, u, &e1), inner(&g, u, &e2)];
                [(gram[1][1] * r[0] - gram[0][1] * r[1]) / det, (gram[0][0] * r[1] - gram[0][1] * r[0]) / det]
            };
            let mut d1 = [[0.0; 3]; 3];
            let mut d2 = [[0.0; 3]; 3];
            let mut tf = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    d1[i][j] = tensors[b][i][j] - tensors[a][i][j];
                    d2[i][j] = tensors[c][i][j] - tensors[a][i][j];
                    tf[i][j] = (tensors[a][i][j] + tensors[b][i][j] + tensors[c][i][j]) / 3.0;
                }
            }
            let gamma = amb.christoffel_unchecked(&bary);
            let gam = |p: &Vec3<f64>, q: &Vec3<f64>| {
                let mut o = [0.0; 3];
                for (k, ok) in o.iter_mut().enumerate() {
                    for i in 0..3 {
                        for j in 0..3 {
                            *ok += gamma[k][i][j] * p[i] * q[j];
                        }
                    }
                }
                o
            };
            let us = [u1, u2];
            // nabla[i](Y, Z) for X = u_i
            let cov = |i: usize, y: &Vec3<f64>, z: &Vec3<f64>| {
                let c = coef(&us[i]);
                let mut dx = [[0.0; 3]; 3];
                for p in 0..3 {
                    for q in 0..3 {
                        dx[p][q] = c[0] * d1[p][q] + c[1] * d2[p][q];
                    }
                }
                bilinear(&dx, y, z) - bilinear(&tf, &gam(&us[i], y), z) - bilinear(&tf, y, &gam(&us[i], z))
            };
            let rm = amb.riemann_unchecked(&bary);
            let r4 = |p: &Vec3<f64>, q: &Vec3<f64>, s: &Vec3<f64>, t: &Vec3<f64>| {
                let mut acc = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                acc += rm[i][j][k][l] * p[i] * q[j] * s[k] * t[l];
                            }
                        }
                    }
                }
                acc
            };
            let mut res2 = 0.0;
            for z in &us {
                let r = cov(0, &u2, z) - cov(1, &u1, z) - r4(&u1, &u2, z, &nu);
                res2 += r * r;
            }
            let mut na2 = 0.0;
            for i in 0..2 {
                for y in &us {
                    for z in &us {
                        let v = cov(i, y, z);
                        na2 += v * v;
                    }
                }
            }
            (res2.sqrt(), fg.area, na2.sqrt())
        })
        .collect();
    let per_face: Vec<f64> = results.iter().map(|r| r.0).collect();
    let l2 = results.iter().map(|r| r.0 * r.0 * r.1).sum::<f64>().sqrt();
    let mut acc = vec![0.0; x.len()];
    let mut wsum = vec![0.0; x.len()];
    for (f, r) in results.iter().enumerate() {
        for &v in &faces[f] {
            acc[v] += r.0 * r.1;
            wsum[v] += r.1;
        }
    }
    let per_vertex = acc.iter().zip(&wsum).map(|(a, w)| a / w).collect();
    CodazziReport { per_vertex, per_face, l2, nabla_a: results.iter().map(|r| r.2).collect() }
}
