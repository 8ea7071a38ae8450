//! L² gradient of `E`: exact derivative of the discrete energy (the flow
//! driver) and a direct discretization of the continuum formula (a
//! cross-check), plus first-variation validators.
//!
//! Normalization: `dE(V) = Σ_v ḡ(grad_v, V_v) · dualarea_v`, so the flow
//! `∂ₜx = −grad` dissipates `dE/dt = −‖grad‖²`. In the continuum the normal
//! speed is `2(∇^i∇^j h_ij + tr h³ − ½|h|²H + h^{ij} R̄(ν, e_i, e_j, ν))`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curvature::{fundamental_forms, shape_at, vertex_energy, vertex_normal_at, CurvatureField};
use crate::geom::{metric_cross, normalize_in};
use crate::mesh::{Immersion, MeshError};
use crate::real::{inner, inv3, lift_const, mat_vec, Dual, Vec3};

#[derive(Debug, Error)]
pub enum GradientError {
    #[error("mesh quality gate failed at face {face}: {reason}")]
    MeshQuality { face: usize, reason: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("vector field has {got} entries, mesh has {expected} vertices")]
    FieldLength { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientKind {
    Variational,
    Analytic,
}

#[derive(Clone, Debug)]
pub struct GradientField {
    pub kind: GradientKind,
    /// Chart components (index raised with `ḡ`).
    pub vectors: Vec<Vec3<f64>>,
    pub dual_area: Vec<f64>,
    /// `‖grad‖_{L²}` with dual-area weights.
    pub l2_norm: f64,
    /// Largest pointwise `ḡ`-norm.
    pub max_norm: f64,
}

impl GradientField {
    fn new(m: &Immersion, kind: GradientKind, vectors: Vec<Vec3<f64>>, dual_area: Vec<f64>) -> Self {
        let amb = m.ambient();
        let mut l2 = 0.0;
        let mut mx: f64 = 0.0;
        for ((g, a), x) in vectors.iter().zip(&dual_area).zip(m.vertices()) {
            let n2 = inner(&amb.metric_unchecked(x), g, g);
            l2 += n2 * a;
            mx = mx.max(n2.sqrt());
        }
        GradientField { kind, vectors, dual_area, l2_norm: l2.sqrt(), max_norm: mx }
    }

    /// `Σ_v ḡ(grad_v, V_v) dualarea_v`.
    pub fn pair(&self, m: &Immersion, v: &[Vec3<f64>]) -> f64 {
        self.vectors
            .iter()
            .zip(v)
            .zip(&self.dual_area)
            .zip(m.vertices())
            .map(|(((g, w), a), x)| inner(&m.ambient().metric_unchecked(x), g, w) * a)
            .sum()
    }
}

/// Thresholds protecting the fourth-order stencils of the analytic route.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QualityGate {
    pub min_angle_deg: f64,
    pub max_valence: usize,
}

impl Default for QualityGate {
    fn default() -> Self {
        QualityGate { min_angle_deg: 15.0, max_valence: 12 }
    }
}

/// Exact partial derivatives `∂E/∂x_v` (chart covectors), forward mode, one
/// vertex at a time over its 2-ring.
pub fn energy_derivative(m: &Immersion) -> Vec<Vec3<f64>> {
    let amb = m.ambient().as_ref();
    let topo = m.topology().as_ref();
    let x = m.vertices();
    let normals = m.vertex_normals();
    (0..x.len())
        .into_par_iter()
        .map(|v| {
            let seed = Dual::variables(x[v]);
            let pos = |i: usize| if i == v { seed } else { lift_const::<Dual>(&x[i]) };
            let ring = topo.neighbors(v);
            let mut local: Vec<(usize, Vec3<Dual>)> = Vec::with_capacity(ring.len() + 1);
            local.push((v, vertex_normal_at(amb, topo, v, &pos)));
            for &w in ring {
                local.push((w, vertex_normal_at(amb, topo, w, &pos)));
            }
            let nrm = |i: usize| match local.iter().find(|(j, _)| *j == i) {
                Some((_, n)) => *n,
                None => lift_const(&normals[i]),
            };
            let mut d = [0.0; 3];
            for u in topo.two_ring(v) {
                let (e, _) = vertex_energy(amb, topo, u, &pos, &nrm);
                for k in 0..3 {
                    d[k] += e.d[k];
                }
            }
            d
        })
        .collect()
}

pub fn grad_e_variational(m: &Immersion) -> GradientField {
    let dual = fundamental_forms(m).dual_area;
    grad_from_derivative(m, energy_derivative(m), dual)
}

pub(crate) fn grad_from_derivative(m: &Immersion, d: Vec<Vec3<f64>>, dual: Vec<f64>) -> GradientField {
    let amb = m.ambient();
    let vectors = d
        .iter()
        .zip(m.vertices())
        .zip(&dual)
        .map(|((dv, x), a)| {
            let (gi, _) = inv3(&amb.metric_unchecked(x));
            let r = mat_vec(&gi, dv);
            [r[0] / a, r[1] / a, r[2] / a]
        })
        .collect();
    GradientField::new(m, GradientKind::Variational, vectors, dual)
}

pub fn check_quality(m: &Immersion, gate: &QualityGate) -> Result<(), GradientError> {
    let (ang, face) = m.min_angle();
    if ang < gate.min_angle_deg {
        return Err(GradientError::MeshQuality {
            face,
            reason: format!("minimum angle {ang:.2}° below {:.2}°", gate.min_angle_deg),
        });
    }
    for v in 0..m.n_vertices() {
        let val = m.topology().neighbors(v).len();
        if val > gate.max_valence {
            let face = m.topology().vertex_faces(v)[0];
            return Err(GradientError::MeshQuality {
                face,
                reason: format!("vertex {v} has valence {val} above {}", gate.max_valence),
            });
        }
    }
    Ok(())
}

fn lowered_riemann_eval(
    rm: &crate::ambient::Riemann,
    a: &Vec3<f64>,
    b: &Vec3<f64>,
    c: &Vec3<f64>,
    d: &Vec3<f64>,
) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    s += rm[i][j][k][l] * a[i] * b[j] * c[k] * d[l];
                }
            }
        }
    }
    s
}

/// Per-vertex normal speed of the analytic gradient.
pub fn analytic_speed(m: &Immersion, cf: &CurvatureField) -> Vec<f64> {
    let amb = m.ambient().as_ref();
    let x = m.vertices();
    let faces = m.faces();
    let nv = x.len();
    let fgs: Vec<_> = (0..faces.len()).map(|f| m.face_geom(f)).collect();
    // cotangent Laplacian of the scalar mean curvature
    let mut lap = vec![0.0; nv];
    for (f, fg) in fgs.iter().enumerate() {
        for i in 0..3 {
            let j = faces[f][(i + 1) % 3];
            let k = faces[f][(i + 2) % 3];
            let w = 0.5 * fg.cot[i];
            lap[j] += w * (cf.mean[k] - cf.mean[j]);
            lap[k] += w * (cf.mean[j] - cf.mean[k]);
        }
    }
    let curved = !amb.is_flat_constant();
    // ω(Y) = Σ_k R̄(e_k, Y, e_k, ν), only nonzero off space forms
    let mut div_omega = vec![0.0; nv];
    let mut r_term = vec![0.0; nv];
    if curved {
        let rms: Vec<_> = x.iter().map(|p| amb.riemann_unchecked(p)).collect();
        let omega: Vec<Vec3<f64>> = (0..nv)
            .map(|v| {
                let t = &cf.frames[v];
                let nu = &cf.normals[v];
                let mut o = [0.0; 3];
                for j in 0..2 {
                    let c = (0..2).map(|k| lowered_riemann_eval(&rms[v], &t[k], &t[j], &t[k], nu)).sum::<f64>();
                    for q in 0..3 {
                        o[q] += c * t[j][q];
                    }
                }
                o
            })
            .collect();
        for v in 0..nv {
            let t = &cf.frames[v];
            let nu = &cf.normals[v];
            let s = &cf.second_form[v];
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    acc += s[i][j] * lowered_riemann_eval(&rms[v], nu, &t[i], &t[j], nu);
                }
            }
            r_term[v] = acc;
        }
        for (f, fg) in fgs.iter().enumerate() {
            let fv = faces[f];
            let g = &fg.metric;
            let nu_f = normalize_in(g, &fg.normal);
            let mut xf = [0.0; 3];
            for &v in &fv {
                for q in 0..3 {
                    xf[q] += omega[v][q] / 3.0;
                }
            }
            let c = inner(g, &xf, &nu_f);
            for q in 0..3 {
                xf[q] -= c * nu_f[q];
            }
            for i in 0..3 {
                let v = fv[i];
                let a = fv[(i + 1) % 3];
                let b = fv[(i + 2) % 3];
                let d = amb.delta(&x[a], &x[b]);
                let len = inner(g, &d, &d).sqrt();
                let mut n = normalize_in(g, &metric_cross(g, &d, &nu_f));
                if inner(g, &n, &amb.delta(&x[v], &x[a])) < 0.0 {
                    n = [-n[0], -n[1], -n[2]];
                }
                div_omega[v] += 0.5 * inner(g, &xf, &n) * len;
            }
        }
    }
    (0..nv)
        .map(|v| {
            let a = cf.dual_area[v];
            let s = &cf.second_form[v];
            let s2 = [
                [s[0][0] * s[0][0] + s[0][1] * s[1][0], s[0][0] * s[0][1] + s[0][1] * s[1][1]],
                [s[1][0] * s[0][0] + s[1][1] * s[1][0], s[1][0] * s[0][1] + s[1][1] * s[1][1]],
            ];
            let tr3 = s2[0][0] * s[0][0] + s2[0][1] * s[1][0] + s2[1][0] * s[0][1] + s2[1][1] * s[1][1];
            let h = cf.mean[v];
            2.0 * (lap[v] / a + div_omega[v] / a + tr3 - 0.5 * cf.abs_a2[v] * h + r_term[v])
        })
        .collect()
}

pub fn grad_e_analytic(m: &Immersion, gate: &QualityGate) -> Result<GradientField, GradientError> {
    check_quality(m, gate)?;
    let cf = fundamental_forms(m);
    let speed = analytic_speed(m, &cf);
    let vectors = speed.iter().zip(&cf.normals).map(|(s, n)| [s * n[0], s * n[1], s * n[2]]).collect();
    Ok(GradientField::new(m, GradientKind::Analytic, vectors, cf.dual_area))
}

fn check_len(m: &Immersion, v: &[Vec3<f64>]) -> Result<(), GradientError> {
    if v.len() != m.n_vertices() {
        return Err(GradientError::FieldLength { got: v.len(), expected: m.n_vertices() });
    }
    Ok(())
}

/// Normal part of a vertex field, and its scalar components.
pub fn normal_projection(m: &Immersion, normals: &[Vec3<f64>], v: &[Vec3<f64>]) -> (Vec<Vec3<f64>>, Vec<f64>) {
    let amb = m.ambient();
    let mut out = Vec::with_capacity(v.len());
    let mut phi = Vec::with_capacity(v.len());
    for ((w, n), x) in v.iter().zip(normals).zip(m.vertices()) {
        let c = inner(&amb.metric_unchecked(x), w, n);
        phi.push(c);
        out.push([c * n[0], c * n[1], c * n[2]]);
    }
    (out, phi)
}

fn displaced(m: &Immersion, v: &[Vec3<f64>], eps: f64) -> Result<Immersion, MeshError> {
    let verts =
        m.vertices().iter().zip(v).map(|(x, w)| [x[0] + eps * w[0], x[1] + eps * w[1], x[2] + eps * w[2]]).collect();
    m.with_positions(verts)
}

/// Step for central differences along `v`: `1e-6 · mean edge / max|v|`.
pub fn fd_step(m: &Immersion, v: &[Vec3<f64>]) -> f64 {
    let vmax = v.iter().map(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()).fold(0.0, f64::max);
    if vmax == 0.0 {
        0.0
    } else {
        1e-6 * m.mean_edge_length() / vmax
    }
}

/// Central difference of `f` along the vertex field `v` (zero for `v = 0`).
pub fn directional_fd<F>(m: &Immersion, v: &[Vec3<f64>], f: F) -> Result<f64, GradientError>
where
    F: Fn(&Immersion) -> f64,
{
    check_len(m, v)?;
    let h = fd_step(m, v);
    if h == 0.0 {
        return Ok(0.0);
    }
    let p = displaced(m, v, h)?;
    let q = displaced(m, v, -h)?;
    Ok((f(&p) - f(&q)) / (2.0 * h))
}

/// `(d/dε area, −Σ ḡ(V, H) dualarea)` for the normal part of `v`.
pub fn first_variation_area(m: &Immersion, v: &[Vec3<f64>]) -> Result<(f64, f64), GradientError> {
    check_len(m, v)?;
    let cf = fundamental_forms(m);
    let (vn, _) = normal_projection(m, &cf.normals, v);
    let lhs = directional_fd(m, &vn, |p| p.area())?;
    let amb = m.ambient();
    let rhs = -vn
        .iter()
        .zip(&cf.mean_vector)
        .zip(&cf.dual_area)
        .zip(m.vertices())
        .map(|(((w, h), a), x)| inner(&amb.metric_unchecked(x), w, h) * a)
        .sum::<f64>();
    Ok((lhs, rhs))
}

/// `(d/dε E, Σ ḡ(grad_analytic, V) dualarea)` for the normal part of `v`.
pub fn first_variation_energy(m: &Immersion, v: &[Vec3<f64>], gate: &QualityGate) -> Result<(f64, f64), GradientError> {
    check_len(m, v)?;
    let cf = fundamental_forms(m);
    let (vn, _) = normal_projection(m, &cf.normals, v);
    let lhs = directional_fd(m, &vn, |p| fundamental_forms(p).energy())?;
    let rhs = grad_e_analytic(m, gate)?.pair(m, &vn);
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VariationResidual {
    /// `‖δA_FD − rhs‖_{L²}`.
    pub residual: f64,
    /// `‖rhs‖_{L²}`, for relative comparisons.
    pub reference: f64,
}

impl VariationResidual {
    pub fn relative(&self) -> f64 {
        if self.reference > 0.0 {
            self.residual / self.reference
        } else {
            self.residual
        }
    }
}

/// Least-squares fit of the tangential Hessian of `phi` at `v` in the
/// tangent-plane coordinates of the frame.
fn hessian_fit(m: &Immersion, cf: &CurvatureField, phi: &[f64], v: usize) -> [[f64; 2]; 2] {
    use nalgebra::{DMatrix, DVector};
    let amb = m.ambient();
    let x = m.vertices();
    let g = amb.metric_unchecked(&x[v]);
    let t = &cf.frames[v];
    let ring = m.topology().neighbors(v);
    let mut rows = Vec::with_capacity(5 * ring.len());
    let mut rhs = Vec::with_capacity(ring.len());
    for &w in ring {
        let e = amb.delta(&x[v], &x[w]);
        let a1 = inner(&g, &e, &t[0]);
        let a2 = inner(&g, &e, &t[1]);
        rows.extend_from_slice(&[a1, a2, 0.5 * a1 * a1, a1 * a2, 0.5 * a2 * a2]);
        rhs.push(phi[w] - phi[v]);
    }
    let a = DMatrix::from_row_slice(ring.len(), 5, &rows);
    let b = DVector::from_vec(rhs);
    let sol = a.svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(5));
    [[sol[2], sol[3]], [sol[3], sol[4]]]
}

/// Residual of the first-variation formula for `A` along the normal part of
/// `v`: `δh_ij = ∇²_ij φ − φ (h²)_ij + φ R̄(ν, e_i, e_j, ν)`.
pub fn first_variation_a(m: &Immersion, v: &[Vec3<f64>]) -> Result<VariationResidual, GradientError> {
    check_len(m, v)?;
    let amb = m.ambient().clone();
    let x = m.vertices();
    let cf = fundamental_forms(m);
    let (vn, phi) = normal_projection(m, &cf.normals, v);
    let h = fd_step(m, &vn);
    if h == 0.0 {
        return Ok(VariationResidual { residual: 0.0, reference: 0.0 });
    }
    let nv = x.len();
    let topo = m.topology();
    // coefficients expressing the frame in the first two projected edges
    let coeffs: Vec<[[f64; 2]; 2]> = (0..nv)
        .map(|u| {
            let g = amb.metric_unchecked(&x[u]);
            let ring = topo.neighbors(u);
            let t = &cf.frames[u];
            let e: Vec<Vec3<f64>> = ring[..2].iter().map(|&w| amb.delta(&x[u], &x[w])).collect();
            let b = [
                [inner(&g, &e[0], &t[0]), inner(&g, &e[0], &t[1])],
                [inner(&g, &e[1], &t[0]), inner(&g, &e[1], &t[1])],
            ];
            let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
            // C = B^{-1}, t_i = Σ_a C[i][a] P e_a
            [[b[1][1] / det, -b[0][1] / det], [-b[1][0] / det, b[0][0] / det]]
        })
        .collect();
    let forms = |mm: &Immersion| -> Vec<[[f64; 2]; 2]> {
        let c = fundamental_forms(mm);
        let y = mm.vertices();
        (0..nv)
            .map(|u| {
                let g = amb.metric_unchecked(&y[u]);
                let t = crate::curvature::ambient_second_form_pub(&g, &c.frames[u], &c.second_form[u]);
                let ring = topo.neighbors(u);
                let e: Vec<Vec3<f64>> = ring[..2].iter().map(|&w| amb.delta(&y[u], &y[w])).collect();
                let cu = &coeffs[u];
                let uvec: Vec<Vec3<f64>> = (0..2)
                    .map(|i| {
                        let mut o = [0.0; 3];
                        for a in 0..2 {
                            for q in 0..3 {
                                o[q] += cu[i][a] * e[a][q];
                            }
                        }
                        o
                    })
                    .collect();
                [
                    [inner(&t, &uvec[0], &uvec[0]), inner(&t, &uvec[0], &uvec[1])],
                    [inner(&t, &uvec[1], &uvec[0]), inner(&t, &uvec[1], &uvec[1])],
                ]
            })
            .collect()
    };
    let hp = forms(&displaced(m, &vn, h)?);
    let hm = forms(&displaced(m, &vn, -h)?);
    let mut res = 0.0;
    let mut refn = 0.0;
    for u in 0..nv {
        let s = &cf.second_form[u];
        let hess = hessian_fit(m, &cf, &phi, u);
        let rm = amb.riemann_unchecked(&x[u]);
        let t = &cf.frames[u];
        let nu = &cf.normals[u];
        for i in 0..2 {
            for j in 0..2 {
                let s2 = s[i][0] * s[0][j] + s[i][1] * s[1][j];
                let r = lowered_riemann_eval(&rm, nu, &t[i], &t[j], nu);
                let rhs = hess[i][j] - phi[u] * s2 + phi[u] * r;
                let fd = (hp[u][i][j] - hm[u][i][j]) / (2.0 * h);
                res += (fd - rhs) * (fd - rhs) * cf.dual_area[u];
                refn += rhs * rhs * cf.dual_area[u];
            }
        }
    }
    Ok(VariationResidual { residual: res.sqrt(), reference: refn.sqrt() })
}

/// Per-vertex shape operators at the current positions (used by tests).
pub fn shape_operators(m: &Immersion) -> Vec<[[f64; 2]; 2]> {
    let amb = m.ambient().as_ref();
    let topo = m.topology().as_ref();
    let x = m.vertices();
    let normals = m.vertex_normals();
    (0..x.len()).map(|v| shape_at(amb, topo, v, &|i| x[i], &|i| normals[i]).s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::Ambient;
    use crate::mesh::{make_flat_subtorus, make_sphere, perturb, Perturbation};
    use std::sync::Arc;

    #[test]
    fn derivative_matches_central_difference() {
        let m = make_sphere(2, 1.0, [0.0; 3], Arc::new(Ambient::euclidean())).unwrap();
        let m = perturb(&m, Perturbation::Random, 0.03, 1).unwrap();
        let d = energy_derivative(&m);
        let e = |p: &Immersion| fundamental_forms(p).energy();
        for &v in &[0usize, 17, 100] {
            for k in 0..3 {
                let mut w = vec![[0.0; 3]; m.n_vertices()];
                w[v][k] = 1.0;
                let fd = directional_fd(&m, &w, e).unwrap();
                assert!((fd - d[v][k]).abs() < 1e-6 * (1.0 + d[v][k].abs()), "v={v} k={k}: {fd} vs {}", d[v][k]);
            }
        }
    }

    #[test]
    fn flat_subtorus_gradient_vanishes() {
        let amb = Arc::new(Ambient::flat_torus(std::f64::consts::TAU));
        let m = make_flat_subtorus(10, 0.5, amb).unwrap();
        let g = grad_e_variational(&m);
        assert!(g.max_norm < 1e-8);
    }

    #[test]
    fn zero_field_gives_zero_variations() {
        let m = make_sphere(1, 1.0, [0.0; 3], Arc::new(Ambient::euclidean())).unwrap();
        let z = vec![[0.0; 3]; m.n_vertices()];
        assert_eq!(first_variation_area(&m, &z).unwrap(), (0.0, 0.0));
        assert_eq!(first_variation_a(&m, &z).unwrap().residual, 0.0);
        assert!(matches!(first_variation_area(&m, &z[1..]), Err(GradientError::FieldLength { .. })));
    }
}
