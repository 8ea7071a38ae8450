//! Scalar-generic kernels for one face or one vertex star. Everything the
//! discrete energy depends on goes through here so that `f64` and
//! [`Dual`](crate::real::Dual) evaluations share a single code path.

use crate::ambient::Ambient;
use crate::real::{add3, cross, inner, inv3, scale3, Mat3, Real, Vec3};

/// Metric quantities of a triangle, measured with `ḡ` at its barycentre.
#[derive(Clone, Copy, Debug)]
pub struct FaceGeom<T> {
    pub area: T,
    /// Inner product of the two edges leaving each corner.
    pub dot: [T; 3],
    /// Cotangent of the interior angle at each corner.
    pub cot: [T; 3],
    /// Squared length of the edge opposite each corner.
    pub sq_len: [T; 3],
    /// Mixed Voronoi area attributed to each corner.
    pub corner_area: [T; 3],
    /// Area-weighted unit normal (`ḡ`-norm equals `area`), chart components.
    pub normal: Vec3<T>,
    pub metric: Mat3<T>,
}

pub fn face_geom<T: Real>(amb: &Ambient, p: [&Vec3<T>; 3]) -> FaceGeom<T> {
    let e01 = amb.delta(p[0], p[1]);
    let e02 = amb.delta(p[0], p[2]);
    let e12 = amb.delta(p[1], p[2]);
    let bary = add3(p[0], &scale3(&add3(&e01, &e02), T::cst(1.0 / 3.0)));
    let g = amb.metric_lift(&bary);
    let l01 = inner(&g, &e01, &e01);
    let l02 = inner(&g, &e02, &e02);
    let l12 = inner(&g, &e12, &e12);
    let d0 = inner(&g, &e01, &e02);
    // corner 1: edges 1->2 and 1->0; corner 2: edges 2->0 and 2->1
    let d1 = -inner(&g, &e12, &e01);
    let d2 = inner(&g, &e02, &e12);
    let twice = (l01 * l02 - d0 * d0).sqrt();
    let area = twice.scale(0.5);
    let cot = [d0 / twice, d1 / twice, d2 / twice];
    let sq_len = [l12, l02, l01];
    let corner_area = mixed_areas(area, &[d0.val(), d1.val(), d2.val()], &cot, &sq_len);
    let (gi, det) = inv3(&g);
    let c = cross(&e01, &e02);
    let s = det.sqrt().scale(0.5);
    let normal = [
        (gi[0][0] * c[0] + gi[0][1] * c[1] + gi[0][2] * c[2]) * s,
        (gi[1][0] * c[0] + gi[1][1] * c[1] + gi[1][2] * c[2]) * s,
        (gi[2][0] * c[0] + gi[2][1] * c[1] + gi[2][2] * c[2]) * s,
    ];
    FaceGeom { area, dot: [d0, d1, d2], cot, sq_len, corner_area, normal, metric: g }
}

fn mixed_areas<T: Real>(area: T, dots: &[f64; 3], cot: &[T; 3], sq_len: &[T; 3]) -> [T; 3] {
    if let Some(obtuse) = dots.iter().position(|d| *d < 0.0) {
        let mut out = [area.scale(0.25); 3];
        out[obtuse] = area.scale(0.5);
        return out;
    }
    // corner i collects the halves of its two adjacent edges
    let mut out = [T::zero(); 3];
    for (i, o) in out.iter_mut().enumerate() {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        // edge i-j is opposite k, edge i-k is opposite j
        *o = (sq_len[k] * cot[k] + sq_len[j] * cot[j]).scale(0.125);
    }
    out
}

/// Interior angle at every corner (value only).
pub fn corner_angles(fg: &FaceGeom<f64>) -> [f64; 3] {
    let twice = 2.0 * fg.area;
    fg.dot.map(|d| twice.atan2(d))
}

/// Contribution of a face to the normal of its corner `k`: the face normal
/// weighted by the inverse squared lengths of the two edges at that corner.
/// These weights make the vertex normal exact for vertices on a round sphere.
pub fn corner_normal<T: Real>(fg: &FaceGeom<T>, k: usize) -> Vec3<T> {
    let w = T::cst(1.0) / (fg.sq_len[(k + 1) % 3] * fg.sq_len[(k + 2) % 3]);
    [fg.normal[0] * w, fg.normal[1] * w, fg.normal[2] * w]
}

/// Normalizes `n` in the metric `g`.
pub fn normalize_in<T: Real>(g: &Mat3<T>, n: &Vec3<T>) -> Vec3<T> {
    let len = inner(g, n, n).sqrt();
    [n[0] / len, n[1] / len, n[2] / len]
}

/// `ḡ`-cross product: the vector `w` with `ḡ(w, X) = vol_ḡ(a, b, X)`.
pub fn metric_cross<T: Real>(g: &Mat3<T>, a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    let (gi, det) = inv3(g);
    let c = cross(a, b);
    let s = det.sqrt();
    [
        (gi[0][0] * c[0] + gi[0][1] * c[1] + gi[0][2] * c[2]) * s,
        (gi[1][0] * c[0] + gi[1][1] * c[1] + gi[1][2] * c[2]) * s,
        (gi[2][0] * c[0] + gi[2][1] * c[1] + gi[2][2] * c[2]) * s,
    ]
}

/// Shape operator of one vertex star, expressed in a `ḡ`-orthonormal frame
/// of the tangent plane.
#[derive(Clone, Copy, Debug)]
pub struct StarShape<T> {
    /// `S = −∇ν` as a symmetric 2×2 matrix.
    pub s: [[T; 2]; 2],
    pub frame: [Vec3<T>; 2],
}

impl<T: Real> StarShape<T> {
    pub fn norm2(&self) -> T {
        let s = &self.s;
        s[0][0] * s[0][0] + s[1][1] * s[1][1] + (s[0][1] * s[0][1]).scale(2.0)
    }

    pub fn mean(&self) -> T {
        self.s[0][0] + self.s[1][1]
    }

    /// Keeps the trace-free part and sets `tr S = h`.
    pub fn set_trace(&mut self, h: T) {
        let d = (self.s[0][0] - self.s[1][1]).scale(0.5);
        let m = h.scale(0.5);
        self.s[0][0] = m + d;
        self.s[1][1] = m - d;
    }
}

/// Least-squares fit of `∇ν` over the 1-ring: for every neighbour the
/// covariant normal difference `ν_w − ν_v + Γ(mid)(e, ν̄)` is matched against
/// the edge `e`, both projected onto the tangent frame at `v`.
pub fn star_shape<T: Real>(
    amb: &Ambient,
    x: &Vec3<T>,
    nu: &Vec3<T>,
    g: &Mat3<T>,
    nbr_pos: &[Vec3<T>],
    nbr_nu: &[Vec3<T>],
) -> StarShape<T> {
    let flat = amb.is_flat_constant();
    let mut edges = Vec::with_capacity(nbr_pos.len());
    for p in nbr_pos {
        edges.push(amb.delta(x, p));
    }
    // frame: first edge made orthogonal to ν, then the ḡ-cross product
    let e0 = &edges[0];
    let c = inner(g, e0, nu);
    let t1 = normalize_in(g, &[e0[0] - c * nu[0], e0[1] - c * nu[1], e0[2] - c * nu[2]]);
    let t2 = metric_cross(g, nu, &t1);

    let mut aa = [[T::zero(); 2]; 2];
    let mut ba = [[T::zero(); 2]; 2];
    for (e, nw) in edges.iter().zip(nbr_nu) {
        let mut dn = [nw[0] - nu[0], nw[1] - nu[1], nw[2] - nu[2]];
        if !flat {
            let mid = add3(x, &scale3(e, T::cst(0.5)));
            let gam = amb.christoffel_lift(&mid);
            let nbar = scale3(&add3(nu, nw), T::cst(0.5));
            for (k, d) in dn.iter_mut().enumerate() {
                let mut s = T::zero();
                for i in 0..3 {
                    for j in 0..3 {
                        s += gam[k][i][j] * e[i] * nbar[j];
                    }
                }
                *d += s;
            }
        }
        let a = [inner(g, e, &t1), inner(g, e, &t2)];
        let b = [inner(g, &dn, &t1), inner(g, &dn, &t2)];
        for i in 0..2 {
            for j in 0..2 {
                aa[i][j] += a[i] * a[j];
                ba[i][j] += b[i] * a[j];
            }
        }
    }
    let det = aa[0][0] * aa[1][1] - aa[0][1] * aa[1][0];
    let inv = [[aa[1][1] / det, -aa[0][1] / det], [-aa[1][0] / det, aa[0][0] / det]];
    let mut m = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = ba[i][0] * inv[0][j] + ba[i][1] * inv[1][j];
        }
    }
    let off = (m[0][1] + m[1][0]).scale(-0.5);
    StarShape { s: [[-m[0][0], off], [off, -m[1][1]]], frame: [t1, t2] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_triangle_quantities() {
        let amb = Ambient::euclidean();
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let fg = face_geom(&amb, [&p[0], &p[1], &p[2]]);
        assert!((fg.area - 0.5).abs() < 1e-15);
        assert!(fg.cot[0].abs() < 1e-15);
        assert!((fg.cot[1] - 1.0).abs() < 1e-15 && (fg.cot[2] - 1.0).abs() < 1e-15);
        assert!((fg.normal[2] - 0.5).abs() < 1e-15);
        let sum: f64 = fg.corner_area.iter().sum();
        assert!((sum - 0.5).abs() < 1e-15);
        let ang = corner_angles(&fg);
        assert!((ang.iter().sum::<f64>() - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn obtuse_triangle_uses_split_areas() {
        let amb = Ambient::euclidean();
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.2, 0.0]];
        let fg = face_geom(&amb, [&p[0], &p[1], &p[2]]);
        assert!((fg.corner_area[0] - fg.area / 2.0).abs() < 1e-15);
        assert!((fg.corner_area[1] - fg.area / 4.0).abs() < 1e-15);
    }

    #[test]
    fn conformal_metric_scales_area() {
        // constant conformal factor 3 on lengths → area ×9
        let amb = Ambient::euclidean().scaled(3.0);
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let fg = face_geom(&amb, [&p[0], &p[1], &p[2]]);
        assert!((fg.area - 4.5).abs() < 1e-13);
        let n = normalize_in(&fg.metric, &fg.normal);
        assert!((inner(&fg.metric, &n, &n) - 1.0).abs() < 1e-14);
        assert!((inner(&fg.metric, &fg.normal, &fg.normal).sqrt() - 4.5).abs() < 1e-13);
    }
}
