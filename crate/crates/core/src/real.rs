//! Scalar abstraction used by the discrete energy so that one code path
//! yields both values (`f64`) and exact first derivatives ([`Dual`]).

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Scalar field the geometry kernels are written against.
pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn cst(x: f64) -> Self;
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn scale(self, s: f64) -> Self;

    /// Composes a known function `h: R^3 -> R` with the chart point `at`,
    /// given `h(at.val)` and its gradient there.
    fn lift(value: f64, grad: &[f64; 3], at: &[Self; 3]) -> Self;

    /// True when [`Real::lift`] consumes the gradient argument.
    fn carries_derivatives() -> bool;

    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
    #[inline]
    fn lift(value: f64, _grad: &[f64; 3], _at: &[Self; 3]) -> Self {
        value
    }
    #[inline]
    fn carries_derivatives() -> bool {
        false
    }
}

/// First-order dual number with three tangent directions (one vertex's
/// chart coordinates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; 3] }
    }

    /// Seeds the three coordinates of a point as independent variables.
    pub fn variables(x: [f64; 3]) -> [Dual; 3] {
        [
            Dual { v: x[0], d: [1.0, 0.0, 0.0] },
            Dual { v: x[1], d: [0.0, 1.0, 0.0] },
            Dual { v: x[2], d: [0.0, 0.0, 1.0] },
        ]
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]] }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]] }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Dual {
            v: q,
            d: [(self.d[0] - q * o.d[0]) * inv, (self.d[1] - q * o.d[1]) * inv, (self.d[2] - q * o.d[2]) * inv],
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: [-self.d[0], -self.d[1], -self.d[2]] }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        *self = *self - o;
    }
}

impl Real for Dual {
    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let k = 0.5 / s;
        Dual { v: s, d: [self.d[0] * k, self.d[1] * k, self.d[2] * k] }
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        Dual { v: self.v * s, d: [self.d[0] * s, self.d[1] * s, self.d[2] * s] }
    }
    #[inline]
    fn lift(value: f64, grad: &[f64; 3], at: &[Self; 3]) -> Self {
        let mut d = [0.0; 3];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = grad[0] * at[0].d[k] + grad[1] * at[1].d[k] + grad[2] * at[2].d[k];
        }
        Dual { v: value, d }
    }
    #[inline]
    fn carries_derivatives() -> bool {
        true
    }
}

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

pub fn add3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `a^T g b`.
pub fn inner<T: Real>(g: &Mat3<T>, a: &Vec3<T>, b: &Vec3<T>) -> T {
    let mut s = T::zero();
    for i in 0..3 {
        let gb = g[i][0] * b[0] + g[i][1] * b[1] + g[i][2] * b[2];
        s += a[i] * gb;
    }
    s
}

pub fn mat_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn det3<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse together with the determinant.
pub fn inv3<T: Real>(m: &Mat3<T>) -> (Mat3<T>, T) {
    let det = det3(m);
    let c = |a: usize, b: usize, c: usize, d: usize| m[a][b] * m[c][d] - m[a][d] * m[c][b];
    let adj = [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ];
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = adj[i][j] / det;
        }
    }
    (out, det)
}

pub fn to_f64(v: &Vec3<impl Real>) -> Vec3<f64> {
    [v[0].val(), v[1].val(), v[2].val()]
}

pub fn lift_const<T: Real>(v: &Vec3<f64>) -> Vec3<T> {
    [T::cst(v[0]), T::cst(v[1]), T::cst(v[2])]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: &[T; 3]) -> T {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        (r2 + T::cst(1.0)).sqrt() / (x[0] - T::cst(3.0)) * x[1]
    }

    #[test]
    fn dual_matches_central_difference() {
        let x = [0.3, -0.7, 1.1];
        let dx = Dual::variables(x);
        let y = f(&dx);
        assert!((y.v - f(&x)).abs() < 1e-15);
        for k in 0..3 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - y.d[k]).abs() < 1e-8, "k={k}: {fd} vs {}", y.d[k]);
        }
    }

    #[test]
    fn lift_applies_chain_rule() {
        let x = Dual::variables([1.0, 2.0, 3.0]);
        let two_x = [x[0].scale(2.0), x[1].scale(2.0), x[2].scale(2.0)];
        let y = Dual::lift(5.0, &[1.0, 10.0, 100.0], &two_x);
        assert_eq!(y.v, 5.0);
        assert_eq!(y.d, [2.0, 20.0, 200.0]);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = [[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]];
        let (mi, _) = inv3(&m);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += m[i][k] * mi[k][j];
                }
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-14);
            }
        }
    }
}
