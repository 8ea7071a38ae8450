//! Ambient Riemannian 3-manifolds described in a single chart.
//!
//! Built-in geometries are the euclidean space, the round sphere in a
//! stereographic chart (north pole at chart infinity), and the flat
//! 3-torus with a cubic period lattice. Arbitrary metrics are supported
//! through [`ChartMetric`], whose derivatives are taken by central
//! differences.
//!
//! Index conventions: `christoffel[k][i][j] = Γ^k_ij`,
//! `riemann[i][j][k][l] = ḡ(R(∂_i, ∂_j)∂_k, ∂_l)` with
//! `R(X, Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`, so that the sectional curvature is
//! `R(X, Y, Y, X) / |X ∧ Y|²`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::real::{inv3, Mat3, Real, Vec3};

pub type Christoffel = [[[f64; 3]; 3]; 3];
pub type Riemann = [[[[f64; 3]; 3]; 3]; 3];
pub type NablaRiemann = [Riemann; 3];

/// Default central-difference step for chart metrics.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum AmbientError {
    #[error("chart point {0:?} is outside the valid domain")]
    OutOfDomain([f64; 3]),
    #[error("curvature bounds need a nonempty sample set")]
    EmptySamples,
    #[error("invalid ambient spec `{0}`")]
    BadSpec(String),
    #[error("chart metric table {path}, line {line}: {msg}")]
    Table { path: String, line: usize, msg: String },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type MetricFn = dyn Fn(&[f64; 3]) -> Mat3<f64> + Send + Sync;

/// A metric supplied as a callback on an axis-aligned chart box.
#[derive(Clone)]
pub struct ChartMetric {
    field: Arc<MetricFn>,
    lo: [f64; 3],
    hi: [f64; 3],
    step: f64,
    /// Resolution of the Dijkstra lattice used by [`Ambient::distance`].
    lattice: usize,
}

impl fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartMetric").field("lo", &self.lo).field("hi", &self.hi).field("step", &self.step).finish()
    }
}

impl ChartMetric {
    pub fn new<F>(lo: [f64; 3], hi: [f64; 3], field: F) -> Self
    where
        F: Fn(&[f64; 3]) -> Mat3<f64> + Send + Sync + 'static,
    {
        ChartMetric { field: Arc::new(field), lo, hi, step: DEFAULT_FD_STEP, lattice: 16 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_lattice(mut self, n: usize) -> Self {
        self.lattice = n.max(2);
        self
    }

    /// Reads a metric table. Format (whitespace separated, `#` comments):
    ///
    /// ```text
    /// dims nx ny nz
    /// bounds xmin xmax ymin ymax zmin zmax
    /// g11 g12 g13 g22 g23 g33      # nx*ny*nz rows, z index fastest
    /// ```
    ///
    /// The field between nodes is a tensor-product Catmull–Rom interpolant.
    pub fn from_table(path: &Path) -> Result<Self, AmbientError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| AmbientError::Io { path: name.clone(), source })?;
        let err = |line: usize, msg: &str| AmbientError::Table { path: name.clone(), line, msg: msg.to_string() };
        let mut dims: Option<[usize; 3]> = None;
        let mut bounds: Option<[f64; 6]> = None;
        let mut rows: Vec<[f64; 6]> = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            last_line = lineno;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let head = toks.next().unwrap_or("");
            match head {
                "dims" => {
                    let v: Result<Vec<usize>, _> = toks.map(str::parse).collect();
                    match v {
                        Ok(v) if v.len() == 3 && v.iter().all(|&n| n >= 2) => dims = Some([v[0], v[1], v[2]]),
                        _ => return Err(err(lineno, "expected `dims nx ny nz` with n >= 2")),
                    }
                }
                "bounds" => {
                    let v: Result<Vec<f64>, _> = toks.map(str::parse).collect();
                    match v {
                        Ok(v) if v.len() == 6 && v[0] < v[1] && v[2] < v[3] && v[4] < v[5] => {
                            bounds = Some([v[0], v[1], v[2], v[3], v[4], v[5]])
                        }
                        _ => return Err(err(lineno, "expected `bounds` with 6 increasing pairs")),
                    }
                }
                _ => {
                    if dims.is_none() || bounds.is_none() {
                        return Err(err(lineno, "metric rows before `dims`/`bounds` header"));
                    }
                    let v: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
                    let v = v.map_err(|_| err(lineno, "non-numeric metric component"))?;
                    if v.len() != 6 {
                        return Err(err(lineno, "expected 6 metric components"));
                    }
                    let g = [[v[0], v[1], v[2]], [v[1], v[3], v[4]], [v[2], v[4], v[5]]];
                    if !is_spd(&g) {
                        return Err(err(lineno, "metric is not positive definite"));
                    }
                    rows.push([v[0], v[1], v[2], v[3], v[4], v[5]]);
                }
            }
        }
        let dims = dims.ok_or_else(|| err(last_line, "missing `dims` header"))?;
        let b = bounds.ok_or_else(|| err(last_line, "missing `bounds` header"))?;
        if rows.len() != dims[0] * dims[1] * dims[2] {
            return Err(err(
                last_line,
                &format!("expected {} rows, found {}", dims[0] * dims[1] * dims[2], rows.len()),
            ));
        }
        let grid = Arc::new(MetricGrid { dims, lo: [b[0], b[2], b[4]], hi: [b[1], b[3], b[5]], rows });
        let (lo, hi) = (grid.lo, grid.hi);
        Ok(ChartMetric::new(lo, hi, move |x| grid.eval(x)))
    }

    fn contains(&self, x: &[f64; 3]) -> bool {
        (0..3).all(|i| x[i].is_finite() && x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    /// Metric derivative `dg[k][i][j] = ∂_k g_ij` by central differences,
    /// clamping the stencil to the box.
    fn metric_derivative(&self, x: &[f64; 3]) -> [Mat3<f64>; 3] {
        central_diff(x, self.step, &self.lo, &self.hi, |p| (self.field)(p))
    }
}

struct MetricGrid {
    dims: [usize; 3],
    lo: [f64; 3],
    hi: [f64; 3],
    rows: Vec<[f64; 6]>,
}

impl MetricGrid {
    fn node(&self, i: isize, j: isize, k: isize) -> &[f64; 6] {
        let c = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        let (i, j, k) = (c(i, self.dims[0]), c(j, self.dims[1]), c(k, self.dims[2]));
        &self.rows[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    fn eval(&self, x: &[f64; 3]) -> Mat3<f64> {
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let s = ((x[a] - self.lo[a]) / (self.hi[a] - self.lo[a]) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let i0 = (s.floor() as isize).min(n as isize - 2);
            let t = s - i0 as f64;
            base[a] = i0;
            w[a] = catmull_rom_weights(t);
        }
        let mut c = [0.0; 6];
        for (di, wi) in w[0].iter().enumerate() {
            for (dj, wj) in w[1].iter().enumerate() {
                for (dk, wk) in w[2].iter().enumerate() {
                    let node =
                        self.node(base[0] + di as isize - 1, base[1] + dj as isize - 1, base[2] + dk as isize - 1);
                    let ww = wi * wj * wk;
                    for q in 0..6 {
                        c[q] += ww * node[q];
                    }
                }
            }
        }
        [[c[0], c[1], c[2]], [c[1], c[3], c[4]], [c[2], c[4], c[5]]]
    }
}

fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)]
}

fn is_spd(g: &Mat3<f64>) -> bool {
    let sym = (0..3).all(|i| (0..3).all(|j| (g[i][j] - g[j][i]).abs() <= 1e-12 * (1.0 + g[i][j].abs())));
    let m1 = g[0][0];
    let m2 = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let m3 = crate::real::det3(g);
    sym && m1 > 0.0 && m2 > 0.0 && m3 > 0.0
}

/// Central differences of a tensor-valued function; the stencil is shifted
/// inward near the box boundary (one-sided there).
fn central_diff<const N: usize, F>(x: &[f64; 3], h: f64, lo: &[f64; 3], hi: &[f64; 3], f: F) -> [[[f64; N]; N]; 3]
where
    F: Fn(&[f64; 3]) -> [[f64; N]; N],
{
    let mut out = [[[0.0; N]; N]; 3];
    for k in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[k] = (x[k] + h).min(hi[k]);
        xm[k] = (x[k] - h).max(lo[k]);
        let span = xp[k] - xm[k];
        let (fp, fm) = (f(&xp), f(&xm));
        for i in 0..N {
            for j in 0..N {
                out[k][i][j] = (fp[i][j] - fm[i][j]) / span;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub enum AmbientKind {
    Euclidean,
    /// Round sphere of the given radius, stereographic chart from the
    /// north pole.
    Sphere {
        radius: f64,
    },
    /// Flat torus `R^3 / (period Z)^3`.
    FlatTorus {
        period: f64,
    },
    Chart(ChartMetric),
}

/// Ambient manifold: a chart geometry times a constant metric scale
/// (`ḡ = scale² · ḡ_base`), the latter used by parabolic rescaling.
#[derive(Clone, Debug)]
pub struct Ambient {
    kind: AmbientKind,
    scale: f64,
}

/// Sup/inf curvature quantities over a sample set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureBounds {
    pub sup_riemann: f64,
    pub sup_nabla_riemann: f64,
    pub inf_sectional: f64,
}

impl Ambient {
    pub fn euclidean() -> Self {
        Ambient { kind: AmbientKind::Euclidean, scale: 1.0 }
    }

    pub fn sphere(radius: f64) -> Self {
        assert!(radius > 0.0, "sphere radius must be positive");
        Ambient { kind: AmbientKind::Sphere { radius }, scale: 1.0 }
    }

    pub fn flat_torus(period: f64) -> Self {
        assert!(period > 0.0, "torus period must be positive");
        Ambient { kind: AmbientKind::FlatTorus { period }, scale: 1.0 }
    }

    pub fn chart(metric: ChartMetric) -> Self {
        Ambient { kind: AmbientKind::Chart(metric), scale: 1.0 }
    }

    /// Parses `euclidean`, `sphere:r=<f>`, `torus:L=<f>` or `chart:<path>`.
    pub fn from_spec(spec: &str) -> Result<Self, AmbientError> {
        let bad = || AmbientError::BadSpec(spec.to_string());
        let spec_t = spec.trim();
        if spec_t == "euclidean" {
            return Ok(Ambient::euclidean());
        }
        if let Some(rest) = spec_t.strip_prefix("sphere:r=") {
            let r: f64 = rest.parse().map_err(|_| bad())?;
            return if r > 0.0 { Ok(Ambient::sphere(r)) } else { Err(bad()) };
        }
        if let Some(rest) = spec_t.strip_prefix("torus:L=") {
            let l: f64 = rest.parse().map_err(|_| bad())?;
            return if l > 0.0 { Ok(Ambient::flat_torus(l)) } else { Err(bad()) };
        }
        if let Some(rest) = spec_t.strip_prefix("chart:") {
            return Ok(Ambient::chart(ChartMetric::from_table(Path::new(rest))?));
        }
        Err(bad())
    }

    /// Same chart, metric multiplied by `factor²`.
    pub fn scaled(&self, factor: f64) -> Self {
        Ambient { kind: self.kind.clone(), scale: self.scale * factor }
    }

    pub fn kind(&self) -> &AmbientKind {
        &self.kind
    }

    pub fn metric_scale(&self) -> f64 {
        self.scale
    }

    pub fn dimension(&self) -> usize {
        3
    }

    /// Euclidean chart with unit scale: chart coordinates are isometric.
    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, AmbientKind::Euclidean)
    }

    /// Metric is constant in the chart (euclidean or flat torus).
    pub fn is_flat_constant(&self) -> bool {
        matches!(self.kind, AmbientKind::Euclidean | AmbientKind::FlatTorus { .. })
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        match &self.kind {
            AmbientKind::Chart(c) => c.contains(x),
            _ => x.iter().all(|v| v.is_finite()),
        }
    }

    fn check(&self, x: &[f64; 3]) -> Result<(), AmbientError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(AmbientError::OutOfDomain(*x))
        }
    }

    /// Chart displacement from `a` to `b` (minimal image on the torus).
    #[inline]
    pub fn delta<T: Real>(&self, a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        let mut d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        if let AmbientKind::FlatTorus { period } = self.kind {
            for c in d.iter_mut() {
                let shift = (c.val() / period).round() * period;
                if shift != 0.0 {
                    *c -= T::cst(shift);
                }
            }
        }
        d
    }

    /// Metric value and chart derivatives `dg[k][i][j] = ∂_k g_ij`.
    pub fn metric_and_derivative(&self, x: &[f64; 3]) -> (Mat3<f64>, [Mat3<f64>; 3]) {
        let s2 = self.scale * self.scale;
        match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => (diag(s2), [[[0.0; 3]; 3]; 3]),
            AmbientKind::Sphere { radius } => {
                let r2 = radius * radius;
                let den = r2 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let phi = 2.0 * r2 / den;
                let g = phi * phi * s2;
                let mut dg = [[[0.0; 3]; 3]; 3];
                for (k, dgk) in dg.iter_mut().enumerate() {
                    let sigma = -2.0 * x[k] / den;
                    for (i, row) in dgk.iter_mut().enumerate() {
                        row[i] = 2.0 * g * sigma;
                    }
                }
                (diag(g), dg)
            }
            AmbientKind::Chart(c) => {
                let mut g = (c.field)(x);
                let mut dg = c.metric_derivative(x);
                for row in g.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= s2;
                    }
                }
                for m in dg.iter_mut() {
                    for row in m.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= s2;
                        }
                    }
                }
                (g, dg)
            }
        }
    }

    pub fn metric_at(&self, x: &[f64; 3]) -> Result<Mat3<f64>, AmbientError> {
        self.check(x)?;
        Ok(self.metric_unchecked(x))
    }

    pub(crate) fn metric_unchecked(&self, x: &[f64; 3]) -> Mat3<f64> {
        let s2 = self.scale * self.scale;
        match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => diag(s2),
            AmbientKind::Sphere { radius } => {
                let r2 = radius * radius;
                let phi = 2.0 * r2 / (r2 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
                diag(phi * phi * s2)
            }
            AmbientKind::Chart(c) => {
                let mut g = (c.field)(x);
                for row in g.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= s2;
                    }
                }
                g
            }
        }
    }

    /// Metric composed with a (possibly dual-valued) chart point.
    pub fn metric_lift<T: Real>(&self, x: &Vec3<T>) -> Mat3<T> {
        if self.is_flat_constant() {
            let s2 = T::cst(self.scale * self.scale);
            let z = T::zero();
            return [[s2, z, z], [z, s2, z], [z, z, s2]];
        }
        let xv = [x[0].val(), x[1].val(), x[2].val()];
        if !T::carries_derivatives() {
            let g = self.metric_unchecked(&xv);
            return g.map(|row| row.map(T::cst));
        }
        let (g, dg) = self.metric_and_derivative(&xv);
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = T::lift(g[i][j], &[dg[0][i][j], dg[1][i][j], dg[2][i][j]], x);
            }
        }
        out
    }

    pub fn christoffels_at(&self, x: &[f64; 3]) -> Result<Christoffel, AmbientError> {
        self.check(x)?;
        Ok(self.christoffel_unchecked(x))
    }

    pub(crate) fn christoffel_unchecked(&self, x: &[f64; 3]) -> Christoffel {
        match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => [[[0.0; 3]; 3]; 3],
            AmbientKind::Sphere { radius } => {
                let den = radius * radius + x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let sigma = [-2.0 * x[0] / den, -2.0 * x[1] / den, -2.0 * x[2] / den];
                conformal_christoffel(&sigma)
            }
            AmbientKind::Chart(_) => {
                let (g, dg) = self.metric_and_derivative(x);
                christoffel_from_metric(&g, &dg)
            }
        }
    }

    /// Christoffel symbols and their chart derivatives
    /// `dgamma[m][k][i][j] = ∂_m Γ^k_ij`.
    pub fn christoffel_and_derivative(&self, x: &[f64; 3]) -> (Christoffel, [Christoffel; 3]) {
        match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => ([[[0.0; 3]; 3]; 3], [[[[0.0; 3]; 3]; 3]; 3]),
            AmbientKind::Sphere { radius } => {
                let den = radius * radius + x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let sigma = [-2.0 * x[0] / den, -2.0 * x[1] / den, -2.0 * x[2] / den];
                let gamma = conformal_christoffel(&sigma);
                let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
                for (m, dgm) in dgamma.iter_mut().enumerate() {
                    // ∂_m σ_i
                    let mut ds = [0.0; 3];
                    for (i, d) in ds.iter_mut().enumerate() {
                        let delta = if i == m { 1.0 } else { 0.0 };
                        *d = -2.0 * delta / den + 4.0 * x[i] * x[m] / (den * den);
                    }
                    *dgm = conformal_christoffel(&ds);
                }
                (gamma, dgamma)
            }
            AmbientKind::Chart(c) => {
                let gamma = self.christoffel_unchecked(x);
                let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
                for m in 0..3 {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[m] = (x[m] + c.step).min(c.hi[m]);
                    xm[m] = (x[m] - c.step).max(c.lo[m]);
                    let span = xp[m] - xm[m];
                    let (gp, gm) = (self.christoffel_unchecked(&xp), self.christoffel_unchecked(&xm));
                    for k in 0..3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                dgamma[m][k][i][j] = (gp[k][i][j] - gm[k][i][j]) / span;
                            }
                        }
                    }
                }
                (gamma, dgamma)
            }
        }
    }

    /// Christoffel symbols composed with a (possibly dual-valued) point.
    pub fn christoffel_lift<T: Real>(&self, x: &Vec3<T>) -> [[[T; 3]; 3]; 3] {
        let xv = [x[0].val(), x[1].val(), x[2].val()];
        if !T::carries_derivatives() {
            return self.christoffel_unchecked(&xv).map(|a| a.map(|b| b.map(T::cst)));
        }
        let (gamma, dgamma) = self.christoffel_and_derivative(&xv);
        let mut out = [[[T::zero(); 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let grad = [dgamma[0][k][i][j], dgamma[1][k][i][j], dgamma[2][k][i][j]];
                    out[k][i][j] = T::lift(gamma[k][i][j], &grad, x);
                }
            }
        }
        out
    }

    pub fn riemann_at(&self, x: &[f64; 3]) -> Result<Riemann, AmbientError> {
        self.check(x)?;
        Ok(self.riemann_unchecked(x))
    }

    pub(crate) fn riemann_unchecked(&self, x: &[f64; 3]) -> Riemann {
        match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => [[[[0.0; 3]; 3]; 3]; 3],
            AmbientKind::Sphere { radius } => {
                let g = self.metric_unchecked(x);
                let kappa = 1.0 / (radius * radius * self.scale * self.scale);
                constant_curvature_riemann(&g, kappa)
            }
            AmbientKind::Chart(_) => {
                let g = self.metric_unchecked(x);
                let (gamma, dgamma) = self.christoffel_and_derivative(x);
                riemann_from_christoffel(&g, &gamma, &dgamma)
            }
        }
    }

    /// `out[m][i][j][k][l] = (∇̄_m R̄)_{ijkl}`.
    pub fn nabla_riemann_at(&self, x: &[f64; 3]) -> Result<NablaRiemann, AmbientError> {
        self.check(x)?;
        Ok(match &self.kind {
            // locally symmetric
            AmbientKind::Chart(c) => {
                let gamma = self.christoffel_unchecked(x);
                let rm = self.riemann_unchecked(x);
                let mut out = [[[[[0.0; 3]; 3]; 3]; 3]; 3];
                for m in 0..3 {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[m] = (x[m] + c.step).min(c.hi[m]);
                    xm[m] = (x[m] - c.step).max(c.lo[m]);
                    let span = xp[m] - xm[m];
                    let (rp, rmn) = (self.riemann_unchecked(&xp), self.riemann_unchecked(&xm));
                    for i in 0..3 {
                        for j in 0..3 {
                            for k in 0..3 {
                                for l in 0..3 {
                                    let mut v = (rp[i][j][k][l] - rmn[i][j][k][l]) / span;
                                    for p in 0..3 {
                                        v -= gamma[p][m][i] * rm[p][j][k][l]
                                            + gamma[p][m][j] * rm[i][p][k][l]
                                            + gamma[p][m][k] * rm[i][j][p][l]
                                            + gamma[p][m][l] * rm[i][j][k][p];
                                    }
                                    out[m][i][j][k][l] = v;
                                }
                            }
                        }
                    }
                }
                out
            }
            _ => [[[[[0.0; 3]; 3]; 3]; 3]; 3],
        })
    }

    /// Sectional curvature of the plane spanned by `u`, `v` at `x`.
    pub fn sectional_curvature(&self, x: &[f64; 3], u: &[f64; 3], v: &[f64; 3]) -> Result<f64, AmbientError> {
        let rm = self.riemann_at(x)?;
        let g = self.metric_unchecked(x);
        let mut num = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        num += rm[i][j][k][l] * u[i] * v[j] * v[k] * u[l];
                    }
                }
            }
        }
        let uu = crate::real::inner(&g, u, u);
        let vv = crate::real::inner(&g, v, v);
        let uv = crate::real::inner(&g, u, v);
        Ok(num / (uu * vv - uv * uv))
    }

    /// Geodesic distance. Closed form for the built-ins; for chart metrics a
    /// shortest path on a 26-connected lattice over the chart box
    /// (approximate, never below the true distance by more than the
    /// lattice spacing effects).
    pub fn distance(&self, x: &[f64; 3], y: &[f64; 3]) -> Result<f64, AmbientError> {
        self.check(x)?;
        self.check(y)?;
        Ok(match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => {
                let d = self.delta(x, y);
                self.scale * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            }
            AmbientKind::Sphere { radius } => {
                let p = inverse_stereographic(x, *radius);
                let q = inverse_stereographic(y, *radius);
                let mut cr = [0.0; 4];
                for i in 0..4 {
                    cr[i] = p[i] - q[i];
                }
                let chord = cr.iter().map(|v| v * v).sum::<f64>().sqrt() / radius;
                let ang = 2.0 * (0.5 * chord).clamp(-1.0, 1.0).asin();
                self.scale * radius * ang
            }
            AmbientKind::Chart(c) => self.scale * lattice_distance(c, x, y),
        })
    }

    /// Sup of `|R̄|`, `|∇̄R̄|` and inf of sectional curvature over `samples`.
    /// Built-ins return their exact constants.
    pub fn curvature_bounds(&self, samples: &[[f64; 3]]) -> Result<CurvatureBounds, AmbientError> {
        if samples.is_empty() {
            return Err(AmbientError::EmptySamples);
        }
        for s in samples {
            self.check(s)?;
        }
        match &self.kind {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => {
                Ok(CurvatureBounds { sup_riemann: 0.0, sup_nabla_riemann: 0.0, inf_sectional: 0.0 })
            }
            AmbientKind::Sphere { radius } => {
                let kappa = 1.0 / (radius * radius * self.scale * self.scale);
                // |R|² = 2 n (n-1) κ² with n = 3
                Ok(CurvatureBounds {
                    sup_riemann: (12.0f64).sqrt() * kappa,
                    sup_nabla_riemann: 0.0,
                    inf_sectional: kappa,
                })
            }
            AmbientKind::Chart(_) => {
                let mut b = CurvatureBounds { sup_riemann: 0.0, sup_nabla_riemann: 0.0, inf_sectional: f64::INFINITY };
                for s in samples {
                    let g = self.metric_unchecked(s);
                    let (gi, _) = inv3(&g);
                    let rm = self.riemann_unchecked(s);
                    let nrm = self.nabla_riemann_at(s)?;
                    b.sup_riemann = b.sup_riemann.max(tensor4_norm(&rm, &gi));
                    let mut n2 = 0.0;
                    for m in 0..3 {
                        for mm in 0..3 {
                            n2 += gi[m][mm] * tensor4_dot(&nrm[m], &nrm[mm], &gi);
                        }
                    }
                    b.sup_nabla_riemann = b.sup_nabla_riemann.max(n2.max(0.0).sqrt());
                    b.inf_sectional = b.inf_sectional.min(min_sectional(&g, &rm));
                }
                Ok(b)
            }
        }
    }
}

fn diag(v: f64) -> Mat3<f64> {
    [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]]
}

/// Γ^k_ij for `ḡ = e^{2u} δ` given `σ = ∇u`.
fn conformal_christoffel(sigma: &[f64; 3]) -> Christoffel {
    let mut g = [[[0.0; 3]; 3]; 3];
    for (k, gk) in g.iter_mut().enumerate() {
        for (i, row) in gk.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                *v = d(k, i) * sigma[j] + d(k, j) * sigma[i] - d(i, j) * sigma[k];
            }
        }
    }
    g
}

pub(crate) fn christoffel_from_metric(g: &Mat3<f64>, dg: &[Mat3<f64>; 3]) -> Christoffel {
    let (gi, _) = inv3(g);
    let mut out = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += gi[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                }
                out[k][i][j] = 0.5 * s;
            }
        }
    }
    out
}

/// Lowered Riemann tensor from Γ and ∂Γ.
pub fn riemann_from_christoffel(g: &Mat3<f64>, gamma: &Christoffel, dgamma: &[Christoffel; 3]) -> Riemann {
    // up[l][i][j][k] = R^l_{ijk}
    let mut up = [[[[0.0; 3]; 3]; 3]; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut v = dgamma[i][l][j][k] - dgamma[j][l][i][k];
                    for m in 0..3 {
                        v += gamma[l][i][m] * gamma[m][j][k] - gamma[l][j][m] * gamma[m][i][k];
                    }
                    up[l][i][j][k] = v;
                }
            }
        }
    }
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut v = 0.0;
                    for m in 0..3 {
                        v += up[m][i][j][k] * g[m][l];
                    }
                    out[i][j][k][l] = v;
                }
            }
        }
    }
    out
}

fn constant_curvature_riemann(g: &Mat3<f64>, kappa: f64) -> Riemann {
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[i][j][k][l] = kappa * (g[j][k] * g[i][l] - g[i][k] * g[j][l]);
                }
            }
        }
    }
    out
}

fn tensor4_dot(a: &Riemann, b: &Riemann, gi: &Mat3<f64>) -> f64 {
    // raise all indices of b, contract with a
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    if a[i][j][k][l] == 0.0 {
                        continue;
                    }
                    let mut raised = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            for r in 0..3 {
                                for t in 0..3 {
                                    raised += gi[i][p] * gi[j][q] * gi[k][r] * gi[l][t] * b[p][q][r][t];
                                }
                            }
                        }
                    }
                    s += a[i][j][k][l] * raised;
                }
            }
        }
    }
    s
}

fn tensor4_norm(a: &Riemann, gi: &Mat3<f64>) -> f64 {
    tensor4_dot(a, a, gi).max(0.0).sqrt()
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Minimum sectional curvature: smallest generalized eigenvalue of the
/// curvature operator on bivectors (all bivectors are simple in 3D).
pub(crate) fn min_sectional(g: &Mat3<f64>, rm: &Riemann) -> f64 {
    let mut q = Matrix3::zeros();
    let mut gm = Matrix3::zeros();
    for (a, &(i, j)) in PAIRS.iter().enumerate() {
        for (b, &(k, l)) in PAIRS.iter().enumerate() {
            q[(a, b)] = rm[i][j][l][k];
            gm[(a, b)] = g[i][k] * g[j][l] - g[i][l] * g[j][k];
        }
    }
    let q = 0.5 * (q + q.transpose());
    let Some(chol) = gm.cholesky() else {
        return f64::NAN;
    };
    let linv = chol.l().try_inverse().unwrap_or_else(Matrix3::identity);
    let m = linv * q * linv.transpose();
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    eig.eigenvalues.min()
}

/// Point on the radius-`r` sphere in R^4 for a stereographic chart point.
pub fn inverse_stereographic(y: &[f64; 3], r: f64) -> [f64; 4] {
    let y2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
    let den = r * r + y2;
    [2.0 * r * r * y[0] / den, 2.0 * r * r * y[1] / den, 2.0 * r * r * y[2] / den, r * (y2 - r * r) / den]
}

/// Stereographic chart point of a point on the radius-`r` sphere in R^4.
pub fn stereographic(p: &[f64; 4], r: f64) -> [f64; 3] {
    let s = r / (r - p[3]);
    [s * p[0], s * p[1], s * p[2]]
}

fn lattice_distance(c: &ChartMetric, x: &[f64; 3], y: &[f64; 3]) -> f64 {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = c.lattice;
    let spacing: Vec<f64> = (0..3).map(|a| (c.hi[a] - c.lo[a]) / (n - 1) as f64).collect();
    let node_pos = |idx: [usize; 3]| -> [f64; 3] {
        [
            c.lo[0] + idx[0] as f64 * spacing[0],
            c.lo[1] + idx[1] as f64 * spacing[1],
            c.lo[2] + idx[2] as f64 * spacing[2],
        ]
    };
    let seg = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        crate::real::inner(&(c.field)(&mid), &d, &d).max(0.0).sqrt()
    };
    let flat = |i: [usize; 3]| (i[0] * n + i[1]) * n + i[2];
    let total = n * n * n;
    // virtual source/target nodes connected to the 8 surrounding lattice nodes
    let corners = |p: &[f64; 3]| -> Vec<[usize; 3]> {
        let mut base = [0usize; 3];
        for a in 0..3 {
            base[a] = (((p[a] - c.lo[a]) / spacing[a]).floor() as isize).clamp(0, n as isize - 2) as usize;
        }
        let mut v = Vec::with_capacity(8);
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    v.push([base[0] + di, base[1] + dj, base[2] + dk]);
                }
            }
        }
        v
    };
    let direct = seg(x, y);
    let mut dist = vec![f64::INFINITY; total];
    let mut heap = BinaryHeap::new();
    for cidx in corners(x) {
        let d = seg(x, &node_pos(cidx));
        let f = flat(cidx);
        if d < dist[f] {
            dist[f] = d;
            heap.push((Reverse(ordered(d)), f));
        }
    }
    let targets = corners(y);
    let target_cost: Vec<(usize, f64)> = targets.iter().map(|t| (flat(*t), seg(&node_pos(*t), y))).collect();
    let mut best = direct;
    while let Some((Reverse(dq), f)) = heap.pop() {
        let d = dq.0;
        if d > dist[f] || d >= best {
            continue;
        }
        for &(tf, tc) in &target_cost {
            if tf == f {
                best = best.min(d + tc);
            }
        }
        let idx = [f / (n * n), (f / n) % n, f % n];
        let p = node_pos(idx);
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                for dk in -1isize..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let q = [idx[0] as isize + di, idx[1] as isize + dj, idx[2] as isize + dk];
                    if q.iter().any(|&v| v < 0 || v >= n as isize) {
                        continue;
                    }
                    let qi = [q[0] as usize, q[1] as usize, q[2] as usize];
                    let nd = d + seg(&p, &node_pos(qi));
                    let qf = flat(qi);
                    if nd < dist[qf] {
                        dist[qf] = nd;
                        heap.push((Reverse(ordered(nd)), qf));
                    }
                }
            }
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Ord64(f64);
impl Eq for Ord64 {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for Ord64 {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}
fn ordered(v: f64) -> Ord64 {
    Ord64(v)
}
