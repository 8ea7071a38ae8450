//! Measurable analytic quantities along a flow: concentration of `|A|²`,
//! the lifespan lower bound, parabolic blowup rescaling, area and density
//! bounds, sphere inversion and the interior-estimate monitor.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{inverse_stereographic, Ambient, AmbientError, AmbientKind};
use crate::curvature::{codazzi_residual, fundamental_forms, CurvatureField};
use crate::mesh::{Immersion, MeshError};
use crate::real::{inner, Mat3, Vec3};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("{0}")]
    NotApplicable(String),
    #[error("radii must be positive and strictly increasing")]
    BadRadii,
    #[error("no radius reaches the blowup threshold {threshold} (largest concentration {max})")]
    NoConcentration { threshold: f64, max: f64 },
    #[error("inversion centre is {distance} from the surface, below the singularity tolerance {tolerance}")]
    Singular { distance: f64, tolerance: f64 },
    #[error("empty snapshot history")]
    EmptyHistory,
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// The unspecified universal constants of the lifespan and interior
/// estimates. Defaults are conventions of this crate, not derived values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub eps0_sq: f64,
    pub eps1: f64,
    pub c: f64,
    /// Blowup radius rule: smallest radius with `χ ≥ blowup_fraction · ε²`.
    pub blowup_fraction: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants { eps0_sq: 1.0, eps1: 1.0, c: 1.0, blowup_fraction: 0.5 }
    }
}

/// Default radii grid `0.0125 · 2^k`, `k = 0..=8`.
pub fn default_radii() -> Vec<f64> {
    (0..=8).map(|k| 0.0125 * f64::powi(2.0, k)).collect()
}

fn check_radii(radii: &[f64]) -> Result<(), DiagnosticsError> {
    if radii.is_empty()
        || radii[0] <= 0.0
        || radii.windows(2).any(|w| w[1] <= w[0])
        || radii.iter().any(|r| !r.is_finite())
    {
        return Err(DiagnosticsError::BadRadii);
    }
    Ok(())
}

/// Candidate centres for the supremum over the ambient.
#[derive(Clone, Debug)]
pub enum CenterStrategy {
    /// Vertices, face centroids and, in euclidean space, an `n³` grid over
    /// the bounding box inflated by 25%.
    Default {
        grid: usize,
    },
    Vertices,
    Points(Vec<Vec3<f64>>),
}

impl Default for CenterStrategy {
    fn default() -> Self {
        CenterStrategy::Default { grid: 32 }
    }
}

/// Point masses discretizing a density over the surface: each corner kite
/// (vertex, two edge midpoints, centroid) carries its mass in four equal
/// parts, merged at shared locations. Points are stored grouped by the face
/// that introduced them, so faces double as clusters for pruning.
struct Quadrature {
    points: Vec<Vec3<f64>>,
    mass: Vec<f64>,
    /// `cluster[f]..cluster[f + 1]` are the points owned by face `f`.
    cluster: Vec<usize>,
    /// A point of each cluster, used as its pivot.
    pivot: Vec<usize>,
}

fn quadrature(m: &Immersion, density: &[f64], areas: &[[f64; 3]]) -> Quadrature {
    let amb = m.ambient();
    let x = m.vertices();
    let faces = m.faces();
    let mut points: Vec<Vec3<f64>> = Vec::with_capacity(6 * x.len());
    let mut mass = Vec::with_capacity(6 * x.len());
    let mut cluster = Vec::with_capacity(faces.len() + 1);
    let mut pivot = Vec::with_capacity(faces.len());
    let mut vert_id = vec![usize::MAX; x.len()];
    let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
    for (f, fv) in faces.iter().enumerate() {
        cluster.push(points.len());
        let c = {
            let d1 = amb.delta(&x[fv[0]], &x[fv[1]]);
            let d2 = amb.delta(&x[fv[0]], &x[fv[2]]);
            let p = x[fv[0]];
            [p[0] + (d1[0] + d2[0]) / 3.0, p[1] + (d1[1] + d2[1]) / 3.0, p[2] + (d1[2] + d2[2]) / 3.0]
        };
        let cid = points.len();
        pivot.push(cid);
        points.push(c);
        mass.push(0.0);
        for k in 0..3 {
            let v = fv[k];
            let q = 0.25 * density[v] * areas[f][k];
            if vert_id[v] == usize::MAX {
                vert_id[v] = points.len();
                points.push(x[v]);
                mass.push(0.0);
            }
            mass[vert_id[v]] += q;
            mass[cid] += q;
            for w in [fv[(k + 1) % 3], fv[(k + 2) % 3]] {
                let key = (v.min(w), v.max(w));
                let id = *edge_id.entry(key).or_insert_with(|| {
                    let d = amb.delta(&x[key.0], &x[key.1]);
                    let p = x[key.0];
                    points.push([p[0] + 0.5 * d[0], p[1] + 0.5 * d[1], p[2] + 0.5 * d[2]]);
                    mass.push(0.0);
                    points.len() - 1
                });
                mass[id] += q;
            }
        }
    }
    cluster.push(points.len());
    Quadrature { points, mass, cluster, pivot }
}

fn corner_areas(m: &Immersion) -> Vec<[f64; 3]> {
    (0..m.faces().len()).map(|f| m.face_geom(f).corner_area).collect()
}

/// Ambient distances from a centre to a fixed point set.
enum DistanceField {
    Flat { amb: Arc<Ambient>, pts: Vec<Vec3<f64>> },
    Sphere { radius: f64, scale: f64, emb: Vec<[f64; 4]> },
    Chart { amb: Arc<Ambient>, pts: Vec<Vec3<f64>>, metrics: Vec<Mat3<f64>> },
}

impl DistanceField {
    fn new(amb: &Arc<Ambient>, points: &[Vec3<f64>]) -> Self {
        match amb.kind() {
            AmbientKind::Euclidean | AmbientKind::FlatTorus { .. } => {
                DistanceField::Flat { amb: amb.clone(), pts: points.to_vec() }
            }
            AmbientKind::Sphere { radius } => DistanceField::Sphere {
                radius: *radius,
                scale: amb.metric_scale(),
                emb: points.iter().map(|p| inverse_stereographic(p, *radius)).collect(),
            },
            AmbientKind::Chart(_) => DistanceField::Chart {
                amb: amb.clone(),
                pts: points.to_vec(),
                metrics: points.iter().map(|p| amb.metric_unchecked(p)).collect(),
            },
        }
    }

    fn len(&self) -> usize {
        match self {
            DistanceField::Flat { pts, .. } | DistanceField::Chart { pts, .. } => pts.len(),
            DistanceField::Sphere { emb, .. } => emb.len(),
        }
    }

    /// Distances from `c` to the points with indices in `range`.
    fn from(&self, c: &Vec3<f64>, range: Range<usize>, out: &mut Vec<f64>) {
        out.clear();
        match self {
            DistanceField::Flat { amb, pts } => {
                let s = amb.metric_scale();
                out.extend(pts[range].iter().map(|p| {
                    let d = amb.delta(c, p);
                    s * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                }));
            }
            DistanceField::Sphere { radius, scale, emb } => {
                let q = inverse_stereographic(c, *radius);
                out.extend(emb[range].iter().map(|p| {
                    let chord = ((0..4).map(|i| (p[i] - q[i]) * (p[i] - q[i])).sum::<f64>()).sqrt() / radius;
                    scale * radius * 2.0 * (0.5 * chord).min(1.0).asin()
                }));
            }
            DistanceField::Chart { amb, pts, metrics } => {
                // midpoint-rule length of the chart segment
                let gc = amb.metric_unchecked(c);
                out.extend(pts[range.clone()].iter().zip(&metrics[range]).map(|(p, gp)| {
                    let d = amb.delta(c, p);
                    let mut g = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            g[i][j] = 0.5 * (gc[i][j] + gp[i][j]);
                        }
                    }
                    inner(&g, &d, &d).max(0.0).sqrt()
                }));
            }
        }
    }
}

fn candidate_centers(m: &Immersion, strategy: &CenterStrategy) -> Vec<Vec3<f64>> {
    match strategy {
        CenterStrategy::Vertices => m.vertices().to_vec(),
        CenterStrategy::Points(p) => p.clone(),
        CenterStrategy::Default { grid } => {
            let mut c = m.vertices().to_vec();
            if m.ambient().is_euclidean() {
                let x = m.vertices();
                for f in m.faces() {
                    let mut p = [0.0; 3];
                    for &v in f {
                        for k in 0..3 {
                            p[k] += x[v][k] / 3.0;
                        }
                    }
                    c.push(p);
                }
                let (lo, hi) = bounding_box(x);
                let n = (*grid).max(2);
                let pad: Vec<f64> = (0..3).map(|k| 0.25 * (hi[k] - lo[k])).collect();
                let lo: Vec<f64> = (0..3).map(|k| lo[k] - pad[k]).collect();
                let hi: Vec<f64> = (0..3).map(|k| hi[k] + pad[k]).collect();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let t = |a: usize, d: usize| lo[d] + (hi[d] - lo[d]) * a as f64 / (n - 1) as f64;
                            c.push([t(i, 0), t(j, 1), t(k, 2)]);
                        }
                    }
                }
            }
            c
        }
    }
}

fn bounding_box(x: &[Vec3<f64>]) -> (Vec3<f64>, Vec3<f64>) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in x {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// For every centre, the quadrature mass inside each closed ball; then the
/// supremum per radius. Returns `(values, argmax centre per radius)`.
///
/// Clusters whose distance interval `[d − r, d + r]` falls in a single
/// radius bin are binned whole (triangle inequality); the midpoint-rule
/// chart length is not a metric, so charts always go point by point.
fn ball_sup(amb: &Arc<Ambient>, q: &Quadrature, centers: &[Vec3<f64>], radii: &[f64]) -> (Vec<f64>, Vec<Vec3<f64>>) {
    let field = DistanceField::new(amb, &q.points);
    let prune = !matches!(field, DistanceField::Chart { .. });
    let nc = q.pivot.len();
    let pivots: Vec<Vec3<f64>> = q.pivot.iter().map(|&i| q.points[i]).collect();
    let pivot_field = DistanceField::new(amb, &pivots);
    let mut reach = vec![0.0; nc];
    let mut cmass = vec![0.0; nc];
    let mut buf = Vec::new();
    for f in 0..nc {
        field.from(&pivots[f], q.cluster[f]..q.cluster[f + 1], &mut buf);
        reach[f] = buf.iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-12);
        cmass[f] = q.mass[q.cluster[f]..q.cluster[f + 1]].iter().sum();
    }
    let bin = |d: f64| radii.partition_point(|r| *r < d);
    let per_center: Vec<Vec<f64>> = centers
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(dp, dq), c| {
                let mut bins = vec![0.0; radii.len() + 1];
                if prune {
                    pivot_field.from(c, 0..nc, dp);
                    for f in 0..nc {
                        let (lo, hi) = (bin(dp[f] - reach[f]), bin(dp[f] + reach[f]));
                        if lo == hi {
                            bins[lo] += cmass[f];
                        } else {
                            let range = q.cluster[f]..q.cluster[f + 1];
                            field.from(c, range.clone(), dq);
                            for (d, w) in dq.iter().zip(&q.mass[range]) {
                                bins[bin(*d)] += w;
                            }
                        }
                    }
                } else {
                    field.from(c, 0..field.len(), dq);
                    for (d, w) in dq.iter().zip(&q.mass) {
                        bins[bin(*d)] += w;
                    }
                }
                bins.pop();
                let mut acc = 0.0;
                for b in bins.iter_mut() {
                    acc += *b;
                    *b = acc;
                }
                bins
            },
        )
        .collect();
    let mut values = vec![0.0; radii.len()];
    let mut arg = vec![centers.first().copied().unwrap_or([0.0; 3]); radii.len()];
    for (c, bins) in centers.iter().zip(&per_center) {
        for k in 0..radii.len() {
            if bins[k] > values[k] {
                values[k] = bins[k];
                arg[k] = *c;
            }
        }
    }
    (values, arg)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub centers: Vec<Vec3<f64>>,
    pub time: f64,
}

/// `χ(ρ) = sup_x ∫_{f⁻¹(B̄_ρ(x))} |A|² dμ` over the candidate centres.
pub fn concentration(
    m: &Immersion,
    radii: &[f64],
    strategy: &CenterStrategy,
    time: f64,
) -> Result<ConcentrationProfile, DiagnosticsError> {
    let cf = fundamental_forms(m);
    concentration_with(m, &cf, radii, strategy, time)
}

pub fn concentration_with(
    m: &Immersion,
    cf: &CurvatureField,
    radii: &[f64],
    strategy: &CenterStrategy,
    time: f64,
) -> Result<ConcentrationProfile, DiagnosticsError> {
    check_radii(radii)?;
    let q = quadrature(m, &cf.abs_a2, &corner_areas(m));
    let centers = candidate_centers(m, strategy);
    let (values, centers) = ball_sup(m.ambient(), &q, &centers, radii);
    Ok(ConcentrationProfile { radii: radii.to_vec(), values, centers, time })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LifespanInputs {
    pub rho: f64,
    pub chi: f64,
    pub sup_nabla_riemann: f64,
    pub area: f64,
    pub willmore: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LifespanReport {
    pub inputs: LifespanInputs,
    pub eps0_sq: f64,
    pub c: f64,
    /// `+∞` when the denominator vanishes (serialized as `null`).
    pub t_low: f64,
    /// The log argument was below one and the bound was clamped to zero.
    pub clamped: bool,
    pub observed_run_length: Option<f64>,
}

/// `T ≥ C ρ⁴ log(C ε₀² / (χ(ρ,0) + ρ⁴ ‖∇̄R̄‖²_∞ (μ(f₀) + ρ² W(f₀))))`.
pub fn lifespan_bound(inputs: LifespanInputs, k: &Constants) -> LifespanReport {
    let LifespanInputs { rho, chi, sup_nabla_riemann, area, willmore } = inputs;
    let r4 = rho.powi(4);
    let denom = chi + r4 * sup_nabla_riemann * sup_nabla_riemann * (area + rho * rho * willmore);
    let (t_low, clamped) = if denom == 0.0 {
        (f64::INFINITY, false)
    } else {
        let arg = k.c * k.eps0_sq / denom;
        if arg < 1.0 {
            (0.0, true)
        } else {
            (k.c * r4 * arg.ln(), false)
        }
    };
    LifespanReport { inputs, eps0_sq: k.eps0_sq, c: k.c, t_low, clamped, observed_run_length: None }
}

/// Evaluates the bound for an initial mesh at scale `rho`.
pub fn lifespan_for(m: &Immersion, rho: f64, k: &Constants) -> Result<LifespanReport, DiagnosticsError> {
    let cf = fundamental_forms(m);
    let prof = concentration_with(m, &cf, &[rho], &CenterStrategy::default(), 0.0)?;
    let bounds = m.ambient().curvature_bounds(m.vertices())?;
    Ok(lifespan_bound(
        LifespanInputs {
            rho,
            chi: prof.values[0],
            sup_nabla_riemann: bounds.sup_nabla_riemann,
            area: m.area(),
            willmore: cf.willmore(),
        },
        k,
    ))
}

#[derive(Clone, Debug)]
pub struct RescaleResult {
    pub t: f64,
    pub r: f64,
    pub x: Vec3<f64>,
    pub mesh: Immersion,
    /// `|A|²` mass of the rescaled mesh inside the unit ball about the
    /// rescaled centre.
    pub unit_ball_energy: f64,
    /// The same mass measured on the original mesh in the ball of radius `r`.
    pub original_ball_energy: f64,
}

/// Rescales the latest snapshot at the smallest grid radius whose
/// concentration reaches `blowup_fraction · ε²`. In euclidean space the
/// centre moves to the origin and coordinates are divided by `r`; otherwise
/// the chart is kept and the metric is scaled by `r⁻²`.
pub fn blowup_rescale(
    snapshots: &[(f64, Immersion)],
    eps_sq: f64,
    radii: &[f64],
    k: &Constants,
) -> Result<RescaleResult, DiagnosticsError> {
    let (t, m) = snapshots.last().ok_or(DiagnosticsError::EmptyHistory)?;
    let prof = concentration(m, radii, &CenterStrategy::default(), *t)?;
    let threshold = k.blowup_fraction * eps_sq;
    let idx = prof
        .values
        .iter()
        .position(|v| *v >= threshold)
        .ok_or(DiagnosticsError::NoConcentration { threshold, max: prof.values.iter().cloned().fold(0.0, f64::max) })?;
    let r = radii[idx];
    let x0 = prof.centers[idx];
    let mesh = if m.ambient().is_euclidean() {
        let verts = m.vertices().iter().map(|p| [(p[0] - x0[0]) / r, (p[1] - x0[1]) / r, (p[2] - x0[2]) / r]).collect();
        m.with_positions(verts)?
    } else {
        m.with_ambient(Arc::new(m.ambient().scaled(1.0 / r)))?
    };
    let centre = if m.ambient().is_euclidean() { [0.0; 3] } else { x0 };
    let unit_ball_energy = concentration(&mesh, &[1.0], &CenterStrategy::Points(vec![centre]), *t)?.values[0];
    Ok(RescaleResult { t: *t, r, x: x0, mesh, unit_ball_energy, original_ball_energy: prof.values[idx] })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AreaBound {
    pub lhs: f64,
    pub rhs: f64,
    pub inf_sectional: f64,
    pub pass: bool,
}

/// `μ(f) ≤ (2E(f) + 2πχ(Σ)) / inf K` in ambients of positive curvature.
pub fn area_bound_check(m: &Immersion) -> Result<AreaBound, DiagnosticsError> {
    let b = m.ambient().curvature_bounds(m.vertices())?;
    if !(b.inf_sectional > 0.0) {
        return Err(DiagnosticsError::NotApplicable(format!(
            "area bound needs positive sectional curvature, inf K = {}",
            b.inf_sectional
        )));
    }
    let lhs = m.area();
    let e = fundamental_forms(m).energy();
    let rhs = (2.0 * e + 2.0 * std::f64::consts::PI * m.euler_characteristic() as f64) / b.inf_sectional;
    Ok(AreaBound { lhs, rhs, inf_sectional: b.inf_sectional, pass: lhs <= rhs })
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    pub max_ratio: f64,
    pub center: Vec3<f64>,
    pub radius: f64,
    /// `(r, max_x μ(Σ_r(x)) / r²)` per radius.
    pub per_radius: Vec<(f64, f64)>,
}

/// Largest `μ(f⁻¹(B̄_r(x))) / r²` over the given centres and radii.
pub fn density_ratio(m: &Immersion, centers: &[Vec3<f64>], radii: &[f64]) -> Result<DensityReport, DiagnosticsError> {
    check_radii(radii)?;
    if centers.is_empty() {
        return Err(DiagnosticsError::NotApplicable("no sample centres".into()));
    }
    let ones = vec![1.0; m.n_vertices()];
    let q = quadrature(m, &ones, &corner_areas(m));
    let (values, arg) = ball_sup(m.ambient(), &q, centers, radii);
    let per_radius: Vec<(f64, f64)> = radii.iter().zip(&values).map(|(r, v)| (*r, v / (r * r))).collect();
    let (i, _) = per_radius
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, (_, v))| if *v > best.1 { (i, *v) } else { best });
    Ok(DensityReport { max_ratio: per_radius[i].1, center: arg[i], radius: radii[i], per_radius })
}

fn point_triangle_distance(p: &Vec3<f64>, a: &Vec3<f64>, b: &Vec3<f64>, c: &Vec3<f64>) -> f64 {
    // closest point by region classification
    let sub = |u: &Vec3<f64>, v: &Vec3<f64>| [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let dot = |u: &Vec3<f64>, v: &Vec3<f64>| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    let at =
        |s: f64, t: f64| [a[0] + s * ab[0] + t * ac[0], a[1] + s * ab[1] + t * ac[1], a[2] + s * ab[2] + t * ac[2]];
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        *a
    } else {
        let bp = sub(p, b);
        let d3 = dot(&ab, &bp);
        let d4 = dot(&ac, &bp);
        if d3 >= 0.0 && d4 <= d3 {
            *b
        } else {
            let vc = d1 * d4 - d3 * d2;
            if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
                at(d1 / (d1 - d3), 0.0)
            } else {
                let cp = sub(p, c);
                let d5 = dot(&ab, &cp);
                let d6 = dot(&ac, &cp);
                if d6 >= 0.0 && d5 <= d6 {
                    *c
                } else {
                    let vb = d5 * d2 - d1 * d6;
                    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
                        at(0.0, d2 / (d2 - d6))
                    } else {
                        let va = d3 * d6 - d5 * d4;
                        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
                            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
                            [b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2])]
                        } else {
                            let denom = 1.0 / (va + vb + vc);
                            at(vb * denom, vc * denom)
                        }
                    }
                }
            }
        }
    };
    let d = sub(p, &closest);
    dot(&d, &d).sqrt()
}

/// Euclidean distance from `p` to the triangulated surface.
pub fn distance_to_surface(m: &Immersion, p: &Vec3<f64>) -> f64 {
    let x = m.vertices();
    m.faces().iter().map(|f| point_triangle_distance(p, &x[f[0]], &x[f[1]], &x[f[2]])).fold(f64::INFINITY, f64::min)
}

fn require_euclidean(m: &Immersion, what: &str) -> Result<(), DiagnosticsError> {
    if !m.ambient().is_euclidean() {
        return Err(DiagnosticsError::NotApplicable(format!("{what} needs a euclidean ambient")));
    }
    Ok(())
}

/// Inversion `x ↦ x₀ + (x − x₀)/|x − x₀|²`, connectivity unchanged.
pub fn sphere_inversion(m: &Immersion, x0: &Vec3<f64>) -> Result<Immersion, DiagnosticsError> {
    require_euclidean(m, "sphere inversion")?;
    let tolerance = 1e-6 * m.mean_edge_length();
    let distance = distance_to_surface(m, x0);
    if distance < tolerance {
        return Err(DiagnosticsError::Singular { distance, tolerance });
    }
    let verts = m
        .vertices()
        .iter()
        .map(|p| {
            let d = [p[0] - x0[0], p[1] - x0[1], p[2] - x0[2]];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            [x0[0] + d[0] / r2, x0[1] + d[1] / r2, x0[2] + d[2] / r2]
        })
        .collect();
    Ok(m.with_positions(verts)?)
}

/// Centre of a large ball missing the surface, searched over the bounding
/// ball about the vertex centroid; `ρ` is the exact distance to the faces.
pub fn find_empty_ball(m: &Immersion) -> Result<(Vec3<f64>, f64), DiagnosticsError> {
    require_euclidean(m, "empty-ball search")?;
    let x = m.vertices();
    let n = x.len() as f64;
    let mut c = [0.0; 3];
    for p in x {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    let big_r = x
        .iter()
        .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let inside = |p: &Vec3<f64>| {
        (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2) <= big_r * big_r * (1.0 + 1e-12)
    };
    const N: usize = 33;
    let h = 2.0 * big_r / (N - 1) as f64;
    let grid: Vec<Vec3<f64>> = (0..N * N * N)
        .map(|i| {
            let (a, b, d) = (i / (N * N), (i / N) % N, i % N);
            [c[0] - big_r + h * a as f64, c[1] - big_r + h * b as f64, c[2] - big_r + h * d as f64]
        })
        .filter(|p| inside(p))
        .collect();
    let dists: Vec<f64> = grid.par_iter().map(|p| distance_to_surface(m, p)).collect();
    let (mut best, mut rho) = (c, f64::NEG_INFINITY);
    for (p, d) in grid.iter().zip(&dists) {
        if *d > rho {
            best = *p;
            rho = *d;
        }
    }
    // pattern search refinement
    let mut step = 0.5 * h;
    while step > 1e-6 * big_r {
        let mut moved = false;
        for k in 0..6 {
            let mut p = best;
            p[k / 2] += if k % 2 == 0 { step } else { -step };
            if inside(&p) {
                let d = distance_to_surface(m, &p);
                if d > rho {
                    best = p;
                    rho = d;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok((best, rho))
}

/// Diagnostics recorded during a run.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticRecord {
    pub step: usize,
    pub t: f64,
    pub profile: ConcentrationProfile,
    pub gauss_bonnet: f64,
    pub area_bound: Option<AreaBound>,
    pub max_nabla_a: f64,
}

impl DiagnosticRecord {
    pub fn capture(m: &Immersion, step: usize, t: f64, radii: &[f64]) -> Result<Self, DiagnosticsError> {
        let cf = fundamental_forms(m);
        let profile = concentration_with(m, &cf, radii, &CenterStrategy::default(), t)?;
        let total: f64 = cf.angle_defect.iter().sum();
        let gauss_bonnet = (total - 2.0 * std::f64::consts::PI * m.euler_characteristic() as f64).abs();
        let area_bound = area_bound_check(m).ok();
        let max_nabla_a = codazzi_residual(m).nabla_a.iter().cloned().fold(0.0, f64::max);
        Ok(DiagnosticRecord { step, t, profile, gauss_bonnet, area_bound, max_nabla_a })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InteriorRow {
    pub s: f64,
    pub max_nabla_a: f64,
    pub scaled: f64,
    /// Whether the small-concentration hypothesis `χ(ρ₁) < ε₁` held.
    pub gated: bool,
}

/// Table of `(s, max|∇A|, s^{1/2} max|∇A|)` over the recorded diagnostics.
pub fn interior_estimate_monitor(records: &[DiagnosticRecord], k: &Constants) -> Vec<InteriorRow> {
    records
        .iter()
        .map(|r| InteriorRow {
            s: r.t,
            max_nabla_a: r.max_nabla_a,
            scaled: r.t.sqrt() * r.max_nabla_a,
            gated: r.profile.values.first().is_some_and(|v| *v < k.eps1),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_flat_subtorus, make_sphere};
    use std::f64::consts::PI;

    fn eu() -> Arc<Ambient> {
        Arc::new(Ambient::euclidean())
    }

    #[test]
    fn point_triangle_regions() {
        let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert!((point_triangle_distance(&[0.2, 0.2, 3.0], &a, &b, &c) - 3.0).abs() < 1e-15);
        assert!((point_triangle_distance(&[-1.0, -1.0, 0.0], &a, &b, &c) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance(&[1.0, 1.0, 0.0], &a, &b, &c) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance(&[0.5, -2.0, 0.0], &a, &b, &c) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_carries_the_energy() {
        let m = make_sphere(2, 1.0, [0.0; 3], eu()).unwrap();
        let cf = fundamental_forms(&m);
        let q = quadrature(&m, &cf.abs_a2, &corner_areas(&m));
        let total: f64 = q.mass.iter().sum();
        assert!((total - cf.energy()).abs() < 1e-12);
    }

    #[test]
    fn lifespan_closed_forms() {
        let k = Constants::default();
        let base = LifespanInputs { rho: 0.5, chi: 0.0, sup_nabla_riemann: 0.0, area: 4.0 * PI, willmore: 4.0 * PI };
        assert_eq!(lifespan_bound(base, &k).t_low, f64::INFINITY);
        let one = LifespanInputs { chi: k.c * k.eps0_sq, ..base };
        assert_eq!(lifespan_bound(one, &k).t_low, 0.0);
        let below = LifespanInputs { chi: 2.0, ..base };
        let r = lifespan_bound(below, &k);
        assert!(r.clamped && r.t_low == 0.0);
    }

    #[test]
    fn rescale_needs_concentration() {
        let amb = Arc::new(Ambient::flat_torus(std::f64::consts::TAU));
        let m = make_flat_subtorus(6, 0.0, amb).unwrap();
        let err = blowup_rescale(&[(0.0, m)], 1.0, &default_radii(), &Constants::default()).unwrap_err();
        assert!(matches!(err, DiagnosticsError::NoConcentration { .. }));
    }

    #[test]
    fn inversion_rejects_points_on_the_surface() {
        let m = make_sphere(1, 1.0, [0.0; 3], eu()).unwrap();
        let p = m.vertices()[0];
        assert!(matches!(sphere_inversion(&m, &p), Err(DiagnosticsError::Singular { .. })));
    }
}
