//! Explicit Euler integration of `∂ₜx = −∇E` with a backtracking line
//! search on the discrete energy, a dissipation ledger and run artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::{fundamental_forms, CurvatureField};
use crate::diagnostics::{Constants, DiagnosticRecord, DiagnosticsError};
use crate::gradient::{grad_e_variational, normal_projection, GradientField};
use crate::mesh::{save_ply, Immersion, MeshError, PlyChannel};
use crate::real::{inner, Vec3};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid step policy: {0}")]
    Policy(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowStatus {
    Running,
    Stationary,
    Degenerate,
    Concentrated,
    MaxSteps,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepPolicy {
    pub c_cfl: f64,
    /// Backtracking factor in `(0, 1)`.
    pub beta: f64,
    pub max_backtracks: usize,
    /// Stationary when `‖∇E‖ < stationarity · E / sqrt(area)`.
    pub stationarity: f64,
    pub max_steps: usize,
    /// Tangential smoothing every this many steps (0 = off).
    pub remesh_every: usize,
    /// Fixed trial step replacing the CFL rule.
    pub dt_fixed: Option<f64>,
    pub velocity: Velocity,
}

/// Which part of the discrete gradient drives the vertices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Velocity {
    /// `ḡ(∇E, ν) ν`; the discrete gradient's tangential part only slides
    /// vertices along the surface and is dropped.
    #[default]
    Normal,
    /// The full discrete gradient.
    Full,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            c_cfl: 0.05,
            beta: 0.5,
            max_backtracks: 40,
            stationarity: 1e-4,
            max_steps: 500,
            remesh_every: 0,
            dt_fixed: None,
            velocity: Velocity::Normal,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.c_cfl > 0.0 && self.c_cfl.is_finite()) {
            return Err(FlowError::Policy(format!("c_cfl must be positive, got {}", self.c_cfl)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(FlowError::Policy(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.stationarity >= 0.0) {
            return Err(FlowError::Policy(format!("stationarity must be nonnegative, got {}", self.stationarity)));
        }
        if let Some(dt) = self.dt_fixed {
            if !(dt >= 0.0 && dt.is_finite()) {
                return Err(FlowError::Policy(format!("dt_fixed must be nonnegative, got {dt}")));
            }
        }
        Ok(())
    }

    /// `c_cfl · (min edge)⁴ / (1 + max|A|²)²`.
    pub fn cfl_dt(&self, m: &Immersion, max_a2: f64) -> f64 {
        let h = m.edge_lengths().into_iter().fold(f64::INFINITY, f64::min);
        self.c_cfl * h.powi(4) / (1.0 + max_a2).powi(2)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub willmore: f64,
    pub area: f64,
    pub max_a2: f64,
    /// `‖∇E‖_{L²}` at the start of the step (at the state itself for step 0).
    pub grad_norm: f64,
    /// `dt · ‖∇E‖²_{L²}`.
    pub dissipation: f64,
    pub chi: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub mesh: Immersion,
    pub t: f64,
    pub step: usize,
    pub history: Vec<HistoryRow>,
    pub status: FlowStatus,
    /// Energy removed by tangential smoothing (kept out of the ledger).
    pub smoothing_drop: f64,
    cache: Option<(CurvatureField, GradientField)>,
}

impl FlowState {
    pub fn new(mesh: Immersion, p: &StepPolicy) -> Self {
        let cf = fundamental_forms(&mesh);
        let g = grad_e_variational(&mesh);
        let (_, norm) = velocity(&mesh, &g, p.velocity);
        let row = HistoryRow {
            step: 0,
            t: 0.0,
            dt: 0.0,
            energy: cf.energy(),
            willmore: cf.willmore(),
            area: mesh.area(),
            max_a2: cf.max_a2(),
            grad_norm: norm,
            dissipation: 0.0,
            chi: None,
        };
        FlowState {
            mesh,
            t: 0.0,
            step: 0,
            history: vec![row],
            status: FlowStatus::Running,
            smoothing_drop: 0.0,
            cache: Some((cf, g)),
        }
    }

    pub fn energy(&self) -> f64 {
        self.history.last().map(|r| r.energy).unwrap_or(0.0)
    }

    fn forms(&mut self) -> (CurvatureField, GradientField) {
        match self.cache.take() {
            Some(c) => c,
            None => (fundamental_forms(&self.mesh), grad_e_variational(&self.mesh)),
        }
    }
}

/// Vertex velocity field and its `L²` norm.
pub fn velocity(m: &Immersion, g: &GradientField, kind: Velocity) -> (Vec<Vec3<f64>>, f64) {
    match kind {
        Velocity::Full => (g.vectors.clone(), g.l2_norm),
        Velocity::Normal => {
            let (vn, phi) = normal_projection(m, &m.vertex_normals(), &g.vectors);
            let n2: f64 = phi.iter().zip(&g.dual_area).map(|(c, a)| c * c * a).sum();
            (vn, n2.sqrt())
        }
    }
}

/// `‖∇E‖` threshold of the stationarity test.
pub fn stationarity_threshold(p: &StepPolicy, energy: f64, area: f64) -> f64 {
    (p.stationarity * energy / area.sqrt()).max(GRAD_FLOOR)
}

/// Absolute floor of the stationarity test, so that `E = 0` surfaces
/// (where the relative test can never pass) still terminate.
pub const GRAD_FLOOR: f64 = 1e-9;

fn moved(m: &Immersion, g: &[Vec3<f64>], dt: f64) -> Result<Immersion, MeshError> {
    let x = m.vertices().iter().zip(g).map(|(p, v)| [p[0] - dt * v[0], p[1] - dt * v[1], p[2] - dt * v[2]]).collect();
    m.with_positions(x)
}

/// One explicit Euler step with backtracking. A failed line search leaves
/// the mesh untouched and marks the state degenerate.
pub fn step(mut s: FlowState, p: &StepPolicy) -> FlowState {
    if s.status != FlowStatus::Running {
        return s;
    }
    let (cf, g) = s.forms();
    let e0 = cf.energy();
    let area = s.mesh.area();
    let (vel, norm) = velocity(&s.mesh, &g, p.velocity);
    if norm < stationarity_threshold(p, e0, area) {
        s.status = FlowStatus::Stationary;
        s.cache = Some((cf, g));
        return s;
    }
    let mut dt = p.dt_fixed.unwrap_or_else(|| p.cfl_dt(&s.mesh, cf.max_a2()));
    if dt == 0.0 {
        s.cache = Some((cf, g));
        return s;
    }
    for _ in 0..=p.max_backtracks {
        if let Ok(trial) = moved(&s.mesh, &vel, dt) {
            let tcf = fundamental_forms(&trial);
            let e1 = tcf.energy();
            if e1 < e0 {
                s.t += dt;
                s.step += 1;
                s.history.push(HistoryRow {
                    step: s.step,
                    t: s.t,
                    dt,
                    energy: e1,
                    willmore: tcf.willmore(),
                    area: trial.area(),
                    max_a2: tcf.max_a2(),
                    grad_norm: norm,
                    dissipation: dt * norm * norm,
                    chi: None,
                });
                s.mesh = trial;
                s.cache = None;
                if p.remesh_every > 0 && s.step.is_multiple_of(p.remesh_every) {
                    smooth_tangentially(&mut s);
                }
                return s;
            }
        }
        dt *= p.beta;
    }
    s.status = FlowStatus::Degenerate;
    s
}

/// Moves every vertex halfway to its 1-ring centroid within its tangent
/// plane; kept only if the energy does not increase.
fn smooth_tangentially(s: &mut FlowState) {
    let m = &s.mesh;
    let amb = m.ambient();
    let x = m.vertices();
    let normals = m.vertex_normals();
    let xs: Vec<Vec3<f64>> = (0..x.len())
        .map(|v| {
            let ring = m.topology().neighbors(v);
            let mut d = [0.0; 3];
            for &w in ring {
                let e = amb.delta(&x[v], &x[w]);
                for k in 0..3 {
                    d[k] += e[k] / ring.len() as f64;
                }
            }
            let g = amb.metric_unchecked(&x[v]);
            let c = inner(&g, &d, &normals[v]);
            [
                x[v][0] + 0.5 * (d[0] - c * normals[v][0]),
                x[v][1] + 0.5 * (d[1] - c * normals[v][1]),
                x[v][2] + 0.5 * (d[2] - c * normals[v][2]),
            ]
        })
        .collect();
    if let Ok(trial) = m.with_positions(xs) {
        let e1 = fundamental_forms(&trial).energy();
        let e0 = s.energy();
        if e1 <= e0 {
            s.smoothing_drop += e0 - e1;
            s.mesh = trial;
            if let Some(r) = s.history.last_mut() {
                r.energy = e1;
            }
        }
    }
}

/// Cadences and outputs of [`run`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Diagnostics every this many accepted steps (0 = only at start and end).
    pub diag_every: usize,
    /// Snapshot every this many accepted steps (0 = only the final one).
    pub snapshot_every: usize,
    pub radii: Vec<f64>,
    pub constants: Constants,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: FlowState,
    pub records: Vec<DiagnosticRecord>,
    /// Snapshot files written, in order.
    pub snapshots: Vec<PathBuf>,
}

fn io(path: &Path, source: std::io::Error) -> FlowError {
    FlowError::Io { path: path.display().to_string(), source }
}

pub fn csv_header(k: usize) -> String {
    let mut h = String::from("step,t,dt,E,W,area,maxA2,gradnorm,dissipation");
    for i in 1..=k {
        h.push_str(&format!(",chi_rho{i}"));
    }
    h
}

pub fn csv_row(r: &HistoryRow, k: usize) -> String {
    let mut s = format!(
        "{},{},{},{},{},{},{},{},{}",
        r.step, r.t, r.dt, r.energy, r.willmore, r.area, r.max_a2, r.grad_norm, r.dissipation
    );
    for i in 0..k {
        s.push(',');
        if let Some(v) = r.chi.as_ref().and_then(|c| c.get(i)) {
            s.push_str(&v.to_string());
        }
    }
    s
}

fn write_snapshot(m: &Immersion, dir: &Path, step: usize) -> Result<PathBuf, FlowError> {
    let cf = fundamental_forms(m);
    let path = dir.join(format!("snap_{step}.ply"));
    let h2 = cf.abs_h2();
    save_ply(
        m,
        &path,
        &[
            PlyChannel::Scalar("abs_A2", &cf.abs_a2),
            PlyChannel::Scalar("abs_H2", &h2),
            PlyChannel::Scalar("gauss_k", &cf.gauss),
        ],
    )?;
    Ok(path)
}

/// Steps until a terminal status, running diagnostics and writing the CSV
/// history and snapshots when an output directory is given.
pub fn run(f0: Immersion, p: &StepPolicy, opts: &RunOptions) -> Result<RunOutcome, FlowError> {
    p.validate()?;
    let mut state = FlowState::new(f0, p);
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let diagnose = |state: &mut FlowState, records: &mut Vec<DiagnosticRecord>| -> Result<(), FlowError> {
        let rec = DiagnosticRecord::capture(&state.mesh, state.step, state.t, &opts.radii)?;
        if rec.profile.values.first().is_some_and(|v| *v >= opts.constants.eps0_sq) {
            state.status = FlowStatus::Concentrated;
        }
        if let Some(row) = state.history.last_mut() {
            row.chi = Some(rec.profile.values.clone());
        }
        records.push(rec);
        Ok(())
    };
    diagnose(&mut state, &mut records)?;
    if let Some(dir) = &opts.out_dir {
        if opts.snapshot_every > 0 {
            snapshots.push(write_snapshot(&state.mesh, dir, 0)?);
        }
    }
    while state.status == FlowStatus::Running {
        if state.step >= p.max_steps {
            state.status = FlowStatus::MaxSteps;
            break;
        }
        let before = state.step;
        state = step(state, p);
        if state.step == before {
            if state.status == FlowStatus::Running {
                // dt = 0: nothing can change
                state.status = FlowStatus::MaxSteps;
            }
            break;
        }
        if opts.diag_every > 0 && state.step.is_multiple_of(opts.diag_every) {
            diagnose(&mut state, &mut records)?;
        }
        if let Some(dir) = &opts.out_dir {
            if opts.snapshot_every > 0 && state.step.is_multiple_of(opts.snapshot_every) {
                snapshots.push(write_snapshot(&state.mesh, dir, state.step)?);
            }
        }
    }
    if records.last().is_none_or(|r| r.step != state.step) {
        diagnose(&mut state, &mut records)?;
    }
    if let Some(dir) = &opts.out_dir {
        let last = snapshots.last().map(|p| p.ends_with(format!("snap_{}.ply", state.step))).unwrap_or(false);
        if !last {
            snapshots.push(write_snapshot(&state.mesh, dir, state.step)?);
        }
        let path = dir.join("history.csv");
        let f = File::create(&path).map_err(|e| io(&path, e))?;
        let mut w = BufWriter::new(f);
        let k = opts.radii.len();
        writeln!(w, "{}", csv_header(k)).map_err(|e| io(&path, e))?;
        for r in &state.history {
            writeln!(w, "{}", csv_row(r, k)).map_err(|e| io(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))?;
    }
    Ok(RunOutcome { state, records, snapshots })
}

/// `max_{t>0} (area(t) − area(0)) / (√t · E(f₀)^{1/2})`; 0 when no step
/// was taken.
pub fn check_area_growth(s: &FlowState) -> f64 {
    let Some(first) = s.history.first() else { return 0.0 };
    let scale = first.energy.sqrt();
    s.history
        .iter()
        .filter(|r| r.t > 0.0)
        .map(|r| (r.area - first.area) / (r.t.sqrt() * scale))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or(0.0)
}

/// `(E(t₁) − E(t₂), Σ dt ‖∇E‖²)` over history rows `i..=j`.
pub fn dissipation_ledger(s: &FlowState, i: usize, j: usize) -> (f64, f64) {
    let h = &s.history;
    let drop = h[i].energy - h[j].energy;
    let sum = h[i + 1..=j].iter().map(|r| r.dissipation).sum();
    (drop, sum)
}
