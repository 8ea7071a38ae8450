//! Scenario runner behind the `sffflow` binary.

pub mod config;
pub mod scenario;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sff_flow::ambient::AmbientError;
use sff_flow::curvature::{fundamental_forms, gauss_bonnet_residual, gauss_equation_residual};
use sff_flow::diagnostics::{
    area_bound_check, concentration, density_ratio, interior_estimate_monitor, lifespan_for, CenterStrategy, Constants,
    DiagnosticsError,
};
use sff_flow::flow::{check_area_growth, dissipation_ledger, run, FlowError, RunOptions};
use sff_flow::gradient::{check_quality, directional_fd, grad_e_variational, GradientError, QualityGate};
use sff_flow::mesh::{Immersion, MeshError};
use sff_flow::pqcalc::{derive_commutator_2, derive_commutator_4, derive_evolution_structure, Derivation, PqError};
use thiserror::Error;

use config::{parse_config, ConfigErrors, ScenarioConfig, OUT_DIR_ENV};
use scenario::{build_ambient, initial_mesh};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("{0}")]
    Spec(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error(transparent)]
    Pq(#[from] PqError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("{} of {} checks failed", failed.len(), total)]
    Check { failed: Vec<String>, total: usize },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Spec(_) => "spec",
            CliError::Mesh(_) => "mesh",
            CliError::Ambient(_) => "ambient",
            CliError::Flow(_) => "flow",
            CliError::Diagnostics(_) => "diagnostics",
            CliError::Gradient(_) => "gradient",
            CliError::Pq(_) => "pqcalc",
            CliError::Io { .. } => "io",
            CliError::Check { .. } => "check",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Config(e) => v["issues"] = json!(e.issues),
            CliError::Check { failed, .. } => v["failed"] = json!(failed),
            _ => {}
        }
        v
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).expect("json values serialize");
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Output directory: explicit argument, then the environment, then the
/// config value.
pub fn output_dir(c: &ScenarioConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => c.out_dir.clone(),
    }
}

/// Summary of a finished run, also written as `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub status: sff_flow::flow::FlowStatus,
    pub steps: usize,
    pub t: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub willmore_final: f64,
    pub area_initial: f64,
    pub area_final: f64,
    pub asphericity: f64,
    pub area_growth: f64,
    pub ledger_drop: f64,
    pub ledger_dissipation: f64,
    pub smoothing_drop: f64,
    pub chi_first_radius_max: f64,
    pub interior_gated_max: Option<f64>,
    pub csv: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

/// `run`: builds the scenario, flows it and writes CSV, snapshots,
/// `config.cfg` and `report.json`.
pub fn cmd_run(cfg_path: &Path, out: Option<&Path>) -> Result<RunReport, CliError> {
    let c = parse_config(cfg_path)?;
    let base = cfg_path.parent().unwrap_or(Path::new("."));
    let m0 = initial_mesh(&c, base)?;
    let dir = output_dir(&c, out);
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let cfg_copy = dir.join("config.cfg");
    std::fs::write(&cfg_copy, c.to_text()).map_err(|e| io_err(&cfg_copy, e))?;
    let opts = RunOptions {
        diag_every: c.diag_every,
        snapshot_every: c.snapshot_every,
        radii: c.radii.clone(),
        constants: c.constants(),
        out_dir: Some(dir.clone()),
    };
    let outcome = run(m0, &c.policy(), &opts)?;
    let s = &outcome.state;
    let first = &s.history[0];
    let last = s.history.last().expect("history has the initial row");
    let (drop, diss) = dissipation_ledger(s, 0, s.history.len() - 1);
    let chi1 = outcome.records.iter().filter_map(|r| r.profile.values.first().copied()).fold(0.0, f64::max);
    let monitor = interior_estimate_monitor(&outcome.records, &c.constants());
    let report = RunReport {
        status: s.status,
        steps: s.step,
        t: s.t,
        energy_initial: first.energy,
        energy_final: last.energy,
        willmore_final: last.willmore,
        area_initial: first.area,
        area_final: last.area,
        asphericity: s.mesh.asphericity(),
        area_growth: check_area_growth(s),
        ledger_drop: drop,
        ledger_dissipation: diss,
        smoothing_drop: s.smoothing_drop,
        chi_first_radius_max: chi1,
        interior_gated_max: monitor.iter().filter(|r| r.gated).map(|r| r.scaled).reduce(f64::max),
        csv: dir.join("history.csv"),
        snapshots: outcome.snapshots.clone(),
    };
    let v = serde_json::to_value(&report).expect("report serializes");
    write_json(&dir.join("report.json"), &v)?;
    Ok(report)
}

/// Where `diagnose` and `check` get their ambient, radii and constants.
#[derive(Clone, Debug, Default)]
pub struct MeshContext {
    pub ambient: Option<String>,
    pub config: Option<PathBuf>,
}

impl MeshContext {
    fn resolve(&self) -> Result<(String, PathBuf, Vec<f64>, Constants), CliError> {
        let mut amb = "euclidean".to_string();
        let mut base = PathBuf::from(".");
        let mut radii = sff_flow::diagnostics::default_radii();
        let mut k = Constants::default();
        if let Some(p) = &self.config {
            let c = parse_config(p)?;
            amb = c.ambient.clone();
            base = p.parent().unwrap_or(Path::new(".")).to_path_buf();
            radii = c.radii.clone();
            k = c.constants();
        }
        if let Some(a) = &self.ambient {
            amb = a.clone();
            base = PathBuf::from(".");
        }
        Ok((amb, base, radii, k))
    }

    pub fn load(&self, mesh: &Path) -> Result<(Immersion, Vec<f64>, Constants), CliError> {
        let (amb, base, radii, k) = self.resolve()?;
        let amb = build_ambient(&amb, &base)?;
        let m = sff_flow::mesh::load_mesh(mesh, amb)?;
        Ok((m, radii, k))
    }
}

/// `diagnose`: energies, concentration profile, lifespan bound at the
/// smallest radius, Gauss–Bonnet, area and density checks.
pub fn cmd_diagnose(mesh: &Path, ctx: &MeshContext) -> Result<Value, CliError> {
    let (m, radii, k) = ctx.load(mesh)?;
    let cf = fundamental_forms(&m);
    let prof = concentration(&m, &radii, &CenterStrategy::default(), 0.0)?;
    let life = lifespan_for(&m, radii[0], &k)?;
    let area = match area_bound_check(&m) {
        Ok(a) => json!(a),
        Err(DiagnosticsError::NotApplicable(msg)) => json!({ "not_applicable": msg }),
        Err(e) => return Err(e.into()),
    };
    let density = density_ratio(&m, m.vertices(), &radii)?;
    Ok(json!({
        "mesh": mesh.display().to_string(),
        "vertices": m.n_vertices(),
        "euler_characteristic": m.euler_characteristic(),
        "energy": cf.energy(),
        "willmore": cf.willmore(),
        "area": m.area(),
        "max_a2": cf.max_a2(),
        "gauss_bonnet_residual": gauss_bonnet_residual(&m),
        "concentration": prof,
        "lifespan": life,
        "area_bound": area,
        "density": density,
        "asphericity": m.asphericity(),
    }))
}

/// `derive`: one of `evolution`, `commutator2`, `commutator4`.
pub fn cmd_derive(which: &str, flat: bool) -> Result<Derivation, CliError> {
    Ok(match which {
        "evolution" => derive_evolution_structure(flat)?,
        "commutator2" => derive_commutator_2(flat)?,
        "commutator4" => derive_commutator_4(flat)?,
        _ => return Err(CliError::Spec(format!("unknown derivation {which:?}"))),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

/// `check`: the built-in invariant suite on one mesh.
pub fn cmd_check(mesh: &Path, ctx: &MeshContext) -> Result<Vec<CheckResult>, CliError> {
    let (m, radii, _) = ctx.load(mesh)?;
    let mut out = Vec::new();
    let mut push =
        |name, value: f64, tolerance: f64, pass: bool| out.push(CheckResult { name, pass, value, tolerance });

    let gb = gauss_bonnet_residual(&m);
    push("gauss_bonnet_identity", gb, 1e-9, gb < 1e-9);

    let cf = fundamental_forms(&m);
    let e = cf.energy();
    push("energy_finite", e, 0.0, e.is_finite() && e >= 0.0 && cf.willmore().is_finite());
    if m.ambient().is_euclidean() {
        let r = gauss_equation_residual(&m).abs();
        push("gauss_equation_relative", r, 0.03, r < 0.03);
    }

    let gate = QualityGate::default();
    push("mesh_quality", m.min_angle().0, gate.min_angle_deg, check_quality(&m, &gate).is_ok());

    // concentration: monotone, and the whole energy once the ball holds everything
    let mut rr = radii.clone();
    rr.push(1e6 * (1.0 + bbox_diagonal(&m)));
    let prof = concentration(&m, &rr, &CenterStrategy::Vertices, 0.0)?;
    let mono = prof.values.windows(2).all(|w| w[0] <= w[1]);
    push("concentration_monotone", 0.0, 0.0, mono);
    let full = (prof.values.last().copied().unwrap_or(0.0) - e).abs();
    push("concentration_total", full, 1e-9 * e.max(1.0), full <= 1e-9 * e.max(1.0));

    // duality of the variational gradient with the energy on normal fields
    let g = grad_e_variational(&m);
    let normals = m.vertex_normals();
    let mut worst: f64 = 0.0;
    for trial in 0..3 {
        let v: Vec<[f64; 3]> = normals
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let phi = (1.7 * i as f64 + 0.9 * trial as f64).sin();
                [phi * n[0], phi * n[1], phi * n[2]]
            })
            .collect();
        let fd = directional_fd(&m, &v, |p| fundamental_forms(p).energy())?;
        let an = g.pair(&m, &v);
        // near-critical meshes make the pairing tiny, so scale by ‖∇E‖·‖V‖
        let vnorm =
            v.iter().zip(&g.dual_area).map(|(x, a)| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) * a).sum::<f64>().sqrt();
        let scale = fd.abs().max(an.abs()).max(g.l2_norm * vnorm).max(1e-12);
        worst = worst.max((fd - an).abs() / scale);
    }
    push("gradient_duality", worst, 1e-5, worst < 1e-5);

    if let Ok(a) = area_bound_check(&m) {
        push("area_bound", a.lhs - a.rhs, 0.0, a.pass);
    }

    let failed: Vec<String> = out.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Check { failed, total: out.len() })
    }
}

fn bbox_diagonal(m: &Immersion) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for x in m.vertices() {
        for k in 0..3 {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
}
