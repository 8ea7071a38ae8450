//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,8 cargo test -p sffflow-acceptance` restricts the run.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sff_flow::ambient::Ambient;
use sff_flow::curvature::{energy_e, energy_w, gauss_bonnet_residual, gauss_equation_residual};
use sff_flow::diagnostics::{
    area_bound_check, concentration, default_radii, density_ratio, lifespan_bound, CenterStrategy, Constants,
    LifespanInputs,
};
use sff_flow::flow::FlowStatus;
use sff_flow::gradient::{
    directional_fd, first_variation_area, first_variation_energy, grad_e_variational, QualityGate,
};
use sff_flow::mesh::{
    load_ply, make_clifford_torus, make_flat_subtorus, make_genus2, make_sphere, make_torus, perturb, Immersion,
    Perturbation,
};
use sff_flow::pqcalc::{derive_commutator_2, derive_commutator_4, derive_evolution_structure, Derivation};
use sff_flow_cli::config::parse_config;
use sff_flow_cli::scenario::build_ambient;
use sff_flow_cli::{cmd_run, RunReport};
use sffflow_acceptance::{convergence_order, evaluate, selected, Verdict};

const EIGHT_PI: f64 = 8.0 * PI;

fn euclid() -> Arc<Ambient> {
    Arc::new(Ambient::euclidean())
}

fn s3() -> Arc<Ambient> {
    Arc::new(Ambient::sphere(1.0))
}

fn sphere(subdiv: u32) -> Immersion {
    make_sphere(subdiv, 1.0, [0.0; 3], euclid()).unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn workdir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn energies(csv: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == "E").expect("E column");
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

/// Smooth normal field `φν` with `φ = 1 + ½xy + ⅓z`.
fn smooth_normal_field(m: &Immersion) -> Vec<[f64; 3]> {
    m.vertex_normals()
        .iter()
        .zip(m.vertices())
        .map(|(n, x)| {
            let phi = 1.0 + 0.5 * x[0] * x[1] + x[2] / 3.0;
            [phi * n[0], phi * n[1], phi * n[2]]
        })
        .collect()
}

/// Runs a shipped scenario once into `workdir()/<tag>`.
fn run_scenario(file: &str, tag: &str) -> RunReport {
    let out = workdir().join(tag);
    let _ = std::fs::remove_dir_all(&out);
    cmd_run(&scenario(file), Some(&out)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[derive(Default)]
struct Runs {
    perturbed: Option<RunReport>,
}

fn c1_energy_values() -> (bool, String) {
    let start = Instant::now();
    let mut err_e = Vec::new();
    let mut err_w = Vec::new();
    for s in 3..=5 {
        let m = sphere(s);
        err_e.push(rel(energy_e(&m), EIGHT_PI));
        err_w.push(rel(energy_w(&m), 4.0 * PI));
    }
    let order = convergence_order(&err_e);
    let secs = start.elapsed().as_secs_f64();
    let pass = err_e[1] < 0.02 && err_w[1] < 0.02 && order >= 1.5 && secs < 10.0;
    let (e4, w4, all) = (err_e[1], err_w[1], sci(&err_e));
    (pass, format!("subdiv 4: E err {e4:.2e}, W err {w4:.2e}; E errors {all}, order {order:.2}; {secs:.1}s"))
}

fn c2_gauss_bonnet() -> (bool, String) {
    let meshes = [
        sphere(1),
        sphere(3),
        perturb(&sphere(2), Perturbation::Random, 0.1, 5).unwrap(),
        make_torus(32, 16, 2.0, 0.5, euclid()).unwrap(),
        perturb(&make_torus(32, 16, 2.0, 0.5, euclid()).unwrap(), Perturbation::Harmonic { l: 3 }, 0.05, 1).unwrap(),
        make_genus2(1.0, euclid()).unwrap(),
    ];
    let gb = meshes.iter().map(gauss_bonnet_residual).fold(0.0, f64::max);
    let ge: Vec<f64> = (3..=5).map(|s| gauss_equation_residual(&sphere(s)).abs()).collect();
    let pass = gb < 1e-9 && ge[1] < 0.03 && ge.windows(2).all(|w| w[1] < w[0]);
    let ge = sci(&ge);
    (pass, format!("max |Σk_g − 2πχ| {gb:.1e} over {} meshes; |E − 4W + 4πχ|/E by subdiv 3..5 {ge}", meshes.len()))
}

fn c3_duality() -> (bool, String) {
    let meshes = [
        perturb(&sphere(2), Perturbation::Random, 0.05, 1).unwrap(),
        perturb(&make_torus(24, 12, 2.0, 0.6, euclid()).unwrap(), Perturbation::Random, 0.02, 2).unwrap(),
        perturb(&make_genus2(1.0, euclid()).unwrap(), Perturbation::Random, 0.02, 3).unwrap(),
        perturb(&make_sphere(2, 0.5, [0.0; 3], s3()).unwrap(), Perturbation::Random, 0.01, 4).unwrap(),
        perturb(&make_clifford_torus(16, 16, s3()).unwrap(), Perturbation::Random, 0.01, 5).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for m in &meshes {
        let g = grad_e_variational(m);
        let normals = m.vertex_normals();
        for _ in 0..10 {
            let v: Vec<[f64; 3]> = normals
                .iter()
                .map(|n| {
                    let phi: f64 = rng.gen_range(-1.0..1.0);
                    [phi * n[0], phi * n[1], phi * n[2]]
                })
                .collect();
            let fd = directional_fd(m, &v, energy_e).unwrap();
            let an = g.pair(m, &v);
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()));
            count += 1;
        }
    }
    (
        worst < 1e-5,
        format!("{count} random normal fields on {} meshes, worst relative mismatch {worst:.2e}", meshes.len()),
    )
}

fn c4_first_variation() -> (bool, String) {
    let gate = QualityGate::default();
    let mut mass = Vec::new();
    let mut en = Vec::new();
    for s in 3..=5 {
        let m = perturb(&sphere(s), Perturbation::Harmonic { l: 3 }, 0.05, 0).unwrap();
        let v = smooth_normal_field(&m);
        let (l, r) = first_variation_area(&m, &v).unwrap();
        mass.push(rel(r, l));
        let (l, r) = first_variation_energy(&m, &v, &gate).unwrap();
        en.push(rel(r, l));
    }
    let m = sphere(4);
    let (l, r) = first_variation_area(&m, &m.vertex_normals()).unwrap();
    let sphere_ok = rel(l, EIGHT_PI) < 0.05 && rel(r, EIGHT_PI) < 0.05;
    // errors already at the finite-difference noise floor cannot decrease further
    let decreasing = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]) || e.iter().all(|x| *x < 1e-6);
    let pass = mass[1] < 0.05 && en[1] < 0.05 && decreasing(&mass) && decreasing(&en) && sphere_ok;
    let (mass, en) = (sci(&mass), sci(&en));
    (
        pass,
        format!(
            "area variation errors {mass}, energy variation errors {en} (subdiv 3..5); inflation lhs/8π {:.4}, rhs/8π {:.4}",
            l / EIGHT_PI,
            r / EIGHT_PI
        ),
    )
}

fn c5_criticality() -> (bool, String) {
    let norms: Vec<f64> = (3..=5).map(|s| grad_e_variational(&sphere(s)).l2_norm).collect();
    let order = convergence_order(&norms);
    let flat = Arc::new(Ambient::flat_torus(2.0 * PI));
    let t = make_flat_subtorus(16, 1.0, flat).unwrap();
    let g = grad_e_variational(&t).max_norm;
    let norms = sci(&norms);
    (
        order >= 1.0 && g < 1e-8,
        format!("round sphere ‖∇E‖ by subdiv 3..5 {norms}, order {order:.2}; flat subtorus sup {g:.1e}"),
    )
}

fn c6_monotone(runs: &mut Runs) -> (bool, String) {
    let start = Instant::now();
    let r = run_scenario("sphere_perturbed.cfg", "sphere_perturbed");
    let secs = start.elapsed().as_secs_f64();
    let e = energies(&r.csv);
    let strict = e.windows(2).all(|w| w[1] < w[0]);
    let ledger = rel(r.ledger_dissipation, r.ledger_drop);
    let pass = strict && e.len() == 501 && ledger < 0.05 && secs < 300.0;
    let detail = format!(
        "{} accepted steps, strictly decreasing: {strict}; E drop {:.4e} vs Σdt‖∇E‖² {:.4e} (rel {ledger:.1e}); {secs:.0}s",
        e.len() - 1,
        r.ledger_drop,
        r.ledger_dissipation
    );
    runs.perturbed = Some(r);
    (pass, detail)
}

fn c7_long_time() -> (bool, String) {
    let cfg = parse_config(&scenario("sphere_stationary.cfg")).unwrap();
    let r = run_scenario("sphere_stationary.cfg", "sphere_stationary");
    let e0 = r.energy_initial / EIGHT_PI;
    let e1 = r.energy_final / EIGHT_PI;
    let quiet = r.status != FlowStatus::Concentrated && r.chi_first_radius_max < cfg.eps0_sq;
    let pass = r.status == FlowStatus::Stationary && (e1 - 1.0).abs() < 0.01 && r.asphericity < 1e-2 && quiet;
    (
        pass,
        format!(
            "status {:?} after {} steps; E/8π {e0:.5} -> {e1:.5}; asphericity {:.1e}; max χ(ρ₁) {:.2e} < ε₀² {}",
            r.status, r.steps, r.asphericity, r.chi_first_radius_max, cfg.eps0_sq
        ),
    )
}

fn c8_concentration(runs: &Runs) -> (bool, String) {
    let mut radii = default_radii();
    radii.push(1e6);
    let mut mono = true;
    let mut total: f64 = 0.0;
    let snaps = runs.perturbed.as_ref().map(|r| r.snapshots.clone()).unwrap_or_default();
    for p in &snaps {
        let m = load_ply(p, euclid()).unwrap();
        let prof = concentration(&m, &radii, &CenterStrategy::default(), 0.0).unwrap();
        mono &= prof.values.windows(2).all(|w| w[0] <= w[1]);
        total = total.max(rel(*prof.values.last().unwrap(), energy_e(&m)));
    }
    let m = sphere(5);
    let small = [0.05, 0.1, 0.15, 0.2];
    let prof = concentration(&m, &small, &CenterStrategy::default(), 0.0).unwrap();
    let ratios: Vec<f64> = small.iter().zip(&prof.values).map(|(r, v)| v / (2.0 * PI * r * r)).collect();
    // below 2.5 edge lengths (ρ = 0.05 at subdiv 5) the quadrature cannot resolve the ball
    let resolved = ratios[1..].iter().all(|q| (q - 1.0).abs() < 0.1);
    let pass = !snaps.is_empty() && mono && total < 1e-9 && resolved;
    (
        pass,
        format!(
            "{} snapshots monotone: {mono}, |χ(ρ_max) − E|/E {total:.1e}; unit sphere χ/2πρ² at ρ = {small:?}: {ratios:.3?} (ρ = 0.05 reported only)",
            snaps.len()
        ),
    )
}

fn c9_lifespan() -> (bool, String) {
    let k = Constants::default();
    let rho = 0.5;
    let base = LifespanInputs { rho, chi: 0.0, sup_nabla_riemann: 0.0, area: 4.0 * PI, willmore: 4.0 * PI };
    let a = lifespan_bound(base, &k);
    let b = lifespan_bound(LifespanInputs { chi: k.c * k.eps0_sq, ..base }, &k);
    let c = lifespan_bound(LifespanInputs { chi: k.c * k.eps0_sq / std::f64::consts::E, ..base }, &k);
    let want = k.c * rho.powi(4);
    let pass = a.t_low == f64::INFINITY && b.t_low == 0.0 && rel(c.t_low, want) <= 4.0 * f64::EPSILON;
    (
        pass,
        format!(
            "denominator 0 -> {}; log argument 1 -> {}; log argument e -> {:e} (Cρ⁴ = {want:e})",
            a.t_low, b.t_low, c.t_low
        ),
    )
}

fn c10_area_density() -> (bool, String) {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (file, tag) in [("clifford_s3.cfg", "clifford_s3"), ("geodesic_sphere_s3.cfg", "geodesic_sphere_s3")] {
        let cfg = parse_config(&scenario(file)).unwrap();
        let amb = build_ambient(&cfg.ambient, &scenario("")).unwrap();
        let r = run_scenario(file, tag);
        for p in &r.snapshots {
            let b = area_bound_check(&load_ply(p, amb.clone()).unwrap()).unwrap();
            ok &= b.pass;
            worst = worst.max(b.lhs / b.rhs);
            checked += 1;
        }
    }
    let flat = Arc::new(Ambient::flat_torus(2.0 * PI));
    let t = make_flat_subtorus(32, 1.0, flat).unwrap();
    let centers: Vec<_> = t.vertices().iter().step_by(37).cloned().collect();
    let patch = density_ratio(&t, &centers, &[0.5, 1.0, 2.0]).unwrap();
    let m = sphere(4);
    let centers: Vec<_> = m.vertices().iter().step_by(53).cloned().collect();
    let cap = density_ratio(&m, &centers, &[0.1, 0.2, 0.3]).unwrap();
    let near_pi = |d: &sff_flow::diagnostics::DensityReport| d.per_radius.iter().all(|(_, q)| rel(*q, PI) < 0.15);
    let pass = ok && checked > 0 && near_pi(&patch) && near_pi(&cap);
    let show = |d: &sff_flow::diagnostics::DensityReport| d.per_radius.iter().map(|(_, q)| q / PI).collect::<Vec<_>>();
    (
        pass,
        format!(
            "area bound on {checked} sphere(1) snapshots, max area/bound {worst:.3}; density/π flat patch {:.3?}, unit sphere {:.3?}",
            show(&patch),
            show(&cap)
        ),
    )
}

fn c11_derivations() -> (bool, String) {
    let evo = derive_evolution_structure(false).unwrap();
    let c2 = derive_commutator_2(false).unwrap();
    let c4 = derive_commutator_4(false).unwrap();
    let targets = [
        ("evolution", &evo, "{Δ²A, P(2,3), P(0,5), Q(2,1,1), QRR(0,1)}"),
        ("commutator2", &c2, "{P(0,3), Q(0,1,1)}"),
        ("commutator4", &c4, "{Q(2,1,1)}"),
    ];
    let mut misses = Vec::new();
    for (name, d, want) in &targets {
        if d.result.to_string() != *want {
            misses.push(format!("{name} gave {} (target {want})", d.result));
        }
    }
    // same classes once the derivative bound on the curvature factor is ignored
    let strip = |d: &Derivation| {
        d.result
            .to_string()
            .split(", ")
            .map(|t| t.trim_matches(['{', '}']))
            .map(|t| {
                if t.starts_with("Q(") {
                    t.rsplit_once(',').map_or(t.to_string(), |(a, _)| a.to_string())
                } else {
                    t.to_string()
                }
            })
            .collect::<Vec<_>>()
    };
    let modulo_m = strip(&evo) == ["Δ²A", "P(2,3)", "P(0,5)", "Q(2,1", "QRR(0,1)"];
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let stable = [("evolution.txt", &evo), ("commutator2.txt", &c2), ("commutator4.txt", &c4)]
        .iter()
        .all(|(f, d)| std::fs::read_to_string(golden.join(f)).map(|g| g == d.trace_text()).unwrap_or(false));
    let pass = misses.is_empty() && stable;
    let head = if misses.is_empty() { "all targets met".to_string() } else { misses.join("; ") };
    (pass, format!("{head}; evolution agrees up to the m bound: {modulo_m}; golden traces stable: {stable}"))
}

fn c12_determinism(runs: &Runs) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    for (file, tag) in [
        ("flat_subtorus.cfg", "flat_subtorus"),
        ("clifford_s3.cfg", "clifford_s3"),
        ("geodesic_sphere_s3.cfg", "geodesic_sphere_s3"),
    ] {
        let a = std::fs::read(run_scenario(file, &format!("{tag}_a")).csv).unwrap();
        let b = std::fs::read(run_scenario(file, &format!("{tag}_b")).csv).unwrap();
        ok &= a == b;
        notes.push(format!("{tag} {}", a == b));
    }
    // the perturbed sphere is compared against the criterion-6 run when it exists
    let first = match &runs.perturbed {
        Some(r) => std::fs::read(&r.csv).unwrap(),
        None => std::fs::read(run_scenario("sphere_perturbed.cfg", "sphere_perturbed_a").csv).unwrap(),
    };
    let again = std::fs::read(run_scenario("sphere_perturbed.cfg", "sphere_perturbed_b").csv).unwrap();
    ok &= first == again;
    notes.push(format!("sphere_perturbed {}", first == again));
    // the long stationary run is compared over a 1000-step prefix
    let cfg = parse_config(&scenario("sphere_stationary.cfg")).unwrap();
    let prefix = workdir().join("stationary_prefix.cfg");
    let mut short = cfg.clone();
    short.max_steps = 1000;
    short.diag_every = 1000;
    short.snapshot_every = 0;
    std::fs::create_dir_all(workdir()).unwrap();
    std::fs::write(&prefix, short.to_text()).unwrap();
    let run_prefix = |tag: &str| {
        let out = workdir().join(tag);
        let _ = std::fs::remove_dir_all(&out);
        std::fs::read_to_string(cmd_run(&prefix, Some(&out)).unwrap().csv).unwrap()
    };
    let (a, b) = (run_prefix("stationary_prefix_a"), run_prefix("stationary_prefix_b"));
    ok &= a == b;
    notes.push(format!("sphere_stationary (1000-step prefix) {}", a == b));
    (ok, format!("byte-identical CSVs: {}", notes.join(", ")))
}

fn main() -> ExitCode {
    let only = selected(std::env::var("ACCEPTANCE_ONLY").ok());
    let want = |id: u32| only.as_ref().is_none_or(|v| v.contains(&id));
    let mut runs = Runs::default();
    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut report = |v: Verdict| {
        println!("{v}");
        verdicts.push(v);
    };
    if want(1) {
        report(evaluate(1, "energy values", c1_energy_values));
    }
    if want(2) {
        report(evaluate(2, "Gauss-Bonnet", c2_gauss_bonnet));
    }
    if want(3) {
        report(evaluate(3, "gradient duality", c3_duality));
    }
    if want(4) {
        report(evaluate(4, "first variations", c4_first_variation));
    }
    if want(5) {
        report(evaluate(5, "criticality", c5_criticality));
    }
    if want(6) || want(8) || want(12) {
        let v = evaluate(6, "flow monotonicity and dissipation", || c6_monotone(&mut runs));
        if want(6) {
            report(v);
        }
    }
    if want(7) {
        report(evaluate(7, "long-time behaviour", c7_long_time));
    }
    if want(8) {
        report(evaluate(8, "concentration", || c8_concentration(&runs)));
    }
    if want(9) {
        report(evaluate(9, "lifespan evaluator", c9_lifespan));
    }
    if want(10) {
        report(evaluate(10, "area and density bounds", c10_area_density));
    }
    if want(11) {
        report(evaluate(11, "symbolic derivations", c11_derivations));
    }
    if want(12) {
        report(evaluate(12, "determinism", || c12_determinism(&runs)));
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!("acceptance: {} of {} criteria pass; failing: {failed:?}", verdicts.len() - failed.len(), verdicts.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
