use std::sync::Arc;

use proptest::prelude::*;
use sff_flow::ambient::Ambient;
use sff_flow::curvature::gauss_bonnet_residual;
use sff_flow::diagnostics::{default_radii, Constants};
use sff_flow::flow::{check_area_growth, dissipation_ledger, run, step, FlowState, FlowStatus, RunOptions, StepPolicy};
use sff_flow::mesh::{make_sphere, make_torus, perturb, Immersion, Perturbation};

fn bumpy(seed: u64, amp: f64) -> Immersion {
    let m = make_sphere(1, 1.0, [0.0; 3], Arc::new(Ambient::euclidean())).unwrap();
    perturb(&m, Perturbation::Random, amp, seed).unwrap()
}

fn policy(steps: usize) -> StepPolicy {
    StepPolicy { max_steps: steps, ..StepPolicy::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn accepted_steps_never_raise_the_energy(seed in 0u64..1000, amp in 0.02f64..0.1) {
        let p = policy(15);
        let mut s = FlowState::new(bumpy(seed, amp), &p);
        let chi = s.mesh.euler_characteristic();
        while s.status == FlowStatus::Running && s.step < p.max_steps {
            s = step(s, &p);
            prop_assert_eq!(s.mesh.euler_characteristic(), chi);
            prop_assert!(gauss_bonnet_residual(&s.mesh) < 1e-9);
        }
        for w in s.history.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy, "{} -> {}", w[0].energy, w[1].energy);
            prop_assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn energy_drop_matches_dissipation(seed in 0u64..1000) {
        let p = policy(20);
        let mut s = FlowState::new(bumpy(seed, 0.05), &p);
        while s.status == FlowStatus::Running && s.step < p.max_steps {
            s = step(s, &p);
        }
        let n = s.history.len() - 1;
        let (drop, sum) = dissipation_ledger(&s, 0, n);
        prop_assert!(drop > 0.0);
        prop_assert!((drop - sum).abs() < 0.05 * drop, "drop {} dissipation {}", drop, sum);
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let p = policy(10);
    let opts = RunOptions {
        diag_every: 5,
        snapshot_every: 0,
        radii: default_radii(),
        constants: Constants::default(),
        out_dir: None,
    };
    let a = run(bumpy(11, 0.05), &p, &opts).unwrap();
    let b = run(bumpy(11, 0.05), &p, &opts).unwrap();
    assert_eq!(a.state.mesh.vertices(), b.state.mesh.vertices());
    let bits = |s: &FlowState| s.history.iter().map(|r| (r.t.to_bits(), r.energy.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a.state), bits(&b.state));
}

#[test]
fn area_growth_is_zero_before_the_first_step() {
    let p = policy(0);
    let s = FlowState::new(bumpy(1, 0.05), &p);
    assert_eq!(check_area_growth(&s), 0.0);
}

#[test]
fn torus_flow_keeps_genus_and_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_torus(24, 12, 2.0, 0.6, Arc::new(Ambient::euclidean())).unwrap();
    let m = perturb(&m, Perturbation::Harmonic { l: 2 }, 0.03, 0).unwrap();
    let opts = RunOptions {
        diag_every: 4,
        snapshot_every: 4,
        radii: vec![0.1, 0.4, 1.6],
        constants: Constants::default(),
        out_dir: Some(dir.path().to_path_buf()),
    };
    let out = run(m, &policy(8), &opts).unwrap();
    assert_eq!(out.state.mesh.euler_characteristic(), 0);
    assert!(!out.snapshots.is_empty());
    for s in &out.snapshots {
        let back = sff_flow::mesh::load_ply(s, Arc::new(Ambient::euclidean())).unwrap();
        assert_eq!(back.euler_characteristic(), 0);
        assert!(gauss_bonnet_residual(&back) < 1e-9);
    }
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(csv.lines().count(), out.state.history.len() + 1);
    assert!(out.state.history.iter().filter(|r| r.chi.is_some()).count() >= 2);
}
