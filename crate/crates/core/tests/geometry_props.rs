use std::sync::Arc;

use proptest::prelude::*;
use sff_flow::ambient::Ambient;
use sff_flow::curvature::{energy_e, energy_w, fundamental_forms, gauss_bonnet_residual};
use sff_flow::mesh::{
    load_obj, load_ply, make_genus2, make_sphere, make_torus, perturb, refine, save_obj, save_ply, Immersion,
    Perturbation, PlyChannel,
};

fn euclid() -> Arc<Ambient> {
    Arc::new(Ambient::euclidean())
}

fn bumpy_sphere(seed: u64, amp: f64) -> Immersion {
    let m = make_sphere(2, 1.0, [0.0; 3], euclid()).unwrap();
    perturb(&m, Perturbation::Random, amp, seed).unwrap()
}

fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
    mul(&mul(&rz, &ry), &rx)
}

fn mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn moved(m: &Immersion, r: &[[f64; 3]; 3], t: [f64; 3], s: f64) -> Immersion {
    let x = m
        .vertices()
        .iter()
        .map(|p| {
            let q: Vec<f64> = (0..3).map(|i| s * (0..3).map(|k| r[i][k] * p[k]).sum::<f64>() + t[i]).collect();
            [q[0], q[1], q[2]]
        })
        .collect();
    m.with_positions(x).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rigid_motions_preserve_curvature(
        seed in 0u64..1000,
        ang in prop::array::uniform3(-3.0f64..3.0),
        t in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let m = bumpy_sphere(seed, 0.03);
        let n = moved(&m, &rotation(ang[0], ang[1], ang[2]), t, 1.0);
        let (a, b) = (fundamental_forms(&m), fundamental_forms(&n));
        prop_assert!(rel(b.energy(), a.energy()) < 1e-10);
        prop_assert!(rel(b.willmore(), a.willmore()) < 1e-10);
        for v in 0..m.n_vertices() {
            prop_assert!((a.abs_a2[v] - b.abs_a2[v]).abs() < 1e-10 * (1.0 + a.abs_a2[v]));
            prop_assert!((a.gauss[v] - b.gauss[v]).abs() < 1e-10 * (1.0 + a.gauss[v].abs()));
        }
    }

    #[test]
    fn scaling_preserves_energies(seed in 0u64..1000, s in 0.2f64..5.0) {
        let m = bumpy_sphere(seed, 0.03);
        let n = moved(&m, &rotation(0.0, 0.0, 0.0), [0.0; 3], s);
        prop_assert!(rel(energy_e(&n), energy_e(&m)) < 1e-10);
        prop_assert!(rel(energy_w(&n), energy_w(&m)) < 1e-10);
        let (a, b) = (fundamental_forms(&m), fundamental_forms(&n));
        prop_assert!(rel(b.abs_a2[0] * s * s, a.abs_a2[0]) < 1e-9);
        prop_assert!(rel(n.area(), s * s * m.area()) < 1e-12);
    }

    #[test]
    fn trace_of_stored_form_is_the_mean_curvature(seed in 0u64..1000) {
        let m = bumpy_sphere(seed, 0.05);
        let cf = fundamental_forms(&m);
        for v in 0..m.n_vertices() {
            let s = cf.second_form[v];
            prop_assert_eq!(s[0][0] + s[1][1], cf.mean[v]);
        }
    }

    #[test]
    fn gauss_bonnet_identity_is_exact(seed in 0u64..1000, amp in 0.0f64..0.1) {
        let m = bumpy_sphere(seed, amp);
        prop_assert!(gauss_bonnet_residual(&m) < 1e-9);
        let t = make_torus(24, 12, 2.0, 0.6, euclid()).unwrap();
        let t = perturb(&t, Perturbation::Random, amp * 0.2, seed).unwrap();
        prop_assert!(gauss_bonnet_residual(&t) < 1e-9);
    }

    #[test]
    fn perturb_and_refine_keep_topology(seed in 0u64..1000, l in 1u32..5) {
        let m = make_torus(16, 8, 2.0, 0.5, euclid()).unwrap();
        let p = perturb(&m, Perturbation::Harmonic { l }, 0.02, seed).unwrap();
        prop_assert_eq!(p.euler_characteristic(), 0);
        prop_assert_eq!(refine(&p).unwrap().euler_characteristic(), 0);
        let q = perturb(&m, Perturbation::Random, 0.02, seed).unwrap();
        let r = perturb(&m, Perturbation::Random, 0.02, seed).unwrap();
        prop_assert_eq!(q.vertices(), r.vertices());
    }
}

#[test]
fn generators_are_deterministic() {
    let a = make_sphere(3, 1.0, [0.0; 3], euclid()).unwrap();
    let b = make_sphere(3, 1.0, [0.0; 3], euclid()).unwrap();
    assert_eq!(a.vertices(), b.vertices());
    assert_eq!(a.faces(), b.faces());
    assert_eq!(make_genus2(1.0, euclid()).unwrap().euler_characteristic(), -2);
}

#[test]
fn obj_and_ply_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = bumpy_sphere(3, 0.05);
    let obj = dir.path().join("m.obj");
    save_obj(&m, &obj).unwrap();
    let back = load_obj(&obj, euclid()).unwrap();
    assert_eq!(back.faces(), m.faces());
    for (p, q) in back.vertices().iter().zip(m.vertices()) {
        assert_eq!(p, q);
    }
    let ply = dir.path().join("m.ply");
    let cf = fundamental_forms(&m);
    save_ply(&m, &ply, &[PlyChannel::Scalar("abs_A2", &cf.abs_a2), PlyChannel::Vector("normal", &cf.normals)]).unwrap();
    let back = load_ply(&ply, euclid()).unwrap();
    assert_eq!(back.faces(), m.faces());
    assert_eq!(back.vertices(), m.vertices());
}
