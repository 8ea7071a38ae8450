#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use sff_flow::ambient::{Ambient, ChartMetric, Riemann};

fn check_symmetries(r: &Riemann, tol: f64) -> Result<(), TestCaseError> {
    let scale = 1.0 + r.iter().flatten().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let v = r[i][j][k][l];
                    prop_assert!((v + r[j][i][k][l]).abs() < tol * scale);
                    prop_assert!((v + r[i][j][l][k]).abs() < tol * scale);
                    prop_assert!((v - r[k][l][i][j]).abs() < tol * scale);
                    let bianchi = v + r[j][k][i][l] + r[k][i][j][l];
                    prop_assert!(bianchi.abs() < tol * scale, "first Bianchi {bianchi}");
                }
            }
        }
    }
    Ok(())
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.5f64..1.5)
}

fn bumpy() -> Ambient {
    Ambient::chart(ChartMetric::new([-2.0; 3], [2.0; 3], |x| {
        let f = 1.0 + 0.2 * (x[0] * x[1]).sin() + 0.1 * x[2] * x[2];
        [[f, 0.05 * x[2], 0.0], [0.05 * x[2], 1.0 + 0.1 * x[0] * x[0], 0.0], [0.0, 0.0, 1.0]]
    }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sphere_riemann_has_curvature_symmetries(r in 0.3f64..3.0, x in point()) {
        let a = Ambient::sphere(r);
        check_symmetries(&a.riemann_at(&x).unwrap(), 1e-8)?;
    }

    #[test]
    fn chart_riemann_has_curvature_symmetries(x in prop::array::uniform3(-1.0f64..1.0)) {
        check_symmetries(&bumpy().riemann_at(&x).unwrap(), 1e-4)?;
    }

    #[test]
    fn sphere_sectional_curvature_is_constant(
        r in 0.3f64..3.0,
        x in point(),
        u in prop::array::uniform3(-1.0f64..1.0),
        v in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        prop_assume!(cross.iter().map(|c| c * c).sum::<f64>() > 1e-3);
        let k = Ambient::sphere(r).sectional_curvature(&x, &u, &v).unwrap();
        prop_assert!((k - 1.0 / (r * r)).abs() < 1e-6 * (1.0 / (r * r)).max(1.0));
    }

    #[test]
    fn christoffels_are_metric_compatible(r in 0.5f64..2.0, x in point()) {
        // ∂_k g_ij = Γ^l_ki g_lj + Γ^l_kj g_il
        let a = Ambient::sphere(r);
        let g = a.metric_at(&x).unwrap();
        let gamma = a.christoffels_at(&x).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (gp, gm) = (a.metric_at(&xp).unwrap(), a.metric_at(&xm).unwrap());
            for i in 0..3 {
                for j in 0..3 {
                    let fd = (gp[i][j] - gm[i][j]) / (2.0 * h);
                    let rhs: f64 = (0..3).map(|l| gamma[l][k][i] * g[l][j] + gamma[l][k][j] * g[i][l]).sum();
                    prop_assert!((fd - rhs).abs() < 1e-6 * (1.0 + rhs.abs()), "{} vs {}", fd, rhs);
                }
            }
        }
    }

    #[test]
    fn flat_ambients_have_no_curvature(x in point(), l in 1.0f64..10.0) {
        for a in [Ambient::euclidean(), Ambient::flat_torus(l)] {
            let r = a.riemann_at(&x).unwrap();
            prop_assert!(r.iter().flatten().flatten().flatten().all(|v| *v == 0.0));
        }
    }
}
