use proptest::prelude::*;
use sff_flow::pqcalc::{
    derive_commutator_2, derive_commutator_4, derive_evolution_structure, nabla, p, q, qrr, PQSum, PQTerm,
};

fn term() -> impl Strategy<Value = PQTerm> {
    prop_oneof![
        (0u32..5, 0u32..6).prop_map(|(k, l)| p(k, l)),
        (0u32..5, 0u32..4, 0u32..5).prop_map(|(k, l, m)| q(k, l, m)),
        (0u32..5, 0u32..3).prop_map(|(k, l)| qrr(k, l)),
    ]
}

proptest! {
    #[test]
    fn normalization_is_idempotent_and_order_free(ts in prop::collection::vec(term(), 0..12), rot in 0usize..12) {
        let a = PQSum::new(ts.clone()).normalize();
        prop_assert_eq!(a.normalize(), a.clone());
        let mut shuffled = ts.clone();
        shuffled.reverse();
        if !shuffled.is_empty() {
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
        }
        prop_assert_eq!(PQSum::new(shuffled).normalize(), a);
    }

    #[test]
    fn derivatives_raise_the_grade_by_one(t in term()) {
        let d = nabla(&t).unwrap();
        prop_assert!(d.terms().iter().all(|x| x.grade() == t.grade() + 1));
    }

    #[test]
    fn absorbed_terms_share_a_grade(a in term(), b in term()) {
        if a.subsumed_by(&b) {
            prop_assert_eq!(a.grade(), b.grade());
        }
    }
}

#[test]
fn derivations_are_homogeneous() {
    let evo = derive_evolution_structure(false).unwrap().result;
    assert!(evo.terms().iter().all(|t| t.grade() == 5), "{evo}");
    assert_eq!(derive_commutator_2(false).unwrap().result.grade(), Some(3));
    assert_eq!(derive_commutator_4(false).unwrap().result.grade(), Some(5));
}

fn golden(name: &str, text: &str) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, want, "trace changed: {name}");
}

#[test]
fn traces_match_golden_files() {
    for flat in [false, true] {
        let sfx = if flat { "_flat" } else { "" };
        golden(&format!("commutator2{sfx}.txt"), &derive_commutator_2(flat).unwrap().trace_text());
        golden(&format!("commutator4{sfx}.txt"), &derive_commutator_4(flat).unwrap().trace_text());
        golden(&format!("evolution{sfx}.txt"), &derive_evolution_structure(flat).unwrap().trace_text());
    }
}
