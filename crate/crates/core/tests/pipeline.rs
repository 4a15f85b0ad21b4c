use bandlab_core::deloc::run_deloc_experiment;
use bandlab_core::ensembles::{sample_ensemble, Ensemble};
use bandlab_core::lindeberg::{direct_resolvent, woodbury_swap};
use bandlab_core::linalg::max_abs_c;
use bandlab_core::locallaw::run_local_law_experiment;
use bandlab_core::profile::{build_custom_profile, build_torus_profile, profile_from_spec};
use bandlab_core::spectral::{build_domain, decompose, m_sc};
use bandlab_core::C64;
use proptest::prelude::*;

#[test]
fn local_law_report_is_independent_of_worker_count() {
    let p = build_torus_profile(1, 4, 0.2).unwrap();
    let d = build_domain(64, 16, 0.3, 0.05, 3, 2).unwrap();
    let a = run_local_law_experiment(&p, 16, Ensemble::ThreePoint, &d, 5, 42, 1).unwrap();
    let b = run_local_law_experiment(&p, 16, Ensemble::ThreePoint, &d, 5, 42, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 5 * 6);
    assert!(a.failures.is_empty());
}

#[test]
fn normalizations_differ_by_sqrt_w() {
    let p = build_torus_profile(1, 4, 0.2).unwrap();
    let d = build_domain(64, 16, 0.3, 0.05, 2, 2).unwrap();
    let r = run_local_law_experiment(&p, 16, Ensemble::Gaussian, &d, 3, 1, 1).unwrap();
    for x in &r.records {
        assert!((x.sqrt_n_eta_psi / x.sqrt_m_eta_psi - 2.0).abs() < 1e-12);
    }
}

#[test]
fn deloc_statistic_lies_in_range() {
    let p = build_torus_profile(1, 4, 0.2).unwrap();
    let n = 64.0f64;
    for t in run_deloc_experiment(&p, 16, Ensemble::Gaussian, 0.3, 4, 9, 2) {
        let s = t.max_scaled_sup.unwrap();
        assert!((1.0..=n.sqrt()).contains(&s), "{s}");
    }
}

#[test]
fn profile_json_round_trip_drives_sampling() {
    let spec = serde_json::from_str(r#"{"W": 3, "edges": [[1, 2, 0.1], [2, 3, 0.15]]}"#).unwrap();
    let p = profile_from_spec(&spec).unwrap();
    let a = sample_ensemble(&p, 5, Ensemble::Gaussian, 3).unwrap();
    let q = profile_from_spec(&p.to_spec()).unwrap();
    let b = sample_ensemble(&q, 5, Ensemble::Gaussian, 3).unwrap();
    assert_eq!(a.h, b.h);
}

#[test]
fn woodbury_matches_direct_inverse_on_a_sample() {
    let p = build_custom_profile(2, &[(1, 2, 0.25)]).unwrap();
    let mut h = sample_ensemble(&p, 6, Ensemble::Gaussian, 5).unwrap().h;
    let z = C64::new(0.2, 0.3);
    let g = direct_resolvent(h.as_ref(), z);
    let delta = C64::new(0.1, -0.2);
    let updated = woodbury_swap(&g, 1, 7, delta).unwrap();
    h[(1, 7)] += delta;
    h[(7, 1)] += delta.conj();
    let direct = direct_resolvent(h.as_ref(), z);
    assert!(max_abs_c((&updated - &direct).as_ref()) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semicircle_solves_its_equation(e in -3.0f64..3.0, eta in 1e-6f64..10.0) {
        let z = C64::new(e, eta);
        let m = m_sc(z);
        prop_assert!((m * m + z * m + 1.0).norm() < 1e-10);
        prop_assert!(m.im > 0.0);
    }

    #[test]
    fn green_imaginary_diagonal_is_positive(seed in any::<u64>(), e in -2.0f64..2.0, eta in 0.01f64..1.0) {
        let p = build_torus_profile(1, 3, 0.1).unwrap();
        let h = sample_ensemble(&p, 4, Ensemble::ThreePoint, seed).unwrap().h;
        let d = decompose(h.as_ref()).unwrap();
        for g in d.green_diag(C64::new(e, eta)) {
            prop_assert!(g.im > 0.0);
        }
    }
}
