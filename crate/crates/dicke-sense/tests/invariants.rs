mod common;

use dicke_sense::dicke::{build_liouvillian, DensityMatrix, SpinOp};
use dicke_sense::dynamics;
use dicke_sense::linalg::{self, CMat};
use dicke_sense::metrology::{self, QfiConfig};
use dicke_sense::model::{Model, Preparation};
use dicke_sense::timebin::{self, BinSource, KrausMode};
use dicke_sense::ModelParams;
use proptest::prelude::*;

fn hermiticity_error(a: &CMat) -> f64 {
    linalg::max_abs_diff(a, &linalg::dagger(a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn collective_evolution_stays_a_state(n in 1usize..8, ratio in 0.1f64..3.0, t in 0.0f64..3.0, seed in any::<u64>()) {
        let p = ModelParams::from_ratios(n, ratio, 0.0).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let rho = common::random_density(n + 1, &mut common::rng(seed));
        let out = dynamics::evolve(&l, &rho, t).unwrap();
        prop_assert!((out.trace() - 1.0).norm() < 1e-9);
        prop_assert!(hermiticity_error(out.data()) < 1e-9);
        prop_assert!(out.min_eigenvalue().unwrap() > -1e-9);
    }

    #[test]
    fn local_decay_evolution_stays_a_state(n in 2usize..7, ratio in 0.1f64..3.0, g in 0.01f64..1.0, t in 0.0f64..2.0, seed in any::<u64>()) {
        let p = ModelParams::from_ratios(n, ratio, g).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let rho = common::random_density(n + 1, &mut common::rng(seed));
        let x0 = l.space.embed_maximal(&rho).unwrap();
        let x = dynamics::evolve_vec(&l, &x0, t).unwrap();
        prop_assert!((l.space.trace(&x) - 1.0).norm() < 1e-9);
        prop_assert!(l.space.sector_traces(&x).iter().all(|&w| w > -1e-10));
        prop_assert!(l.space.min_eigenvalue(&x).unwrap() > -1e-9);
    }

    #[test]
    fn exact_kraus_pair_is_complete(n in 1usize..10, ratio in 0.1f64..3.0, dt in 1e-6f64..1e-2) {
        let p = ModelParams::from_ratios(n, ratio, 0.0).unwrap();
        let kp = timebin::kraus_pair(&p, dt, KrausMode::ExactUnitary).unwrap();
        prop_assert!(kp.completeness_error() < 1e-12);
    }

    #[test]
    fn fidelity_axioms(dim in 2usize..6, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = common::random_density(dim, &mut common::rng(s1));
        let b = common::random_density(dim, &mut common::rng(s2));
        let ab = metrology::fidelity(a.data(), b.data()).unwrap();
        let ba = metrology::fidelity(b.data(), a.data()).unwrap();
        let aa = metrology::fidelity(a.data(), a.data()).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-8);
        prop_assert!((aa - 1.0).abs() < 1e-8);
    }

    #[test]
    fn one_bin_qfi_is_nonnegative(n in 2usize..8, ratio in 0.2f64..3.0) {
        let p = ModelParams::from_ratios(n, ratio, 0.0).unwrap();
        let cfg = QfiConfig::new(metrology::default_dt(&p), BinSource::ExactDiscrete);
        let r = metrology::qfi_one_bin(&p, Preparation::Stationary, &cfg).unwrap();
        prop_assert!(r.value >= 0.0 && r.per_time.is_finite());
    }

    #[test]
    fn analytic_one_bin_occupation_is_emission_rate(n in 1usize..8, ratio in 0.1f64..3.0, dt in 1e-6f64..1e-3) {
        let p = ModelParams::from_ratios(n, ratio, 0.0).unwrap();
        let m = Model::new(&p).unwrap();
        let x = m.prepare(Preparation::Stationary).unwrap();
        let spm = m.l.space.expect(SpinOp::PlusMinus, &x).re;
        let sm = m.l.space.expect(SpinOp::Minus, &x).norm_sqr();
        let g = p.gamma_coll * dt;
        // the truncated state has determinant g (spm - |sm|^2) - (g spm)^2
        let det = g * (spm - sm) - (g * spm).powi(2);
        match timebin::one_bin_analytic(&m.l, &x, dt, None) {
            Ok(bin) => prop_assert!((bin.occupation(1) / g - spm).abs() < 1e-9 * (1.0 + spm)),
            Err(_) => prop_assert!(det < 0.0, "rejected with determinant {det}"),
        }
    }
}

#[test]
fn ground_state_is_a_state() {
    let g = DensityMatrix::ground(5);
    assert!((g.trace() - 1.0).norm() < 1e-15);
    assert!(g.min_eigenvalue().unwrap() > -1e-15);
}
