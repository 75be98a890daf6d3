mod common;

use dicke_sense::dicke::{build_liouvillian, DensityMatrix, ModelParams, SpinOp};
use dicke_sense::dynamics;
use dicke_sense::permsym::*;
use dicke_sense::linalg::{c64, CMat, ONE, ZERO};

fn ladder_run(p: &ModelParams, rho0: &DensityMatrix, t: f64, taus: &[f64]) -> OracleResult {
    let l = build_permsym_liouvillian(p).unwrap();
    let s0 = DickeLadderState::from_maximal(l.space.clone(), rho0).unwrap();
    let s = evolve_permsym(&l, &s0, t).unwrap();
    let tr = dynamics::regression_trace(&l, &s.data, taus, 0.0, true).unwrap();
    OracleResult { observables: CollectiveObservables::of(&l.space, &s.data), correlation: tr.c_pm }
}

#[test]
fn ladder_matches_full_register() {
    let taus = [0.0, 0.3, 1.0];
    let mut rng = common::rng(7);
    for n in [3usize, 4] {
        for gl in [0.0, 0.1, 0.5] {
            let p = ModelParams::from_ratios(n, 1.3, gl).unwrap();
            let rho0 = common::random_density(n + 1, &mut rng);
            for t in [0.5, 1.0, 2.0] {
                let a = ladder_run(&p, &rho0, t, &taus);
                let b = brute_force_oracle(&p, &rho0, t, &taus).unwrap();
                let d = a.observables.max_abs_diff(&b.observables);
                assert!(d < 1e-8, "n={n} gl={gl} t={t}: {d:e}");
                for (x, y) in a.correlation.iter().zip(&b.correlation) {
                    assert!((x - y).norm() < 1e-8, "n={n} gl={gl} t={t}: corr {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn stationary_matches_null_space() {
    let p = ModelParams::from_ratios(4, 2.0, 0.1).unwrap();
    let l = build_permsym_liouvillian(&p).unwrap();
    let x = dynamics::steady_state_vec(&l).unwrap();
    let o = brute_force_stationary(&p, &[]).unwrap();
    let spm = l.space.expect(SpinOp::PlusMinus, &x).re;
    assert!((spm - o.observables.spm).abs() < 1e-8, "{spm} vs {}", o.observables.spm);
}

#[test]
fn reduces_to_collective_without_local_decay() {
    let p = ModelParams::from_ratios(5, 1.5, 0.0).unwrap();
    let lp = build_permsym_liouvillian(&p).unwrap();
    let lc = build_liouvillian(&p).unwrap();
    let mut rng = common::rng(3);
    let rho = common::random_density(6, &mut rng);
    let x = lp.space.embed_maximal(&rho).unwrap();
    let y = lp.apply(&x);
    let yc = lc.apply(&rho.to_vec());
    let len = yc.len();
    let diff = y[..len].iter().zip(&yc).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12);
    assert!(y[len..].iter().all(|z| z.norm() == 0.0));
}

#[test]
fn sector_weights_conserved_without_local_decay() {
    let p = ModelParams::from_ratios(4, 1.0, 0.0).unwrap();
    let l = build_permsym_liouvillian(&p).unwrap();
    let mut x = vec![ZERO; l.len()];
    // half weight in the maximal sector ground state, half in j = 1 top state
    let d0 = l.space.sectors[0].dim;
    x[(d0 - 1) * (d0 + 1)] = c64::new(0.5, 0.0);
    x[l.space.sectors[1].offset] = c64::new(0.5, 0.0);
    let s0 = DickeLadderState { space: l.space.clone(), data: x };
    let s = evolve_permsym(&l, &s0, 2.0).unwrap();
    let w = s.sector_weights();
    assert!((w[0] - 0.5).abs() < 1e-10 && (w[1] - 0.5).abs() < 1e-10);
    assert!(matches!(dynamics::steady_state_vec(&l), Err(dicke_sense::Error::Degenerate(_))));
}

#[test]
fn maximal_sector_leaks_monotonically() {
    let p = ModelParams::from_ratios(6, 2.0, 0.2).unwrap();
    let l = build_permsym_liouvillian(&p).unwrap();
    let mut s = DickeLadderState::ground(l.space.clone());
    let mut prev = 1.0;
    for _ in 0..20 {
        s = evolve_permsym(&l, &s, 0.1).unwrap();
        let w = s.sector_weights()[0];
        assert!(w <= prev + 1e-12);
        prev = w;
        assert!((s.trace() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn oracle_is_permutation_invariant() {
    let p = ModelParams::from_ratios(3, 1.0, 0.3).unwrap();
    let reg = FullRegister::new(3).unwrap();
    let basis = |k: usize| {
        let mut m = CMat::zeros(reg.dim, reg.dim);
        m[(k, k)] = ONE;
        m
    };
    // |up down down> and |down down up>
    let a = brute_force_register(&p, &basis(0b011), 0.7, &[0.0, 0.4]).unwrap();
    let b = brute_force_register(&p, &basis(0b110), 0.7, &[0.0, 0.4]).unwrap();
    assert!(a.observables.max_abs_diff(&b.observables) < 1e-12);
    assert!((a.correlation[1] - b.correlation[1]).norm() < 1e-12);
}

#[test]
fn oracle_without_local_decay_matches_collective() {
    let p = ModelParams::from_ratios(3, 1.7, 0.0).unwrap();
    let mut rng = common::rng(11);
    let rho = common::random_density(4, &mut rng);
    let o = brute_force_oracle(&p, &rho, 1.0, &[]).unwrap();
    let l = build_liouvillian(&p).unwrap();
    let r = dynamics::evolve(&l, &rho, 1.0).unwrap();
    let c = CollectiveObservables::of(&l.space, &r.to_vec());
    assert!(c.max_abs_diff(&o.observables) < 1e-10);
}
