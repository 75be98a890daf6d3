mod common;

use dicke_sense::interferometer::{self, ErrorConfig, ErrorSource, Observable};
use dicke_sense::linalg::{self, CMat};
use dicke_sense::metrology::{self, QfiConfig};
use dicke_sense::model::Preparation;
use dicke_sense::timebin::{self, BinSource, KrausMode};
use dicke_sense::ModelParams;

/// QFI from the symmetric logarithmic derivative in the eigenbasis of `rho`:
/// `sum_ij 2 |<i|d rho|j>|^2 / (l_i + l_j)`, derivative by central difference.
fn sld_qfi(minus: &CMat, rho: &CMat, plus: &CMat, h: f64) -> f64 {
    let d = CMat::from_fn(rho.nrows(), rho.ncols(), |i, j| (plus[(i, j)] - minus[(i, j)]) / (2.0 * h));
    let (lam, v) = linalg::eigh(rho).unwrap();
    let dv = linalg::matmul(&linalg::dagger(&v), &linalg::matmul(&d, &v));
    let mut f = 0.0;
    for i in 0..lam.len() {
        for j in 0..lam.len() {
            let s = lam[i] + lam[j];
            if s > 1e-13 {
                f += 2.0 * dv[(i, j)].norm_sqr() / s;
            }
        }
    }
    f
}

fn exact_states(p: &ModelParams, dt: f64, gaps: Option<&[u64]>) -> Vec<CMat> {
    let kp = timebin::kraus_pair(p, dt, KrausMode::ExactUnitary).unwrap();
    let rho = metrology::discrete_prepared(p, &kp, Preparation::Stationary).unwrap();
    match gaps {
        None => vec![timebin::one_bin_exact(&kp, &rho, None).data],
        Some(g) => timebin::two_bin_exact_scan(&kp, &rho, g, None).unwrap().into_iter().map(|s| s.data).collect(),
    }
}

#[test]
fn one_bin_qfi_matches_sld_formula() {
    for (n, ratio) in [(4usize, 0.5), (5, 1.0), (6, 2.0)] {
        let p = ModelParams::from_ratios(n, ratio, 0.0).unwrap();
        let dt = 1e-3 / n as f64;
        let cfg = QfiConfig::new(dt, BinSource::ExactDiscrete).with_dg_rel(1e-3);
        let r = metrology::qfi_one_bin(&p, Preparation::Stationary, &cfg).unwrap();
        let h = r.dg;
        let m = &exact_states(&p.with_omega(p.omega - h), dt, None)[0];
        let c = &exact_states(&p, dt, None)[0];
        let pl = &exact_states(&p.with_omega(p.omega + h), dt, None)[0];
        let oracle = sld_qfi(m, c, pl, h);
        assert!((r.value / oracle - 1.0).abs() < 1e-2, "n={n} ratio={ratio}: {} vs {oracle}", r.value);
    }
}

#[test]
fn two_bin_qfi_matches_sld_formula() {
    let p = ModelParams::from_ratios(4, 2.0, 0.0).unwrap();
    let dt = 2.5e-4;
    let gaps = [0u64, 400, 2000];
    let taus: Vec<f64> = gaps.iter().map(|&g| g as f64 * dt).collect();
    let cfg = QfiConfig::new(dt, BinSource::ExactDiscrete).with_dg_rel(1e-3);
    let scan = metrology::qfi_vs_tau(&p, Preparation::Stationary, &taus, &cfg).unwrap();
    let h = scan.results[0].dg;
    let m = exact_states(&p.with_omega(p.omega - h), dt, Some(&gaps));
    let c = exact_states(&p, dt, Some(&gaps));
    let pl = exact_states(&p.with_omega(p.omega + h), dt, Some(&gaps));
    for k in 0..gaps.len() {
        let oracle = sld_qfi(&m[k], &c[k], &pl[k], h);
        let got = scan.results[k].value;
        assert!((got / oracle - 1.0).abs() < 2e-2, "gap {}: {got} vs {oracle}", gaps[k]);
    }
}

#[test]
fn overdamped_one_bin_plateau_near_four() {
    // stationary emission below the critical drive: F per time close to 4/Gamma
    let p = ModelParams::from_ratios(8, 0.5, 0.0).unwrap();
    let cfg = QfiConfig::new(metrology::default_dt(&p), BinSource::ExactDiscrete);
    let f = metrology::qfi_one_bin(&p, Preparation::Stationary, &cfg).unwrap().per_time;
    assert!((f / 4.0 - 1.0).abs() < 0.1, "{f}");
}

#[test]
fn counting_errors_respect_quantum_bound() {
    // method-of-moments error >= 1 / classical Fisher >= 1 / QFI on the same states
    let p = ModelParams::from_ratios(4, 2.0, 0.0).unwrap();
    let dt = 2.5e-4;
    let taus: Vec<f64> = [0u64, 200, 600, 1400, 2400].iter().map(|&g| g as f64 * dt).collect();
    let qcfg = QfiConfig::new(dt, BinSource::ExactDiscrete).with_dg_rel(1e-3);
    let q = metrology::qfi_vs_tau(&p, Preparation::Stationary, &taus, &qcfg).unwrap();
    let ecfg = ErrorConfig {
        dg_rel: 1e-3,
        bins: BinSource::ExactDiscrete,
        ..ErrorConfig::new(dt, ErrorSource::Exact)
    };
    let scan = interferometer::error_scan(&p, Preparation::Stationary, &taus, &ecfg).unwrap();
    for o in Observable::ALL {
        for (k, e) in scan.trace(o).iter().enumerate() {
            if e.insensitive {
                continue;
            }
            let product = e.value * q.results[k].value;
            assert!(product >= 1.0 - 1e-2, "{} at tau {}: error*QFI = {product}", o.as_str(), taus[k]);
        }
    }
}

#[test]
fn analytic_errors_approach_exact_ones() {
    let p = ModelParams::from_ratios(4, 2.0, 0.0).unwrap();
    let dt = 2.5e-5;
    let taus: Vec<f64> = [4000u64, 12000].iter().map(|&g| g as f64 * dt).collect();
    let exact = ErrorConfig { dg_rel: 1e-3, bins: BinSource::ExactDiscrete, ..ErrorConfig::new(dt, ErrorSource::Exact) };
    let analytic = ErrorConfig { dg_rel: 1e-3, ..ErrorConfig::new(dt, ErrorSource::ShortTimeAnalytic) };
    let a = interferometer::error_scan(&p, Preparation::Stationary, &taus, &exact).unwrap();
    let b = interferometer::error_scan(&p, Preparation::Stationary, &taus, &analytic).unwrap();
    for o in Observable::ALL {
        for (x, y) in a.trace(o).iter().zip(b.trace(o)) {
            assert!((x.value / y.value - 1.0).abs() < 0.05, "{}: {} vs {}", o.as_str(), x.value, y.value);
        }
    }
}
