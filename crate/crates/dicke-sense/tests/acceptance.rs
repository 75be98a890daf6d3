//! Acceptance experiments. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 3 5` runs a subset.

use std::path::PathBuf;
use std::time::Instant;

use dicke_sense::dicke::{build_liouvillian, DensityMatrix, ModelParams};
use dicke_sense::dynamics::{self, CorrelationKind};
use dicke_sense::harness::output::sweep_csv;
use dicke_sense::harness::sweep::{SweepOutcome, SweepRow};
use dicke_sense::harness::{fit_scaling, run_sweep, SweepSpec};
use dicke_sense::interferometer::{self, ErrorConfig, ErrorSource, Observable};
use dicke_sense::linalg::{self, c64, CMat};
use dicke_sense::metrology::{self, QfiConfig};
use dicke_sense::model::{self, Model, Preparation};
use dicke_sense::permsym::{self, CollectiveObservables, DickeLadderState, OracleResult};
use dicke_sense::timebin::{self, BinSource, KrausMode};
use dicke_sense::{cache, signal};

type Outcome = Result<String, String>;

fn replication(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../replications").join(name)
}

/// Runs a replication sweep; also returns its fit restriction.
fn sweep(name: &str) -> Result<(SweepOutcome, usize), String> {
    let spec = SweepSpec::from_ini_file(&replication(name)).map_err(|e| e.to_string())?;
    let out = run_sweep(&spec).map_err(|e| e.to_string())?;
    if let Some(r) = out.rows.iter().find(|r| !r.is_ok()) {
        return Err(format!("point {} failed: {}", r.index, r.message));
    }
    Ok((out, spec.fit_restrict))
}

fn rows_where<'a>(out: &'a SweepOutcome, f: impl Fn(&SweepRow) -> bool) -> Vec<&'a SweepRow> {
    out.rows.iter().filter(|r| f(r)).collect()
}

fn fit_rows(rows: &[&SweepRow], restrict: usize) -> Result<f64, String> {
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.value.unwrap_or(f64::NAN)).collect();
    fit_scaling(&xs, &ys, restrict).map(|f| f.exponent).map_err(|e| e.to_string())
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1() -> Outcome {
    let (out, _) = sweep("c01_overdamped_plateau.ini")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &out.rows {
        let v = r.value.unwrap();
        ok &= (v - 4.0).abs() / 4.0 < 0.10;
        parts.push(format!("N={} F/t={v:.4}", r.n));
    }
    check(ok, parts.join(", "))
}

fn c2() -> Outcome {
    let (out, k) = sweep("c02_one_bin_scaling.ini")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (ratio, target, tol) in [(1.0, 0.93, 0.10), (0.5, 0.0, 0.07), (2.0, -0.12, 0.10)] {
        let a = fit_rows(&rows_where(&out, |r| r.omega_ratio == ratio), k)?;
        ok &= (a - target).abs() <= tol;
        parts.push(format!("w/wc={ratio}: alpha={a:.3} (target {target}±{tol})"));
    }
    check(ok, parts.join(", "))
}

fn c3() -> Outcome {
    let (out, k) = sweep("c03_two_bin_scaling.ini")?;
    let all = rows_where(&out, |_| true);
    let a = fit_rows(&all, k)?;
    let a_all = fit_rows(&all, 0)?;
    let taus: Vec<String> = out.rows.iter().map(|r| format!("{:.3}", r.tau_star.unwrap())).collect();
    check(
        (1.85..=2.15).contains(&a),
        format!("alpha={a:.3} in [1.85, 2.15] (largest {k} N; all N {a_all:.3}); tau*={}", taus.join("/")),
    )
}

/// Two-bin short-time QFI over `taus` and the one-bin value, both per unit time.
fn qfi_pair(p: &ModelParams, taus: &[f64], dt: f64, dg_rel: f64) -> Result<(Vec<f64>, f64), String> {
    let cfg = QfiConfig::new(dt, BinSource::ShortTimeAnalytic).with_dg_rel(dg_rel);
    let scan = metrology::qfi_vs_tau(p, Preparation::Stationary, taus, &cfg).map_err(err)?;
    let one = metrology::qfi_one_bin(p, Preparation::Stationary, &cfg).map_err(err)?;
    Ok((scan.per_time(), one.per_time))
}

fn c4() -> Outcome {
    let n = 50;
    let dt = 1e-4 / (n * n) as f64;
    let p2 = ModelParams::from_ratios(n, 2.0, 0.0).map_err(err)?;
    let big_omega = dicke_sense::mean_field_frequency(&p2).map_err(err)?;
    let taus = metrology::lag_grid(&p2, 3.0, 80);
    let (f2, _) = qfi_pair(&p2, &taus, dt, 1e-3)?;
    let w = signal::oscillation_frequency(&taus, &f2).ok_or("no oscillation in the two-bin QFI")?;
    let freq_ok = (w / (2.0 * big_omega) - 1.0).abs() < 0.05;

    let p1 = ModelParams::from_ratios(n, 1.0, 0.0).map_err(err)?;
    let (f, one) = qfi_pair(&p1, &[20.0], dt, 1e-3)?;
    let fac = (f[0] - 2.0 * one).abs() / one;

    // The adjacent-bin deficit is first order in the bin length, below the
    // truncation error of the short-time states, so it is taken from the
    // discrete bins.
    let cfg = QfiConfig::new(2.5e-5, BinSource::ExactDiscrete).with_dg_rel(1e-3);
    let adj = metrology::qfi_vs_tau(&p1, Preparation::Stationary, &[0.0], &cfg).map_err(err)?.per_time()[0];
    let single = metrology::qfi_one_bin(&p1, Preparation::Stationary, &cfg).map_err(err)?.per_time;
    let sub_ok = adj < 2.0 * single;
    check(
        freq_ok && sub_ok && fac < 0.02,
        format!(
            "QFI oscillation {w:.3} vs 2*Omega {:.3}; adjacent bins {adj:.4} < 2*single {:.4}; |F(20)-2F1|/F1={fac:.4}",
            2.0 * big_omega,
            2.0 * single
        ),
    )
}

fn c5() -> Outcome {
    let n = 50;
    let p = ModelParams::from_ratios(n, 2.0, 0.0).map_err(err)?;
    let dt = 1e-4 / (n * n) as f64;
    let taus = metrology::lag_grid(&p, 6.0, 40);
    let (f2, _) = qfi_pair(&p, &taus, dt, 1e-3)?;
    let crb = 1.0 / (dt * f2.iter().cloned().fold(0.0, f64::max));
    let cfg = ErrorConfig { dg_rel: 1e-3, ..ErrorConfig::new(dt, ErrorSource::ShortTimeAnalytic) };
    let scan = interferometer::error_scan(&p, Preparation::Stationary, &taus, &cfg).map_err(err)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for o in Observable::ALL {
        let best = interferometer::optimum_of(scan.trace(o), o).map_err(err)?;
        let ratio = best.best.value / crb;
        // bound from the QFI at the observable's own best lag
        let k = taus.iter().position(|&t| t == best.tau_star).unwrap_or(0);
        let local = best.best.value * dt * f2[k];
        ok &= ratio <= 5.0 && ratio >= 1.0 - 1e-6;
        parts.push(format!("{}: {ratio:.2} (vs bound at own tau {local:.2}) at tau={:.3}", o.as_str(), best.tau_star));
    }
    check(ok, format!("error/CRB {}", parts.join(", ")))
}

fn mz_exponents(out: &SweepOutcome, restrict: usize) -> Result<[f64; 3], String> {
    let mut a = [0.0; 3];
    for o in Observable::ALL {
        a[o as usize] = fit_rows(&rows_where(out, |r| r.observable == o.as_str()), restrict)?;
    }
    Ok(a)
}

fn c6() -> Outcome {
    let (out, k) = sweep("c06_mz_scaling.ini")?;
    let a = mz_exponents(&out, k)?;
    let in_band = a.iter().all(|x| (-2.05..=-1.80).contains(x));
    let mut nd_smallest = true;
    for r in rows_where(&out, |r| r.observable == "Nd") {
        for q in rows_where(&out, |q| q.n == r.n && q.observable != "Nd") {
            nd_smallest &= r.value.unwrap() < q.value.unwrap();
        }
    }
    check(
        in_band && nd_smallest,
        format!("alpha (nd, n4, n5) = ({:.3}, {:.3}, {:.3}); nd smallest at every N: {nd_smallest}", a[0], a[1], a[2]),
    )
}

fn c7() -> Outcome {
    let (out, _) = sweep("c07_convergence.ini")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for obs in ["one_bin", "two_bin"] {
        let mut rows = rows_where(&out, |r| r.observable == obs);
        rows.sort_by(|a, b| b.dt.total_cmp(&a.dt));
        let v: Vec<f64> = rows.iter().map(|r| r.value.unwrap()).collect();
        let mono = v.windows(2).all(|w| w[1] < w[0]);
        ok &= mono && *v.last().unwrap() < 0.05;
        parts.push(format!("{obs}: {}", v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" > ")));
    }
    check(ok, parts.join("; "))
}

fn qfi_peak(p: &ModelParams, prep: Preparation, taus: &[f64]) -> Result<f64, String> {
    let cfg = QfiConfig::new(1e-4 / (p.n * p.n) as f64, BinSource::ShortTimeAnalytic).with_dg_rel(1e-3);
    Ok(metrology::qfi_vs_tau(p, prep, taus, &cfg).map_err(err)?.peak_per_time)
}

fn c8() -> Outcome {
    let n = 20;
    let with = Model::new(&ModelParams::from_ratios(n, 2.0, 0.1).map_err(err)?).map_err(err)?;
    let without = Model::new(&ModelParams::from_ratios(n, 2.0, 0.0).map_err(err)?).map_err(err)?;
    let (ts, a) = model::sy_trajectory(&with, 4.0, 801).map_err(err)?;
    let (_, b) = model::sy_trajectory(&without, 4.0, 801).map_err(err)?;
    let dev = |lo: f64, hi: f64| {
        ts.iter()
            .zip(a.iter().zip(&b))
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, (x, y))| (x - y).abs() / n as f64)
            .fold(0.0, f64::max)
    };
    let early = dev(0.0, 2.0);
    let late = dev(2.0, 3.5);
    let transient_ok = early < 0.05 && late > 2.0 * early;

    // QFI maxima at <S_y> maxima spread over the transient: the first one and
    // those nearest Gt = 1.5 and Gt = 3, where the bins approach the lossy
    // stationary state
    let maxima: Vec<f64> = signal::local_maxima(&ts, &a).into_iter().map(|m| m.0).collect();
    let nearest = |t: f64| maxima.iter().copied().min_by(|x, y| (x - t).abs().total_cmp(&(y - t).abs()));
    let peaks: Vec<f64> = [maxima.first().copied(), nearest(1.5), nearest(3.0)].into_iter().flatten().collect();
    let p = with.params;
    let taus = metrology::lag_grid(&p, 4.0, 30);
    let mut by_t1 = Vec::new();
    for &t1 in &peaks {
        by_t1.push(qfi_peak(&p, Preparation::FromGround { t1 }, &taus)?);
    }
    let t1_ok = by_t1.len() == 3 && by_t1.windows(2).all(|w| w[1] < w[0]);
    let mut by_gamma = Vec::new();
    for g in [0.0, 0.05, 0.1, 0.2] {
        by_gamma.push(qfi_peak(&p.with_gamma_loc(g), Preparation::FromGround { t1: peaks[0] }, &taus)?);
    }
    let g_ok = by_gamma.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" > ");
    check(
        transient_ok && t1_ok && g_ok,
        format!(
            "max|dSy|/N on [0,2]={early:.4}, on [2,3.5]={late:.4}; QFI max at Gt1={:?}: {}; vs gamma 0/.05/.1/.2: {}",
            peaks.iter().map(|t| (t * 100.0).round() / 100.0).collect::<Vec<_>>(),
            fmt(&by_t1),
            fmt(&by_gamma)
        ),
    )
}

fn c9() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (file, target) in [("c09a_pulsed_first_max.ini", [-2.04, -1.92, -2.04]), ("c09b_pulsed_late.ini", [-1.60, -1.60, -1.58])] {
        let (out, r) = sweep(file)?;
        let a = mz_exponents(&out, r)?;
        for k in 0..3 {
            ok &= (a[k] - target[k]).abs() <= 0.15;
        }
        parts.push(format!(
            "{}: ({:.3}, {:.3}, {:.3}) vs ({}, {}, {})",
            out.rows[0].t1_policy, a[0], a[1], a[2], target[0], target[1], target[2]
        ));
    }
    check(ok, parts.join("; "))
}

fn random_state(dim: usize, seed: u64) -> DensityMatrix {
    // small LCG keeps the acceptance target free of extra dependencies
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let g = CMat::from_fn(dim, dim, |_, _| c64::new(next(), next()));
    let r = &g * g.adjoint();
    let tr = linalg::trace(&r);
    DensityMatrix::new(CMat::from_fn(dim, dim, |i, j| r[(i, j)] / tr)).unwrap()
}

fn c10() -> Outcome {
    let taus = [0.0, 0.4, 1.2];
    let mut worst = 0.0f64;
    for n in [3usize, 4] {
        for g in [0.0, 0.1, 0.5] {
            let p = ModelParams::from_ratios(n, 1.3, g).map_err(err)?;
            let l = permsym::build_permsym_liouvillian(&p).map_err(err)?;
            let rho0 = random_state(n + 1, (10 * n) as u64 + (g * 10.0) as u64);
            for t in [0.5, 1.0, 2.0] {
                let s0 = DickeLadderState::from_maximal(l.space.clone(), &rho0).map_err(err)?;
                let s = permsym::evolve_permsym(&l, &s0, t).map_err(err)?;
                let tr = dynamics::regression_trace(&l, &s.data, &taus, 0.0, true).map_err(err)?;
                let a = OracleResult { observables: CollectiveObservables::of(&l.space, &s.data), correlation: tr.c_pm };
                let b = permsym::brute_force_oracle(&p, &rho0, t, &taus).map_err(err)?;
                worst = worst.max(a.observables.max_abs_diff(&b.observables));
                for (x, y) in a.correlation.iter().zip(&b.correlation) {
                    worst = worst.max((x - y).norm());
                }
            }
        }
    }
    check(worst < 1e-8, format!("max deviation from the 2^N register {worst:.2e}"))
}

fn c11() -> Outcome {
    let n = 50;
    let p = ModelParams::from_ratios(n, 2.0, 0.0).map_err(err)?;
    let l = build_liouvillian(&p).map_err(err)?;
    let rates = cache::slow_rates(&l).map_err(err)?;
    let (g1, g2) = (rates.gamma_1.ok_or("no real slow mode")?, rates.gamma_2.ok_or("no oscillatory mode")?);
    let x = cache::steady_state(&l).map_err(err)?;
    let a = dynamics::AnsatzParams::new(&l, &x, g1, g2).map_err(err)?;
    let taus: Vec<f64> = (0..=300).map(|k| k as f64 * 0.01).collect();
    let exact = dynamics::two_time_correlation(&l, &x, 0.0, &taus, CorrelationKind::PlusMinus).map_err(err)?;
    let num: f64 = taus.iter().zip(&exact.values).map(|(t, e)| (dynamics::ansatz_correlation(&a, *t) - e).norm_sqr()).sum();
    let den: f64 = exact.values.iter().map(|e| e.norm_sqr()).sum();
    let rms = (num / den).sqrt();

    let ns = [10usize, 20, 40, 50];
    let mut inc = Vec::new();
    for m in ns {
        let q = ModelParams::from_ratios(m, 2.0, 0.0).map_err(err)?;
        inc.push(dynamics::incoherent_intensity(&build_liouvillian(&q).map_err(err)?).map_err(err)?);
    }
    let slope = fit_scaling(&ns.map(|m| m as f64), &inc, 0).map_err(err)?.exponent;
    check(
        rms < 0.2 && (1.7..=2.3).contains(&slope),
        format!("ansatz relative RMS {rms:.3} (G1={g1:.3}, G2={g2:.3}); I_inc slope {slope:.3}"),
    )
}

fn c12() -> Outcome {
    let mut parts = Vec::new();
    // states produced by propagation, Kraus steps and bin reductions
    let mut worst_state = 0.0f64;
    let mut worst_kraus = 0.0f64;
    let mut qfi_ok = true;
    let mut mono_ok = true;
    let mut fid_ok = true;
    for (k, (n, ratio)) in [(3usize, 0.7), (5, 1.0), (8, 2.0), (12, 1.4)].into_iter().enumerate() {
        let p = ModelParams::from_ratios(n, ratio, 0.0).map_err(err)?;
        let l = build_liouvillian(&p).map_err(err)?;
        let rho0 = random_state(n + 1, 100 + k as u64);
        let rho = dynamics::evolve(&l, &rho0, 0.7).map_err(err)?;
        worst_state = worst_state.max(state_defect(rho.data()));
        let dt = 1e-3 / n as f64;
        let kp = timebin::kraus_pair(&p, dt, KrausMode::ExactUnitary).map_err(err)?;
        worst_kraus = worst_kraus.max(kp.completeness_error());
        let stepped = timebin::unmonitored_steps(rho.data(), &kp, 50);
        worst_state = worst_state.max(state_defect(&stepped));
        let two = timebin::two_bin_exact_scan(&kp, &stepped, &[0, 25], None).map_err(err)?;
        for s in &two {
            worst_state = worst_state.max(state_defect(&s.data));
            worst_state = worst_state.max(state_defect(&s.marginal(0)));
        }
        // fidelity axioms on distinct produced states
        let (a, b) = (two[0].data.clone(), two[1].data.clone());
        let fab = metrology::fidelity(&a, &b).map_err(err)?;
        let fba = metrology::fidelity(&b, &a).map_err(err)?;
        let faa = metrology::fidelity(&a, &a).map_err(err)?;
        fid_ok &= (fab - fba).abs() < 1e-8 && (0.0..=1.0).contains(&fab) && (faa - 1.0).abs() < 1e-8;
        // QFI non-negativity and monotonicity under tracing out one bin
        // coarse bins keep the information well above round-off
        let (dt, dg) = (0.05 / n as f64, 1e-2 * p.omega_c());
        let fam = |w: f64| -> dicke_sense::Result<timebin::BinReducedState> {
            let q = p.with_omega(w);
            let kq = timebin::kraus_pair(&q, dt, KrausMode::ExactUnitary)?;
            let r = timebin::unmonitored_steps(rho0.data(), &kq, 200);
            Ok(timebin::two_bin_exact_scan(&kq, &r, &[10], None)?.remove(0))
        };
        let joint = metrology::qfi_bins(&fam, p.omega, dg).map_err(err)?;
        let marg = metrology::qfi_bins(
            |w| {
                let mut s = fam(w)?;
                s.data = s.marginal(0);
                s.n_bins = 1;
                Ok(s)
            },
            p.omega,
            dg,
        )
        .map_err(err)?;
        qfi_ok &= joint.value >= 0.0 && marg.value >= 0.0;
        mono_ok &= marg.value <= joint.value * (1.0 + 1e-6) + 1e-14;
    }
    parts.push(format!("state defect {worst_state:.1e}"));
    parts.push(format!("Kraus completeness {worst_kraus:.1e}"));
    parts.push(format!("fidelity axioms {fid_ok}"));
    parts.push(format!("QFI >= 0 {qfi_ok}, partial-trace monotone {mono_ok}"));

    let mut spec = SweepSpec::from_ini_file(&replication("c01_overdamped_plateau.ini")).map_err(err)?;
    spec.n = vec![4, 6, 8, 10];
    spec.omega_ratio = vec![0.5, 1.5];
    spec.workers = 1;
    let a = sweep_csv(&run_sweep(&spec).map_err(err)?.rows).map_err(err)?;
    spec.workers = 8;
    let b = sweep_csv(&run_sweep(&spec).map_err(err)?.rows).map_err(err)?;
    parts.push(format!("sweep CSV identical for 1 and 8 workers: {}", a == b));
    check(
        worst_state < 1e-9 && worst_kraus < 1e-12 && fid_ok && qfi_ok && mono_ok && a == b,
        parts.join(", "),
    )
}

/// Largest violation of unit trace, Hermiticity and positivity.
fn state_defect(m: &CMat) -> f64 {
    let tr = (linalg::trace(m) - c64::new(1.0, 0.0)).norm();
    let herm = linalg::max_abs_diff(m, &m.adjoint().to_owned());
    let min = linalg::eigvalsh(&linalg::hermitian_part(m)).map(|v| v[0]).unwrap_or(f64::NEG_INFINITY);
    tr.max(herm).max((-min).max(0.0))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "overdamped one-bin plateau", c1),
        (2, "critical one-bin scaling", c2),
        (3, "two-bin Heisenberg scaling", c3),
        (4, "two-bin QFI lag structure", c4),
        (5, "counting measurement vs Cramer-Rao bound", c5),
        (6, "counting measurement scaling", c6),
        (7, "discretization convergence", c7),
        (8, "local-decay transient", c8),
        (9, "pulsed-scheme scaling", c9),
        (10, "ladder vs full-register oracle", c10),
        (11, "correlation ansatz and incoherent intensity", c11),
        (12, "property suites", c12),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::var_os(cache::CACHE_DIR_VAR).is_none() {
        std::env::set_var(cache::CACHE_DIR_VAR, concat!(env!("CARGO_TARGET_TMPDIR"), "/dicke-sense-cache"));
    }
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let r = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {id:>2} {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed.push(id.to_string());
                println!("FAIL {id:>2} {name} [{secs:.1}s]: {d}");
            }
        }
        ran += 1;
    }
    // the report is the product; a failed criterion is not a broken build
    println!("{} of {ran} criteria passed; failed: [{}]", ran - failed.len(), failed.join(", "));
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() && !failed.is_empty() {
        std::process::exit(1);
    }
}
