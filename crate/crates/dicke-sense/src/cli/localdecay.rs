//! `localdecay`: metastable transients with unmonitored local decay, and the
//! check of the sector ladder against the full `2^N` register.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::commands::QfiRow;
use super::settings::{key, Key, Settings};
use super::{schema, Context, PointArgs, Report};
use crate::dicke::{DensityMatrix, ModelParams, SpinOp};
use crate::dynamics::{self, Propagator};
use crate::error::{Error, Result};
use crate::harness::svg::LinePlot;
use crate::harness::sweep::{DtPolicy, T1Policy};
use crate::linalg::{self, c64, CMat};
use crate::metrology::{self, QfiConfig};
use crate::model::{Model, Preparation};
use crate::permsym::{self, CollectiveObservables, DickeLadderState};
use crate::signal;
use crate::timebin::BinSource;

pub const KEYS: &[Key] = &[
    key("mode", "transient", "transient or oracle"),
    key("n", "20", "particle number (oracle: list, at most 8)"),
    key("omega_ratio", "2", "drive over critical drive"),
    key("gamma_loc_ratio", "0, 0.05, 0.1, 0.2", "local over collective decay rate (list)"),
    key("t_max", "4", "Gamma times the end of the magnetization trace"),
    key("points", "801", "samples of the magnetization trace"),
    key("t1", "sy_max, near1.5, near3", "first-bin times: Gamma*t1, sy_maxK, or nearX = <S_y> maximum nearest Gamma*t = X"),
    key("t1_reference", "0.1", "local decay ratio whose <S_y> trace fixes t1"),
    key("dt", "auto", "Gamma*dt or auto"),
    key("source", "analytic", "bin states: analytic or exact"),
    key("dg_rel", "1e-3", "finite-difference step over omega_c"),
    key("tau_max", "4", "largest Gamma*tau of the lag grid"),
    key("per_period", "30", "lag samples per mean-field period"),
    key("early_window", "0, 2", "Gamma*t window where the lossy trace should follow the lossless one"),
    key("late_window", "2, 3.5", "Gamma*t window of the departure"),
    key("times", "0.5, 1, 2", "oracle: Gamma*t evaluation times"),
    key("taus", "0, 0.4, 1.2", "oracle: Gamma*tau lags"),
    key("seed", "1", "oracle: seed of the random initial states"),
    key("tolerance", "1e-8", "oracle: largest accepted deviation"),
    key("name", "localdecay", "output file prefix"),
];

pub fn run(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("localdecay", KEYS, args)?;
    match s.str("mode")? {
        "transient" => transient(ctx, &s),
        "oracle" => oracle(ctx, &s),
        m => Err(Error::Parse(format!("[localdecay] mode: expected transient or oracle, got '{m}'"))),
    }
}

#[derive(Serialize)]
struct MagnetizationRow {
    gamma_loc_ratio: f64,
    t: f64,
    sx: f64,
    sy: f64,
    sz: f64,
}

/// Collective magnetizations per particle from the ground state.
fn magnetization(p: &ModelParams, t_max: f64, points: usize) -> Result<Vec<[f64; 4]>> {
    let m = Model::new(p)?;
    let prop = Propagator::new(&m.l);
    let h = t_max / (points - 1) as f64 / p.gamma_coll;
    let n = p.n as f64;
    let mut x = m.ground();
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        if k > 0 {
            x = prop.apply(&x, h, true);
        }
        let e = |op| m.l.space.expect(op, &x).re / n;
        out.push([k as f64 * h * p.gamma_coll, e(SpinOp::X), e(SpinOp::Y), e(SpinOp::Z)]);
    }
    Ok(out)
}

fn window(s: &Settings, k: &str) -> Result<(f64, f64)> {
    match s.f64_list(k)?[..] {
        [a, b] if a <= b => Ok((a, b)),
        _ => Err(Error::Parse(format!("[localdecay] {k}: expected two increasing values"))),
    }
}

#[derive(Clone, Copy, Debug)]
enum T1Choice {
    Policy(T1Policy),
    Near(f64),
}

fn parse_t1(v: &str) -> Result<T1Choice> {
    match v.strip_prefix("near") {
        Some(x) => crate::harness::sweep::parse_f64(x).map(T1Choice::Near),
        None => v.parse().map(T1Choice::Policy),
    }
}

#[derive(Serialize)]
struct Deviation {
    gamma_loc_ratio: f64,
    early_max: f64,
    late_max: f64,
}

#[derive(Serialize, Clone)]
struct Peak {
    gamma_loc_ratio: f64,
    t1_label: String,
    t1: f64,
    peak_per_time: Option<f64>,
    tau_star: Option<f64>,
    message: String,
}

fn transient(ctx: &Context, s: &Settings) -> Result<Report> {
    let name = s.str("name")?.to_string();
    let n = s.usize("n")?;
    let w = s.f64("omega_ratio")?;
    let gammas = s.f64_list("gamma_loc_ratio")?;
    let t_max = s.f64("t_max")?;
    let points = s.usize("points")?;
    if points < 2 || !(t_max > 0.0) {
        return Err(Error::InvalidParam("need t_max > 0 and at least two points".into()));
    }
    let early = window(s, "early_window")?;
    let late = window(s, "late_window")?;
    let t1s: Vec<T1Choice> = s.strings("t1")?.iter().map(|v| parse_t1(v)).collect::<Result<_>>()?;
    let reference = s.f64("t1_reference")?;

    let mut all: Vec<f64> = gammas.clone();
    for g in [0.0, reference] {
        if !all.contains(&g) {
            all.push(g);
        }
    }
    let traces = ctx.par_map(&all, |&g| magnetization(&ModelParams::from_ratios(n, w, g)?, t_max, points))?;
    let traces: Vec<Vec<[f64; 4]>> = traces.into_iter().collect::<Result<_>>()?;
    let trace_of = |g: f64| &traces[all.iter().position(|&x| x == g).unwrap()];

    let mut rep = Report::default();
    let mut mag = Vec::new();
    for &g in &gammas {
        for r in trace_of(g) {
            mag.push(MagnetizationRow { gamma_loc_ratio: g, t: r[0], sx: r[1], sy: r[2], sz: r[3] });
        }
    }
    rep.csv(ctx.path(&format!("{name}_magnetization.csv")), &format!("{} n={n} omega_ratio={w} start=ground", schema("magnetization")), &mag)?;

    let base = trace_of(0.0);
    let deviations: Vec<Deviation> = gammas
        .iter()
        .filter(|&&g| g != 0.0)
        .map(|&g| {
            let dev = |(lo, hi): (f64, f64)| {
                trace_of(g)
                    .iter()
                    .zip(base)
                    .filter(|(a, _)| a[0] >= lo && a[0] <= hi)
                    .map(|(a, b)| (a[2] - b[2]).abs())
                    .fold(0.0, f64::max)
            };
            Deviation { gamma_loc_ratio: g, early_max: dev(early), late_max: dev(late) }
        })
        .collect();

    // first-bin times from the reference trace
    let p_ref = ModelParams::from_ratios(n, w, reference)?;
    let ts: Vec<f64> = trace_of(reference).iter().map(|r| r[0]).collect();
    let sy: Vec<f64> = trace_of(reference).iter().map(|r| r[2]).collect();
    let maxima: Vec<f64> = signal::local_maxima(&ts, &sy).into_iter().map(|m| m.0).collect();
    let mut resolved = Vec::new();
    for c in &t1s {
        let (label, t1) = match *c {
            T1Choice::Near(x) => {
                let t = maxima
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
                    .ok_or_else(|| Error::Numerical("no <S_y> maximum in the trace".into()))?;
                (format!("near{x}"), t)
            }
            T1Choice::Policy(pol) => match pol.resolve(&p_ref)? {
                Preparation::FromGround { t1 } => (pol.label(), t1 * p_ref.gamma_coll),
                Preparation::Stationary => return Err(Error::InvalidParam("transient t1 cannot be stationary".into())),
            },
        };
        resolved.push((label, t1));
    }

    let dt: DtPolicy = s.get("dt")?;
    let source: BinSource = s.get("source")?;
    let dg_rel = s.f64("dg_rel")?;
    let tau_max = s.f64("tau_max")?;
    let per_period = s.usize("per_period")?;
    let jobs: Vec<(f64, String, f64)> =
        gammas.iter().flat_map(|&g| resolved.iter().map(move |(l, t)| (g, l.clone(), *t))).collect();
    let results = ctx.par_map(&jobs, |(g, _, t1)| -> Result<(Vec<QfiRow>, metrology::QfiScan)> {
        let p = ModelParams::from_ratios(n, w, *g)?;
        let cfg = QfiConfig { dt: dt.resolve(&p), dg_rel, source, kraus_mode: Default::default() };
        let taus = metrology::lag_grid(&p, tau_max / p.gamma_coll, per_period);
        let prep = Preparation::FromGround { t1: t1 / p.gamma_coll };
        let scan = metrology::qfi_vs_tau(&p, prep, &taus, &cfg)?;
        let rows = scan
            .results
            .iter()
            .map(|r| QfiRow {
                n,
                omega_ratio: w,
                gamma_loc_ratio: *g,
                t1_policy: String::new(),
                t1: Some(*t1),
                tau: Some(r.tau * p.gamma_coll),
                dt: cfg.dt * p.gamma_coll,
                qfi_per_time: Some(r.per_time),
                dg: Some(r.dg),
                convergence: Some(r.convergence),
                status: "ok".into(),
                message: String::new(),
            })
            .collect();
        Ok((rows, scan))
    })?;
    let mut rows = Vec::new();
    let mut peaks = Vec::new();
    let mut plot = LinePlot::new(&format!("two-bin QFI, N={n}"), "Gamma tau", "F / Gamma^-1");
    for ((g, label, t1), r) in jobs.iter().zip(results) {
        let mut peak = Peak { gamma_loc_ratio: *g, t1_label: label.clone(), t1: *t1, peak_per_time: None, tau_star: None, message: String::new() };
        match r {
            Ok((rs, scan)) => {
                let xs: Vec<f64> = rs.iter().map(|r| r.tau.unwrap()).collect();
                let ys: Vec<f64> = rs.iter().map(|r| r.qfi_per_time.unwrap()).collect();
                plot.add_line(&format!("g={g} Gt1={t1:.2}"), &xs, &ys, *g == 0.0);
                peak.peak_per_time = Some(scan.peak_per_time);
                peak.tau_star = Some(scan.tau_star * ModelParams::from_ratios(n, w, *g)?.gamma_coll);
                rows.extend(rs.into_iter().map(|mut r| {
                    r.t1_policy = label.clone();
                    r
                }));
            }
            Err(e) => {
                rep.failures += 1;
                peak.message = e.to_string();
                rows.push(QfiRow {
                    n,
                    omega_ratio: w,
                    gamma_loc_ratio: *g,
                    t1_policy: label.clone(),
                    t1: Some(*t1),
                    dt: f64::NAN,
                    status: "error".into(),
                    message: e.to_string(),
                    ..Default::default()
                });
            }
        }
        peaks.push(peak);
    }

    // orderings of the peaks: along t1 at the reference rate, along the rate
    // at the first t1
    let along_t1: Vec<f64> = peaks.iter().filter(|p| p.gamma_loc_ratio == reference).filter_map(|p| p.peak_per_time).collect();
    let mut along_g: Vec<(f64, f64)> = peaks
        .iter()
        .filter(|p| p.t1_label == resolved[0].0)
        .filter_map(|p| p.peak_per_time.map(|v| (p.gamma_loc_ratio, v)))
        .collect();
    along_g.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);

    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        n: usize,
        omega_ratio: f64,
        early_window: (f64, f64),
        late_window: (f64, f64),
        deviations: &'a [Deviation],
        t1_reference: f64,
        t1: Vec<(String, f64)>,
        peaks: &'a [Peak],
        peaks_decrease_with_t1: bool,
        peaks_decrease_with_gamma: bool,
    }
    rep.csv(ctx.path(&format!("{name}_qfi.csv")), &schema("qfi"), &rows)?;
    rep.json(
        ctx,
        ctx.path(&format!("{name}.json")),
        &Summary {
            name: &name,
            n,
            omega_ratio: w,
            early_window: early,
            late_window: late,
            deviations: &deviations,
            t1_reference: reference,
            t1: resolved.clone(),
            peaks: &peaks,
            peaks_decrease_with_t1: decreasing(&along_t1),
            peaks_decrease_with_gamma: decreasing(&along_g.iter().map(|x| x.1).collect::<Vec<_>>()),
        },
    )?;
    let mut mp = LinePlot::new(&format!("<S_y>/N, N={n}"), "Gamma t", "<S_y>/N");
    for &g in &gammas {
        let tr = trace_of(g);
        mp.add_line(&format!("g={g}"), &tr.iter().map(|r| r[0]).collect::<Vec<_>>(), &tr.iter().map(|r| r[2]).collect::<Vec<_>>(), g == 0.0);
    }
    rep.svg(ctx, ctx.path(&format!("{name}_magnetization.svg")), &mp)?;
    rep.svg(ctx, ctx.path(&format!("{name}_qfi.svg")), &plot)?;
    Ok(rep)
}

/// Random full-rank state of the maximal sector.
fn random_state(dim: usize, rng: &mut StdRng) -> Result<DensityMatrix> {
    let g = CMat::from_fn(dim, dim, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let r = &g * g.adjoint();
    let tr = linalg::trace(&r);
    DensityMatrix::new(CMat::from_fn(dim, dim, |i, j| r[(i, j)] / tr))
}

#[derive(Serialize)]
struct OracleRow {
    n: usize,
    gamma_loc_ratio: f64,
    t: f64,
    quantity: String,
    ladder_re: f64,
    ladder_im: f64,
    register_re: f64,
    register_im: f64,
    abs_diff: f64,
}

fn oracle(ctx: &Context, s: &Settings) -> Result<Report> {
    let name = s.str("name")?.to_string();
    let ns = s.usize_list("n")?;
    if let Some(&n) = ns.iter().find(|&&n| n > 8) {
        return Err(Error::InvalidParam(format!("the register oracle is limited to N <= 8, got {n}")));
    }
    let w = s.f64("omega_ratio")?;
    let gammas = s.f64_list("gamma_loc_ratio")?;
    let times = s.f64_list("times")?;
    let taus = s.f64_list("taus")?;
    let tol = s.f64("tolerance")?;
    let mut rng = StdRng::seed_from_u64(s.usize("seed")? as u64);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &n in &ns {
        for &g in &gammas {
            let p = ModelParams::from_ratios(n, w, g)?;
            let l = permsym::build_permsym_liouvillian(&p)?;
            let rho0 = random_state(n + 1, &mut rng)?;
            let ts: Vec<f64> = taus.iter().map(|t| t / p.gamma_coll).collect();
            for &t in &times {
                let s0 = DickeLadderState::from_maximal(l.space.clone(), &rho0)?;
                let st = permsym::evolve_permsym(&l, &s0, t / p.gamma_coll)?;
                let tr = dynamics::regression_trace(&l, &st.data, &ts, 0.0, true)?;
                let a = CollectiveObservables::of(&l.space, &st.data);
                let b = permsym::brute_force_oracle(&p, &rho0, t / p.gamma_coll, &ts)?;
                let mut push = |q: String, x: c64, y: c64| {
                    let d = (x - y).norm();
                    worst = worst.max(d);
                    rows.push(OracleRow {
                        n,
                        gamma_loc_ratio: g,
                        t,
                        quantity: q,
                        ladder_re: x.re,
                        ladder_im: x.im,
                        register_re: y.re,
                        register_im: y.im,
                        abs_diff: d,
                    });
                };
                let r = |v: f64| c64::new(v, 0.0);
                let o = &b.observables;
                push("sx".into(), r(a.sx), r(o.sx));
                push("sy".into(), r(a.sy), r(o.sy));
                push("sz".into(), r(a.sz), r(o.sz));
                push("spm".into(), r(a.spm), r(o.spm));
                push("sm".into(), a.sm, o.sm);
                for (k, tau) in taus.iter().enumerate() {
                    push(format!("c_pm(tau={tau})"), tr.c_pm[k], b.correlation[k]);
                }
            }
        }
    }
    let mut rep = Report::default();
    if !(worst < tol) {
        rep.failures += 1;
        eprintln!("ladder and register differ by {worst:.3e} > {tol:e}");
    }
    rep.csv(ctx.path(&format!("{name}_oracle.csv")), &format!("{} omega_ratio={w}", schema("oracle")), &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        max_deviation: f64,
        tolerance: f64,
        pass: bool,
    }
    rep.json(ctx, ctx.path(&format!("{name}_oracle.json")), &Summary { name: &name, max_deviation: worst, tolerance: tol, pass: worst < tol })?;
    Ok(rep)
}
