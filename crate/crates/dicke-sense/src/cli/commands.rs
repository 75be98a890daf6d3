use serde::Serialize;

use super::settings::{key, Key, Settings};
use super::{schema, Context, PointArgs, Report};
use crate::cache;
use crate::dicke::{build_collective_ops, mean_field_frequency, ModelParams};
use crate::dynamics::{self, AnsatzParams, CorrelationKind};
use crate::error::{Error, Result};
use crate::harness::fit::{fit_scaling, FitResult};
use crate::harness::svg::LinePlot;
use crate::harness::sweep::{run_sweep, DtPolicy, SweepSpec, T1Policy, Task, TauPolicy};
use crate::interferometer::{self, ErrorConfig, ErrorSource, MzConfig, Observable};
use crate::linalg::{self, CMat};
use crate::metrology::{self, QfiConfig};
use crate::model::{Model, Preparation};
use crate::permsym::CollectiveObservables;
use crate::signal;
use crate::timebin::{self, BinReducedState, BinSource, KrausMode};

const N: Key = key("n", "10", "particle numbers (list)");
const OMEGA: Key = key("omega_ratio", "1", "drive over critical drive (list)");
const GAMMA: Key = key("gamma_loc_ratio", "0", "local over collective decay rate (list)");
const T1: Key = key("t1", "ss", "preparation: ss, Gamma*t1 from ground, sy_max or sy_maxK (list)");
const DT: Key = key("dt", "auto", "Gamma*dt or auto = min(2.5e-5, 1e-3/N) (list)");
const SOURCE: Key = key("source", "analytic", "bin states: analytic or exact");
const DG: Key = key("dg_rel", "1e-3", "finite-difference step over omega_c");
const KRAUS: Key = key("kraus", "exact", "Kraus pair: exact or first_order");
const TAU_MAX: Key = key("tau_max", "6", "largest Gamma*tau of the lag grid");
const PER_PERIOD: Key = key("per_period", "40", "lag samples per mean-field period");
const TAU: Key = key("tau", "", "explicit Gamma*tau values (replace the grid)");
const FIT: Key = key("fit_restrict", "0", "fit only the largest N points (0 = all)");

/// One model point of a command grid.
#[derive(Clone, Debug)]
struct Point {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    t1: T1Policy,
    dt: DtPolicy,
}

impl Point {
    fn params(&self) -> Result<ModelParams> {
        ModelParams::from_ratios(self.n, self.omega_ratio, self.gamma_loc_ratio)
    }
}

/// Grid in sweep order: N varies fastest.
fn grid(s: &Settings, with_t1: bool) -> Result<Vec<Point>> {
    let ns = s.usize_list("n")?;
    let (t1s, dts) = if with_t1 {
        (s.list::<T1Policy>("t1")?, s.list::<DtPolicy>("dt")?)
    } else {
        (vec![T1Policy::Stationary], vec![DtPolicy::Auto])
    };
    let mut out = Vec::new();
    for &w in &s.f64_list("omega_ratio")? {
        for &g in &s.f64_list("gamma_loc_ratio")? {
            for &t1 in &t1s {
                for &dt in &dts {
                    for &n in &ns {
                        out.push(Point { n, omega_ratio: w, gamma_loc_ratio: g, t1, dt });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn tau_policy(s: &Settings) -> Result<TauPolicy> {
    if s.has("tau") {
        let mut v = s.f64_list("tau")?;
        v.sort_by(f64::total_cmp);
        Ok(TauPolicy::Values(v))
    } else {
        Ok(TauPolicy::Grid { max: s.f64("tau_max")?, per_period: s.usize("per_period")? })
    }
}

/// Fits of `value ∝ N^α` for every group of points that differ only in N.
#[derive(Serialize)]
struct GroupFit {
    group: String,
    ns: Vec<usize>,
    values: Vec<f64>,
    fit: Option<FitResult>,
    message: String,
}

fn fit_by_group(items: &[(String, usize, f64)], restrict: usize) -> Vec<GroupFit> {
    let mut groups: Vec<String> = Vec::new();
    for (g, _, _) in items {
        if !groups.contains(g) {
            groups.push(g.clone());
        }
    }
    let mut out = Vec::new();
    for g in groups {
        let mut pts: Vec<(usize, f64)> = items.iter().filter(|x| x.0 == g).map(|x| (x.1, x.2)).collect();
        pts.sort_by_key(|p| p.0);
        pts.dedup_by_key(|p| p.0);
        if pts.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (fit, message) = match fit_scaling(&xs, &ys, restrict) {
            Ok(f) => (Some(f), String::new()),
            Err(e) => (None, e.to_string()),
        };
        out.push(GroupFit { group: g, ns: pts.iter().map(|p| p.0).collect(), values: ys, fit, message });
    }
    out
}

fn scaling_svg(title: &str, y_label: &str, fits: &[GroupFit]) -> LinePlot {
    let mut p = LinePlot::new(title, "N", y_label);
    p.log_x = true;
    p.log_y = true;
    for g in fits {
        let xs: Vec<f64> = g.ns.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = g.values.iter().map(|v| v.abs()).collect();
        p.add_points(&g.group, &xs, &ys);
        if let Some(f) = &g.fit {
            let fy: Vec<f64> = xs.iter().map(|&x| f.predict(x).abs()).collect();
            p.add_line(&format!("slope {:.3}", f.exponent), &xs, &fy, true);
        }
    }
    p
}

#[derive(Serialize)]
struct MatrixEntry {
    dim: usize,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

fn dense_entries(m: &CMat, all: bool) -> Vec<MatrixEntry> {
    let mut v = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            if all || z.re != 0.0 || z.im != 0.0 {
                v.push(MatrixEntry { dim: m.nrows(), row: r, col: c, re: z.re, im: z.im });
            }
        }
    }
    v.sort_by_key(|e| (e.row, e.col));
    v
}

pub const OPS_KEYS: &[Key] = &[
    N,
    OMEGA,
    GAMMA,
    key("include", "spin", "spin and/or liouvillian"),
    key("name", "ops", "output file prefix"),
];

#[derive(Serialize)]
struct OpsRow {
    n: usize,
    omega_ratio: Option<f64>,
    gamma_loc_ratio: Option<f64>,
    operator: String,
    dim: usize,
    nnz: usize,
    /// `max|[Sx,Sy] - i Sz|` for spins, `max|Tr L(.)|` for generators.
    check: f64,
}

pub fn ops(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("ops", OPS_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let include = s.strings("include")?;
    for i in &include {
        if i != "spin" && i != "liouvillian" {
            return Err(Error::Parse(format!("[ops] include: unknown item '{i}'")));
        }
    }
    let mut rep = Report::default();
    let mut rows = Vec::new();
    if include.iter().any(|i| i == "spin") {
        for n in s.usize_list("n")? {
            let o = build_collective_ops(n)?;
            let comm = linalg::commutator(&o.s_x, &o.s_y);
            let iz = linalg::scale(&o.s_z, linalg::I);
            let check = linalg::max_abs_diff(&comm, &iz);
            for (label, m) in [("sx", &o.s_x), ("sy", &o.s_y), ("sz", &o.s_z), ("sp", &o.s_plus), ("sm", &o.s_minus)] {
                let e = dense_entries(m, false);
                rows.push(OpsRow { n, omega_ratio: None, gamma_loc_ratio: None, operator: label.into(), dim: o.dim, nnz: e.len(), check });
                rep.csv(ctx.path(&format!("{name}_n{n}_{label}.csv")), &format!("{} n={n} op={label}", schema("matrix")), &e)?;
            }
        }
    }
    if include.iter().any(|i| i == "liouvillian") {
        for pt in grid(&s, false)? {
            let p = pt.params()?;
            let m = Model::new(&p)?;
            let check = m.l.trace_row().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let e: Vec<MatrixEntry> = m
                .l
                .mat
                .triplets()
                .into_iter()
                .map(|(r, c, z)| MatrixEntry { dim: m.l.len(), row: r, col: c, re: z.re, im: z.im })
                .collect();
            let tag = format!("n{}_w{}_g{}", pt.n, pt.omega_ratio, pt.gamma_loc_ratio);
            rows.push(OpsRow {
                n: pt.n,
                omega_ratio: Some(pt.omega_ratio),
                gamma_loc_ratio: Some(pt.gamma_loc_ratio),
                operator: "liouvillian".into(),
                dim: m.l.len(),
                nnz: e.len(),
                check,
            });
            let meta = format!("{} n={} omega={} gamma={} gamma_loc={} sectors={}", schema("matrix"), p.n, p.omega, p.gamma_coll, p.gamma_loc, m.l.space.len());
            rep.csv(ctx.path(&format!("{name}_{tag}_liouvillian.csv")), &meta, &e)?;
        }
    }
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("ops"), &rows)?;
    rep.json(ctx, ctx.path(&format!("{name}.json")), &rows)?;
    Ok(rep)
}

pub const STEADY_KEYS: &[Key] = &[N, OMEGA, GAMMA, key("states", "true", "also write the state matrices"), key("name", "steady", "output file prefix")];

#[derive(Serialize, Default)]
struct SteadyRow {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    sx: Option<f64>,
    sy: Option<f64>,
    sz: Option<f64>,
    spm: Option<f64>,
    sm_re: Option<f64>,
    sm_im: Option<f64>,
    i_inc: Option<f64>,
    min_eig: Option<f64>,
    maximal_sector_weight: Option<f64>,
    status: String,
    message: String,
}

#[derive(Serialize)]
struct LadderEntry {
    j: f64,
    m: f64,
    m_prime: f64,
    re: f64,
    im: f64,
}

pub fn steady(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("steady", STEADY_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let states = s.bool("states")?;
    let pts = grid(&s, false)?;
    let results = ctx.par_map(&pts, |pt| -> Result<(SteadyRow, Option<(Model, Vec<linalg::c64>)>)> {
        let p = pt.params()?;
        let m = Model::new(&p)?;
        let x = m.prepare(Preparation::Stationary)?;
        let o = CollectiveObservables::of(&m.l.space, &x);
        let row = SteadyRow {
            n: pt.n,
            omega_ratio: pt.omega_ratio,
            gamma_loc_ratio: pt.gamma_loc_ratio,
            sx: Some(o.sx),
            sy: Some(o.sy),
            sz: Some(o.sz),
            spm: Some(o.spm),
            sm_re: Some(o.sm.re),
            sm_im: Some(o.sm.im),
            i_inc: Some(dynamics::incoherent_intensity_of(&m.l, &x)),
            min_eig: Some(m.l.space.min_eigenvalue(&x)?),
            maximal_sector_weight: Some(m.l.space.sector_traces(&x)[0]),
            status: "ok".into(),
            message: String::new(),
        };
        Ok((row, Some((m, x))))
    })?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    for (pt, r) in pts.iter().zip(results) {
        match r {
            Ok((row, state)) => {
                if let (true, Some((m, x))) = (states, state) {
                    let tag = format!("n{}_w{}_g{}", pt.n, pt.omega_ratio, pt.gamma_loc_ratio);
                    let path = ctx.path(&format!("{name}_{tag}_state.csv"));
                    if m.is_collective() {
                        let rho = linalg::unvec(&x, m.l.dim());
                        rep.csv(path, &format!("{} n={}", schema("matrix"), pt.n), &dense_entries(&rho, true))?;
                    } else {
                        let st = crate::permsym::DickeLadderState { space: m.l.space.clone(), data: x };
                        let e: Vec<LadderEntry> = st
                            .csv_rows()
                            .into_iter()
                            .map(|(j, m, mp, re, im)| LadderEntry { j, m, m_prime: mp, re, im })
                            .collect();
                        rep.csv(path, &format!("{} n={}", schema("ladder"), pt.n), &e)?;
                    }
                }
                rows.push(row);
            }
            Err(e) => {
                rep.failures += 1;
                rows.push(SteadyRow {
                    n: pt.n,
                    omega_ratio: pt.omega_ratio,
                    gamma_loc_ratio: pt.gamma_loc_ratio,
                    status: "error".into(),
                    message: e.to_string(),
                    ..Default::default()
                });
            }
        }
    }
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("steady"), &rows)?;
    rep.json(ctx, ctx.path(&format!("{name}.json")), &rows)?;
    Ok(rep)
}

pub const SPECTRUM_KEYS: &[Key] = &[
    key("n", "20", "particle numbers (list)"),
    key("omega_ratio", "2", "drive over critical drive (list)"),
    GAMMA,
    key("eigenvalues", "20", "number of slowest eigenvalues to write, or all"),
    key("tau_max", "3", "largest Gamma*tau of the correlation trace"),
    key("tau_step", "0.01", "Gamma times the lag step"),
    FIT,
    key("name", "spectrum", "output file prefix"),
];

#[derive(Serialize, Default)]
struct SpectrumRow {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    gap: Option<f64>,
    gamma_1: Option<f64>,
    gamma_2: Option<f64>,
    relax_time: Option<f64>,
    mean_field_frequency: Option<f64>,
    i_inc: Option<f64>,
    ansatz_rms: Option<f64>,
    status: String,
    message: String,
}

#[derive(Serialize)]
struct EigenRow {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    index: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct CorrelationRow {
    t1: &'static str,
    tau: f64,
    re: f64,
    im: f64,
    ansatz_re: Option<f64>,
    ansatz_im: Option<f64>,
}

struct SpectrumPoint {
    row: SpectrumRow,
    eigen: Vec<EigenRow>,
    corr: Vec<CorrelationRow>,
    meta: String,
}

fn spectrum_point(pt: &Point, count: Option<usize>, taus: &[f64]) -> Result<SpectrumPoint> {
    let p = pt.params()?;
    let m = Model::new(&p)?;
    let (rates, eigen) = match count {
        Some(0) => (cache::slow_rates(&m.l)?, Vec::new()),
        _ => {
            let ev = dynamics::liouvillian_eigenvalues(&m.l)?;
            let rates = dynamics::slow_rates(&ev, p.gamma_coll);
            let k = count.unwrap_or(ev.len()).min(ev.len());
            let rows = ev[..k]
                .iter()
                .enumerate()
                .map(|(i, z)| EigenRow { n: pt.n, omega_ratio: pt.omega_ratio, gamma_loc_ratio: pt.gamma_loc_ratio, index: i, re: z.re, im: z.im })
                .collect();
            (rates, rows)
        }
    };
    let x = cache::steady_state(&m.l)?;
    let c = dynamics::two_time_correlation(&m.l, &x, 0.0, taus, CorrelationKind::PlusMinus)?;
    let ansatz = match (rates.gamma_1, rates.gamma_2) {
        (Some(g1), Some(g2)) => AnsatzParams::new(&m.l, &x, g1, g2).ok(),
        _ => None,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    let corr: Vec<CorrelationRow> = taus
        .iter()
        .zip(&c.values)
        .map(|(&t, v)| {
            let a = ansatz.as_ref().map(|a| dynamics::ansatz_correlation(a, t));
            if let Some(a) = a {
                num += (a - v).norm_sqr();
                den += v.norm_sqr();
            }
            CorrelationRow { t1: "ss", tau: t, re: v.re, im: v.im, ansatz_re: a.map(|z| z.re), ansatz_im: a.map(|z| z.im) }
        })
        .collect();
    let row = SpectrumRow {
        n: pt.n,
        omega_ratio: pt.omega_ratio,
        gamma_loc_ratio: pt.gamma_loc_ratio,
        gap: Some(rates.gap),
        gamma_1: rates.gamma_1,
        gamma_2: rates.gamma_2,
        relax_time: Some(rates.relax_time),
        mean_field_frequency: mean_field_frequency(&p).ok(),
        i_inc: Some(dynamics::incoherent_intensity_of(&m.l, &x)),
        ansatz_rms: ansatz.map(|_| (num / den).sqrt()),
        status: "ok".into(),
        message: String::new(),
    };
    let meta = format!(
        "{} n={} omega={} gamma={} gamma_loc={} kind=plus_minus",
        schema("correlation"),
        p.n,
        p.omega,
        p.gamma_coll,
        p.gamma_loc
    );
    Ok(SpectrumPoint { row, eigen, corr, meta })
}

pub fn spectrum(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("spectrum", SPECTRUM_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let count = match s.str("eigenvalues")? {
        "all" => None,
        _ => Some(s.usize("eigenvalues")?),
    };
    let step = s.f64("tau_step")?;
    let tau_max = s.f64("tau_max")?;
    if !(step > 0.0) || !(tau_max >= 0.0) {
        return Err(Error::InvalidParam("tau_step must be positive and tau_max non-negative".into()));
    }
    let kmax = (tau_max / step).round() as usize;
    let pts = grid(&s, false)?;
    let results = ctx.par_map(&pts, |pt| {
        // lags in units of 1/Gamma
        let taus: Vec<f64> = (0..=kmax).map(|k| k as f64 * step).collect();
        spectrum_point(pt, count, &taus)
    })?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    let mut eigen = Vec::new();
    let mut for_fit = Vec::new();
    for (pt, r) in pts.iter().zip(results) {
        let tag = format!("n{}_w{}_g{}", pt.n, pt.omega_ratio, pt.gamma_loc_ratio);
        match r {
            Ok(sp) => {
                rep.csv(ctx.path(&format!("{name}_{tag}_correlation.csv")), &sp.meta, &sp.corr)?;
                let mut plot = LinePlot::new(&format!("<S+(tau)S-> N={}", pt.n), "Gamma tau", "Re");
                let ts: Vec<f64> = sp.corr.iter().map(|c| c.tau).collect();
                plot.add_line("exact", &ts, &sp.corr.iter().map(|c| c.re).collect::<Vec<_>>(), false);
                if sp.row.ansatz_rms.is_some() {
                    plot.add_line("ansatz", &ts, &sp.corr.iter().map(|c| c.ansatz_re.unwrap_or(f64::NAN)).collect::<Vec<_>>(), true);
                }
                rep.svg(ctx, ctx.path(&format!("{name}_{tag}_correlation.svg")), &plot)?;
                if let Some(i) = sp.row.i_inc {
                    for_fit.push((format!("w{}_g{}", pt.omega_ratio, pt.gamma_loc_ratio), pt.n, i));
                }
                eigen.extend(sp.eigen);
                rows.push(sp.row);
            }
            Err(e) => {
                rep.failures += 1;
                rows.push(SpectrumRow {
                    n: pt.n,
                    omega_ratio: pt.omega_ratio,
                    gamma_loc_ratio: pt.gamma_loc_ratio,
                    status: "error".into(),
                    message: e.to_string(),
                    ..Default::default()
                });
            }
        }
    }
    let fits = fit_by_group(&for_fit, s.usize("fit_restrict")?);
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("spectrum"), &rows)?;
    if !eigen.is_empty() {
        rep.csv(ctx.path(&format!("{name}_eigenvalues.csv")), &schema("eigenvalues"), &eigen)?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        points: &'a [SpectrumRow],
        i_inc_fits: &'a [GroupFit],
    }
    rep.json(ctx, ctx.path(&format!("{name}.json")), &Summary { name: &name, points: &rows, i_inc_fits: &fits })?;
    if !fits.is_empty() {
        rep.svg(ctx, ctx.path(&format!("{name}_i_inc.svg")), &scaling_svg("incoherent intensity", "I_inc", &fits))?;
    }
    Ok(rep)
}

pub const BINS_KEYS: &[Key] = &[
    OMEGA,
    N,
    GAMMA,
    T1,
    key("dt", "1e-4", "Gamma*dt or auto (list)"),
    SOURCE,
    KRAUS,
    key("bins", "2", "1 or 2 retained bins"),
    key("tau", "0, 0.5, 1", "Gamma*tau between the bins (two bins)"),
    key("name", "bins", "output file prefix"),
];

#[derive(Serialize, Default)]
struct BinsRow {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    t1_policy: String,
    t1: Option<f64>,
    dt: f64,
    source: String,
    n_bins: usize,
    tau: Option<f64>,
    gap_steps: Option<u64>,
    trace: Option<f64>,
    min_eig: Option<f64>,
    occupation_1: Option<f64>,
    occupation_2: Option<f64>,
    cross_re: Option<f64>,
    cross_im: Option<f64>,
    kraus_completeness: Option<f64>,
    status: String,
    message: String,
}

#[derive(Serialize)]
struct BinEntry {
    point: usize,
    n_bins: usize,
    tau: f64,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

fn bin_states(pt: &Point, s_bins: usize, taus: &[f64], source: BinSource, mode: KrausMode) -> Result<(Vec<Result<BinReducedState>>, Option<f64>, f64, Option<f64>)> {
    let p = pt.params()?;
    let prep = pt.t1.resolve(&p)?;
    let dt = pt.dt.resolve(&p);
    let taus: Vec<f64> = taus.iter().map(|t| t / p.gamma_coll).collect();
    match source {
        BinSource::ExactDiscrete => {
            let kp = timebin::kraus_pair(&p, dt, mode)?;
            let rho = metrology::discrete_prepared(&p, &kp, prep)?;
            let states = if s_bins == 1 {
                vec![Ok(timebin::one_bin_exact(&kp, &rho, prep.t1()))]
            } else {
                let gaps: Vec<u64> = taus.iter().map(|t| (t / dt).round() as u64).collect();
                timebin::two_bin_exact_scan(&kp, &rho, &gaps, prep.t1())?.into_iter().map(Ok).collect()
            };
            Ok((states, prep.t1(), dt, Some(kp.completeness_error())))
        }
        BinSource::ShortTimeAnalytic => {
            let m = Model::new(&p)?;
            let states = if s_bins == 1 {
                let x = m.prepare(prep)?;
                vec![timebin::one_bin_analytic(&m.l, &x, dt, prep.t1())]
            } else {
                let tr = m.regression(prep, &taus, dt)?;
                (0..taus.len()).map(|k| timebin::two_bin_from_trace(p.n, p.gamma_coll, dt, &tr, k, prep.t1())).collect()
            };
            Ok((states, prep.t1(), dt, None))
        }
    }
}

pub fn bins(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("bins", BINS_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let source: BinSource = s.get("source")?;
    let mode: KrausMode = s.get("kraus")?;
    let nb = s.usize("bins")?;
    if nb != 1 && nb != 2 {
        return Err(Error::InvalidParam("bins must be 1 or 2".into()));
    }
    let mut taus = if nb == 2 { s.f64_list("tau")? } else { vec![0.0] };
    taus.sort_by(f64::total_cmp);
    let pts = grid(&s, true)?;
    let results = ctx.par_map(&pts, |pt| bin_states(pt, nb, &taus, source, mode))?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (i, (pt, r)) in pts.iter().zip(results).enumerate() {
        let base = BinsRow {
            n: pt.n,
            omega_ratio: pt.omega_ratio,
            gamma_loc_ratio: pt.gamma_loc_ratio,
            t1_policy: pt.t1.label(),
            source: source.as_str().into(),
            n_bins: nb,
            status: "ok".into(),
            ..Default::default()
        };
        match r {
            Ok((states, t1, dt, kc)) => {
                for (k, st) in states.into_iter().enumerate() {
                    let tau = (nb == 2).then(|| taus[k]);
                    let gap_steps = (nb == 2).then(|| (taus[k] / (dt * pt.params().map(|p| p.gamma_coll).unwrap_or(1.0))).round() as u64);
                    let mut row = BinsRow { t1, dt, tau, gap_steps, kraus_completeness: kc, ..clone_bins(&base) };
                    match st.and_then(|st| Ok((st.min_eigenvalue()?, st))) {
                        Ok((min_eig, st)) => {
                            row.trace = Some(st.trace().re);
                            row.min_eig = Some(min_eig);
                            row.occupation_1 = Some(st.occupation(0));
                            if nb == 2 {
                                row.occupation_2 = Some(st.occupation(1));
                                let c = st.cross_coherence();
                                row.cross_re = Some(c.re);
                                row.cross_im = Some(c.im);
                            }
                            for e in dense_entries(&st.data, true) {
                                entries.push(BinEntry { point: i, n_bins: nb, tau: tau.unwrap_or(0.0), row: e.row, col: e.col, re: e.re, im: e.im });
                            }
                        }
                        Err(e) => {
                            rep.failures += 1;
                            row.status = "error".into();
                            row.message = e.to_string();
                        }
                    }
                    rows.push(row);
                }
            }
            Err(e) => {
                rep.failures += 1;
                rows.push(BinsRow { dt: f64::NAN, status: "error".into(), message: e.to_string(), ..base });
            }
        }
    }
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("bins"), &rows)?;
    rep.csv(ctx.path(&format!("{name}_states.csv")), &format!("{} basis=|b1 b2> row-major in occupation", schema("bin-states")), &entries)?;
    rep.json(ctx, ctx.path(&format!("{name}.json")), &rows)?;
    Ok(rep)
}

fn clone_bins(b: &BinsRow) -> BinsRow {
    BinsRow {
        n: b.n,
        omega_ratio: b.omega_ratio,
        gamma_loc_ratio: b.gamma_loc_ratio,
        t1_policy: b.t1_policy.clone(),
        source: b.source.clone(),
        n_bins: b.n_bins,
        status: b.status.clone(),
        ..Default::default()
    }
}

/// Row layout shared by `qfi1`, `qfi2` and `localdecay`.
#[derive(Serialize, serde::Deserialize, Clone, Debug, Default, PartialEq)]
pub struct QfiRow {
    pub n: usize,
    pub omega_ratio: f64,
    pub gamma_loc_ratio: f64,
    pub t1_policy: String,
    pub t1: Option<f64>,
    pub tau: Option<f64>,
    pub dt: f64,
    pub qfi_per_time: Option<f64>,
    pub dg: Option<f64>,
    pub convergence: Option<f64>,
    pub status: String,
    pub message: String,
}

pub const QFI1_KEYS: &[Key] = &[
    N,
    OMEGA,
    GAMMA,
    T1,
    DT,
    SOURCE,
    key("dg_rel", "1e-4", "finite-difference step over omega_c"),
    KRAUS,
    FIT,
    key("name", "qfi1", "output file prefix"),
];

pub fn qfi1(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("qfi1", QFI1_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let mut spec = SweepSpec::new(Task::Qfi1);
    spec.name = name.clone();
    spec.n = s.usize_list("n")?;
    spec.omega_ratio = s.f64_list("omega_ratio")?;
    spec.gamma_loc_ratio = s.f64_list("gamma_loc_ratio")?;
    spec.t1 = s.list("t1")?;
    spec.dt = s.list("dt")?;
    spec.source = s.get("source")?;
    spec.dg_rel = s.f64("dg_rel")?;
    spec.kraus_mode = s.get("kraus")?;
    spec.fit_restrict = s.usize("fit_restrict")?;
    spec.workers = ctx.workers;
    let out = run_sweep(&spec)?;
    let rows: Vec<QfiRow> = out
        .rows
        .iter()
        .map(|r| QfiRow {
            n: r.n,
            omega_ratio: r.omega_ratio,
            gamma_loc_ratio: r.gamma_loc_ratio,
            t1_policy: r.t1_policy.clone(),
            t1: r.t1,
            tau: None,
            dt: r.dt,
            qfi_per_time: r.value,
            dg: r.dg,
            convergence: r.convergence,
            status: r.status.clone(),
            message: r.message.clone(),
        })
        .collect();
    let mut rep = Report { failures: out.failures, ..Default::default() };
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("qfi"), &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        failures: usize,
        fits: &'a [crate::harness::sweep::GroupFit],
    }
    rep.json(ctx, ctx.path(&format!("{name}.json")), &Summary { name: &name, failures: out.failures, fits: &out.fits })?;
    if !out.fits.is_empty() {
        rep.svg(ctx, ctx.path(&format!("{name}.svg")), &crate::harness::output::scaling_plot(&out))?;
    }
    Ok(rep)
}

pub const QFI2_KEYS: &[Key] = &[
    N,
    key("omega_ratio", "2", "drive over critical drive (list)"),
    GAMMA,
    T1,
    DT,
    SOURCE,
    DG,
    KRAUS,
    TAU_MAX,
    PER_PERIOD,
    TAU,
    key("extra_tau", "", "Gamma*tau values appended to the grid"),
    key("one_bin", "false", "also compute the one-bin QFI"),
    key("adjacent_source", "", "recompute adjacent bins (tau = 0) with this source"),
    key("adjacent_dt", "2.5e-5", "Gamma*dt of the adjacent-bin recomputation"),
    FIT,
    key("name", "qfi2", "output file prefix"),
];

#[derive(Serialize, Clone, Debug)]
struct AdjacentCheck {
    source: String,
    dt: f64,
    two_bin: f64,
    twice_one_bin: f64,
    subadditive: bool,
}

#[derive(Serialize, Default, Clone, Debug)]
struct Qfi2Point {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    t1_policy: String,
    t1: Option<f64>,
    dt: f64,
    peak_per_time: Option<f64>,
    tau_star: Option<f64>,
    one_bin_per_time: Option<f64>,
    oscillation_frequency: Option<f64>,
    twice_mean_field_frequency: Option<f64>,
    adjacent_over_twice_one_bin: Option<f64>,
    tail_tau: Option<f64>,
    /// `|F(tau_max) - 2 F1| / F1`
    tail_deviation: Option<f64>,
    adjacent_check: Option<AdjacentCheck>,
    status: String,
    message: String,
}

struct Qfi2Opts {
    tau: TauPolicy,
    extra: Vec<f64>,
    cfg_source: BinSource,
    dg_rel: f64,
    kraus: KrausMode,
    one_bin: bool,
    adjacent: Option<(BinSource, f64)>,
}

fn qfi2_point(pt: &Point, o: &Qfi2Opts) -> Result<(Qfi2Point, Vec<QfiRow>)> {
    let p = pt.params()?;
    let prep = pt.t1.resolve(&p)?;
    let dt = pt.dt.resolve(&p);
    let cfg = QfiConfig { dt, dg_rel: o.dg_rel, source: o.cfg_source, kraus_mode: o.kraus };
    let grid_taus = o.tau.resolve(&p);
    let mut taus = grid_taus.clone();
    taus.extend(o.extra.iter().map(|t| t / p.gamma_coll));
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let scan = metrology::qfi_vs_tau(&p, prep, &taus, &cfg)?;
    let per_time = scan.per_time();
    let grid_vals: Vec<f64> = taus.iter().zip(&per_time).filter(|(t, _)| grid_taus.contains(t)).map(|(_, v)| *v).collect();
    let mut out = Qfi2Point {
        n: pt.n,
        omega_ratio: pt.omega_ratio,
        gamma_loc_ratio: pt.gamma_loc_ratio,
        t1_policy: pt.t1.label(),
        t1: prep.t1(),
        dt,
        peak_per_time: Some(scan.peak_per_time),
        tau_star: Some(scan.tau_star),
        oscillation_frequency: signal::oscillation_frequency(&grid_taus, &grid_vals),
        twice_mean_field_frequency: mean_field_frequency(&p).ok().map(|w| 2.0 * w),
        status: "ok".into(),
        ..Default::default()
    };
    if o.one_bin {
        let f1 = metrology::qfi_one_bin(&p, prep, &cfg)?.per_time;
        out.one_bin_per_time = Some(f1);
        if taus[0] == 0.0 {
            out.adjacent_over_twice_one_bin = Some(per_time[0] / (2.0 * f1));
        }
        let last = *per_time.last().unwrap();
        out.tail_tau = taus.last().copied();
        out.tail_deviation = Some((last - 2.0 * f1).abs() / f1);
    }
    if let Some((src, gdt)) = o.adjacent {
        let c2 = QfiConfig { dt: gdt / p.gamma_coll, dg_rel: o.dg_rel, source: src, kraus_mode: o.kraus };
        let two = metrology::qfi_vs_tau(&p, prep, &[0.0], &c2)?.per_time()[0];
        let one = metrology::qfi_one_bin(&p, prep, &c2)?.per_time;
        out.adjacent_check = Some(AdjacentCheck {
            source: src.as_str().into(),
            dt: c2.dt,
            two_bin: two,
            twice_one_bin: 2.0 * one,
            subadditive: two < 2.0 * one,
        });
    }
    let rows = scan
        .results
        .iter()
        .map(|r| QfiRow {
            n: pt.n,
            omega_ratio: pt.omega_ratio,
            gamma_loc_ratio: pt.gamma_loc_ratio,
            t1_policy: pt.t1.label(),
            t1: r.t1,
            tau: Some(r.tau),
            dt,
            qfi_per_time: Some(r.per_time),
            dg: Some(r.dg),
            convergence: Some(r.convergence),
            status: "ok".into(),
            message: String::new(),
        })
        .collect();
    Ok((out, rows))
}

fn point_group(pt: &Point, extra: &str) -> String {
    format!("w{}_g{}_t1{}_dt{}{extra}", pt.omega_ratio, pt.gamma_loc_ratio, pt.t1.label(), pt.dt.label())
}

pub fn qfi2(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("qfi2", QFI2_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let opts = Qfi2Opts {
        tau: tau_policy(&s)?,
        extra: if s.has("extra_tau") { s.f64_list("extra_tau")? } else { Vec::new() },
        cfg_source: s.get("source")?,
        dg_rel: s.f64("dg_rel")?,
        kraus: s.get("kraus")?,
        one_bin: s.bool("one_bin")?,
        adjacent: match s.opt::<BinSource>("adjacent_source")? {
            Some(src) => Some((src, s.f64("adjacent_dt")?)),
            None => None,
        },
    };
    let pts = grid(&s, true)?;
    let results = ctx.par_map(&pts, |pt| qfi2_point(pt, &opts))?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut for_fit = Vec::new();
    let mut plot = LinePlot::new("two-bin QFI per unit time", "Gamma tau", "F / Gamma^-1");
    for (pt, r) in pts.iter().zip(results) {
        match r {
            Ok((sum, rs)) => {
                let ts: Vec<f64> = rs.iter().map(|r| r.tau.unwrap_or(f64::NAN)).collect();
                let vs: Vec<f64> = rs.iter().map(|r| r.qfi_per_time.unwrap_or(f64::NAN)).collect();
                plot.add_line(&format!("N={} w/wc={}", pt.n, pt.omega_ratio), &ts, &vs, false);
                if let Some(f1) = sum.one_bin_per_time {
                    plot.add_line("2 x one bin", &[ts[0], *ts.last().unwrap()], &[2.0 * f1, 2.0 * f1], true);
                }
                if let Some(v) = sum.peak_per_time {
                    for_fit.push((point_group(pt, ""), pt.n, v));
                }
                rows.extend(rs);
                points.push(sum);
            }
            Err(e) => {
                rep.failures += 1;
                let msg = e.to_string();
                rows.push(QfiRow {
                    n: pt.n,
                    omega_ratio: pt.omega_ratio,
                    gamma_loc_ratio: pt.gamma_loc_ratio,
                    t1_policy: pt.t1.label(),
                    dt: f64::NAN,
                    status: "error".into(),
                    message: msg.clone(),
                    ..Default::default()
                });
                points.push(Qfi2Point {
                    n: pt.n,
                    omega_ratio: pt.omega_ratio,
                    gamma_loc_ratio: pt.gamma_loc_ratio,
                    t1_policy: pt.t1.label(),
                    dt: f64::NAN,
                    status: "error".into(),
                    message: msg,
                    ..Default::default()
                });
            }
        }
    }
    let fits = fit_by_group(&for_fit, s.usize("fit_restrict")?);
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("qfi"), &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        points: &'a [Qfi2Point],
        peak_fits: &'a [GroupFit],
    }
    rep.json(ctx, ctx.path(&format!("{name}.json")), &Summary { name: &name, points: &points, peak_fits: &fits })?;
    rep.svg(ctx, ctx.path(&format!("{name}.svg")), &plot)?;
    if !fits.is_empty() {
        rep.svg(ctx, ctx.path(&format!("{name}_scaling.svg")), &scaling_svg("peak two-bin QFI", "F / Gamma^-1", &fits))?;
    }
    Ok(rep)
}

pub const MZ_KEYS: &[Key] = &[
    key("n", "50", "particle numbers (list)"),
    key("omega_ratio", "2", "drive over critical drive (list)"),
    GAMMA,
    T1,
    DT,
    key("error_source", "analytic", "errors: analytic closed form or exact bin states"),
    SOURCE,
    DG,
    KRAUS,
    TAU_MAX,
    PER_PERIOD,
    TAU,
    key("observables", "nd, n4, n5", "counting observables"),
    key("crb", "true", "also compute the two-bin Cramer-Rao bound"),
    key("delta_phi", "0", "carrier phase difference of the arms"),
    FIT,
    key("name", "mz", "output file prefix"),
];

#[derive(Serialize, Default, Clone)]
struct MzRow {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    t1_policy: String,
    t1: Option<f64>,
    dt: f64,
    observable: String,
    tau: Option<f64>,
    mean: Option<f64>,
    var: Option<f64>,
    /// Single-shot error; empty at insensitive points.
    error: Option<f64>,
    /// `error * Gamma dt`
    error_scaled: Option<f64>,
    crb: Option<f64>,
    insensitive: bool,
    status: String,
    message: String,
}

#[derive(Serialize, Default, Clone)]
struct MzOptimum {
    n: usize,
    omega_ratio: f64,
    gamma_loc_ratio: f64,
    t1_policy: String,
    observable: String,
    tau_star: Option<f64>,
    error: Option<f64>,
    error_scaled: Option<f64>,
    /// Smallest bound over the lag grid.
    crb_min: Option<f64>,
    ratio_to_crb_min: Option<f64>,
    crb_at_tau_star: Option<f64>,
    ratio_at_tau_star: Option<f64>,
    /// Mean spacing of adjacent local minima of the error trace.
    minima_spacing: Option<f64>,
    status: String,
    message: String,
}

struct MzOpts {
    tau: TauPolicy,
    observables: Vec<Observable>,
    error_source: ErrorSource,
    source: BinSource,
    dg_rel: f64,
    kraus: KrausMode,
    crb: bool,
    mz: MzConfig,
}

fn mz_point(pt: &Point, o: &MzOpts) -> Result<(Vec<MzRow>, Vec<MzOptimum>)> {
    let p = pt.params()?;
    let prep = pt.t1.resolve(&p)?;
    let dt = pt.dt.resolve(&p);
    let taus = o.tau.resolve(&p);
    let cfg = ErrorConfig { dt, dg_rel: o.dg_rel, source: o.error_source, bins: o.source, kraus_mode: o.kraus, mz: o.mz };
    let scan = interferometer::error_scan(&p, prep, &taus, &cfg)?;
    let crb: Option<Vec<f64>> = if o.crb {
        let q = metrology::qfi_vs_tau(&p, prep, &taus, &QfiConfig { dt, dg_rel: o.dg_rel, source: o.source, kraus_mode: o.kraus })?;
        Some(q.results.iter().map(|r| if r.value > 0.0 { 1.0 / r.value } else { f64::INFINITY }).collect())
    } else {
        None
    };
    let crb_min = crb.as_ref().map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min));
    let mut rows = Vec::new();
    let mut opt = Vec::new();
    for &ob in &o.observables {
        let tr = scan.trace(ob);
        for (k, e) in tr.iter().enumerate() {
            rows.push(MzRow {
                n: pt.n,
                omega_ratio: pt.omega_ratio,
                gamma_loc_ratio: pt.gamma_loc_ratio,
                t1_policy: pt.t1.label(),
                t1: prep.t1(),
                dt,
                observable: ob.as_str().into(),
                tau: Some(e.tau),
                mean: Some(e.mean),
                var: Some(e.var),
                error: (!e.insensitive).then_some(e.value),
                error_scaled: (!e.insensitive).then(|| e.scaled(p.gamma_coll)),
                crb: crb.as_ref().map(|c| c[k]),
                insensitive: e.insensitive,
                status: "ok".into(),
                message: String::new(),
            });
        }
        let best = interferometer::optimum_of(tr, ob)?;
        let k = tr.iter().position(|e| e.tau == best.tau_star).unwrap_or(0);
        let spacing = (best.minima.len() >= 2)
            .then(|| (best.minima.last().unwrap().0 - best.minima[0].0) / (best.minima.len() - 1) as f64);
        opt.push(MzOptimum {
            n: pt.n,
            omega_ratio: pt.omega_ratio,
            gamma_loc_ratio: pt.gamma_loc_ratio,
            t1_policy: pt.t1.label(),
            observable: ob.as_str().into(),
            tau_star: Some(best.tau_star),
            error: Some(best.best.value),
            error_scaled: Some(best.best.scaled(p.gamma_coll)),
            crb_min,
            ratio_to_crb_min: crb_min.map(|c| best.best.value / c),
            crb_at_tau_star: crb.as_ref().map(|c| c[k]),
            ratio_at_tau_star: crb.as_ref().map(|c| best.best.value / c[k]),
            minima_spacing: spacing,
            status: "ok".into(),
            message: String::new(),
        });
    }
    Ok((rows, opt))
}

pub fn mz(ctx: &Context, args: &PointArgs) -> Result<Report> {
    let s = ctx.settings("mz", MZ_KEYS, args)?;
    let name = s.str("name")?.to_string();
    let opts = MzOpts {
        tau: tau_policy(&s)?,
        observables: s.list("observables")?,
        error_source: s.get("error_source")?,
        source: s.get("source")?,
        dg_rel: s.f64("dg_rel")?,
        kraus: s.get("kraus")?,
        crb: s.bool("crb")?,
        mz: MzConfig { delta_phi: s.f64("delta_phi")? },
    };
    let pts = grid(&s, true)?;
    let results = ctx.par_map(&pts, |pt| mz_point(pt, &opts))?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    let mut optima = Vec::new();
    let mut for_fit = Vec::new();
    for (i, (pt, r)) in pts.iter().zip(results).enumerate() {
        match r {
            Ok((rs, os)) => {
                let mut plot = LinePlot::new(&format!("estimation error N={} w/wc={}", pt.n, pt.omega_ratio), "Gamma tau", "error");
                plot.log_y = true;
                for ob in &opts.observables {
                    let sel: Vec<&MzRow> = rs.iter().filter(|r| r.observable == ob.as_str()).collect();
                    let ts: Vec<f64> = sel.iter().map(|r| r.tau.unwrap_or(f64::NAN)).collect();
                    plot.add_line(ob.as_str(), &ts, &sel.iter().map(|r| r.error.unwrap_or(f64::NAN)).collect::<Vec<_>>(), false);
                    if ob == &opts.observables[0] && opts.crb {
                        plot.add_line("CRB", &ts, &sel.iter().map(|r| r.crb.unwrap_or(f64::NAN)).collect::<Vec<_>>(), true);
                    }
                }
                rep.svg(ctx, ctx.path(&format!("{name}_{i}.svg")), &plot)?;
                for o in &os {
                    if let Some(v) = o.error_scaled {
                        for_fit.push((point_group(pt, &format!("_{}", o.observable)), pt.n, v));
                    }
                }
                rows.extend(rs);
                optima.extend(os);
            }
            Err(e) => {
                rep.failures += 1;
                rows.push(MzRow {
                    n: pt.n,
                    omega_ratio: pt.omega_ratio,
                    gamma_loc_ratio: pt.gamma_loc_ratio,
                    t1_policy: pt.t1.label(),
                    dt: f64::NAN,
                    status: "error".into(),
                    message: e.to_string(),
                    ..Default::default()
                });
            }
        }
    }
    let fits = fit_by_group(&for_fit, s.usize("fit_restrict")?);
    rep.csv(ctx.path(&format!("{name}.csv")), &schema("mz"), &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        optima: &'a [MzOptimum],
        error_fits: &'a [GroupFit],
    }
    rep.json(ctx, ctx.path(&format!("{name}.json")), &Summary { name: &name, optima: &optima, error_fits: &fits })?;
    if !fits.is_empty() {
        rep.svg(ctx, ctx.path(&format!("{name}_scaling.svg")), &scaling_svg("smallest error x Gamma dt", "error", &fits))?;
    }
    Ok(rep)
}
