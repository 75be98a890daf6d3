//! Mach–Zehnder photon counting on two time-bin modes and the resulting
//! ω-estimation errors.
//!
//! The two signal bins `b1 = b_[n1]`, `b2 = b_[n2]` enter the interferometer
//! together with vacuum bins `c1`, `c2`. The output arms are
//!
//! ```text
//! a4 = ½(e^{iφ2} b2 − e^{iφ1} b1) + (i/2)(e^{iφ2} c2 + e^{iφ1} c1)
//! a5 = (i/2)(e^{iφ2} b2 + e^{iφ1} b1) − ½(e^{iφ2} c2 − e^{iφ1} c1)
//! ```
//!
//! with `Δφ = φ1 − φ2`.

use crate::dicke::{mean_field_frequency, ModelParams};
use crate::dynamics::RegressionTrace;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, I, ONE, ZERO};
use crate::model::{Model, Preparation};
use crate::signal;
use crate::timebin::{self, BinReducedState, BinSource, KrausMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MzConfig {
    pub delta_phi: f64,
}

/// 4×4 unitary taking `(b1, b2, c1, c2)` to `(a4, a5, a6, a7)`; the last
/// two rows complete the two physical output arms to a unitary.
pub fn output_modes(cfg: &MzConfig) -> CMat {
    let e1 = c64::from_polar(1.0, cfg.delta_phi);
    let e2 = ONE;
    let h = 0.5;
    let mut u = linalg::zeros(4, 4);
    let rows = [
        [-e1 * h, e2 * h, I * e1 * h, I * e2 * h],
        [I * e1 * h, I * e2 * h, e1 * h, -e2 * h],
    ];
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            u[(r, c)] = *v;
        }
    }
    // complete by Gram-Schmidt over the unit vectors
    let mut next = 2;
    for k in 0..4 {
        if next == 4 {
            break;
        }
        let mut v: Vec<c64> = (0..4).map(|c| if c == k { ONE } else { ZERO }).collect();
        for r in 0..next {
            let p: c64 = (0..4).map(|c| u[(r, c)].conj() * v[c]).sum();
            for c in 0..4 {
                v[c] -= p * u[(r, c)];
            }
        }
        let n = linalg::norm2(&v);
        if n > 1e-8 {
            for c in 0..4 {
                u[(next, c)] = v[c] / n;
            }
            next += 1;
        }
    }
    u
}

/// Counting moments of the two output arms and their difference.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CountingStats {
    pub mean_n4: f64,
    pub mean_n5: f64,
    pub mean_nd: f64,
    pub var_n4: f64,
    pub var_n5: f64,
    pub var_nd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Observable {
    Nd,
    N4,
    N5,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::Nd, Observable::N4, Observable::N5];

    pub fn as_str(&self) -> &'static str {
        match self {
            Observable::Nd => "Nd",
            Observable::N4 => "N4",
            Observable::N5 => "N5",
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Nd" | "nd" => Ok(Observable::Nd),
            "N4" | "n4" => Ok(Observable::N4),
            "N5" | "n5" => Ok(Observable::N5),
            _ => Err(Error::Parse(format!("unknown observable '{s}' (Nd, N4, N5)"))),
        }
    }
}

impl CountingStats {
    pub fn mean(&self, o: Observable) -> f64 {
        match o {
            Observable::Nd => self.mean_nd,
            Observable::N4 => self.mean_n4,
            Observable::N5 => self.mean_n5,
        }
    }

    pub fn var(&self, o: Observable) -> f64 {
        match o {
            Observable::Nd => self.var_nd,
            Observable::N4 => self.var_n4,
            Observable::N5 => self.var_n5,
        }
    }
}

fn bin_lowering() -> (CMat, CMat) {
    let mut s = linalg::zeros(2, 2);
    s[(0, 1)] = ONE;
    let id = linalg::identity(2);
    (linalg::kron(&s, &id), linalg::kron(&id, &s))
}

/// Counting statistics of a two-bin state. Vacuum inputs do not contribute
/// to normally ordered moments, so only the signal-bin coefficients enter.
pub fn counting_stats(mu2: &BinReducedState, cfg: &MzConfig) -> Result<CountingStats> {
    if mu2.n_bins != 2 || mu2.data.nrows() != 4 {
        return Err(Error::InvalidParam("counting statistics need a two-bin state".into()));
    }
    let u = output_modes(cfg);
    let (b1, b2) = bin_lowering();
    let arm = |r: usize| &linalg::scale(&b1, u[(r, 0)]) + &linalg::scale(&b2, u[(r, 1)]);
    let a4 = arm(0);
    let a5 = arm(1);
    let ex = |op: &CMat| linalg::trace_prod(op, &mu2.data).re;
    let n4 = a4.adjoint() * &a4;
    let n5 = a5.adjoint() * &a5;
    let m4 = ex(&n4);
    let m5 = ex(&n5);
    let aa4 = &a4 * &a4;
    let aa5 = &a5 * &a5;
    let s4 = ex(&(aa4.adjoint() * &aa4)) + m4;
    let s5 = ex(&(aa5.adjoint() * &aa5)) + m5;
    let a45 = &a4 * &a5;
    let cross = ex(&(a45.adjoint() * &a45));
    let md = m5 - m4;
    let var_nd = s4 + s5 - 2.0 * cross - md * md;
    Ok(CountingStats {
        mean_n4: m4,
        mean_n5: m5,
        mean_nd: md,
        var_n4: s4 - m4 * m4,
        var_n5: s5 - m5 * m5,
        var_nd,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ErrorSource {
    /// Variance and finite-difference derivative of the full two-bin state.
    Exact,
    /// Leading-order closed form in `ΓΔt`.
    ShortTimeAnalytic,
}

impl std::str::FromStr for ErrorSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ErrorSource::Exact),
            "analytic" | "short_time_analytic" => Ok(ErrorSource::ShortTimeAnalytic),
            _ => Err(Error::Parse(format!("unknown error source '{s}'"))),
        }
    }
}

/// Single-shot error `Var(A) / |∂_ω <A>|²`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EstimationError {
    pub observable: Observable,
    /// Infinite at an insensitive point.
    pub value: f64,
    pub tau: f64,
    pub t1: Option<f64>,
    pub dt: f64,
    pub source: ErrorSource,
    pub mean: f64,
    pub var: f64,
    pub derivative: f64,
    pub insensitive: bool,
}

impl EstimationError {
    /// `value * Γ dt`, independent of the bin duration at leading order.
    pub fn scaled(&self, gamma: f64) -> f64 {
        self.value * gamma * self.dt
    }
}

/// `Var / |d|²`, or an insensitive point when the derivative vanishes or the
/// variance is negative.
pub fn error_from(var: f64, derivative: f64) -> (f64, bool) {
    // a negative variance only arises from truncated short-time counts near
    // adjacent bins of a transient; no estimate is available there
    if derivative == 0.0 || !derivative.is_finite() || var < 0.0 {
        (f64::INFINITY, true)
    } else {
        (var / (derivative * derivative), false)
    }
}

/// Relative size below which a finite-difference change of the signal is
/// treated as round-off.
pub const ROUNDOFF_REL: f64 = 1e-10;

/// Like [`error_from`], but a derivative whose change over the step `dg` is
/// below round-off of `scale` also counts as insensitive.
pub fn error_from_step(var: f64, derivative: f64, dg: f64, scale: f64) -> (f64, bool) {
    if (derivative * dg).abs() <= ROUNDOFF_REL * scale.abs() {
        return (f64::INFINITY, true);
    }
    error_from(var, derivative)
}

/// Numerical settings of an error evaluation.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorConfig {
    pub dt: f64,
    /// Finite-difference step as a fraction of `omega_c`.
    pub dg_rel: f64,
    pub source: ErrorSource,
    /// Bin states used by the exact source.
    pub bins: BinSource,
    pub kraus_mode: KrausMode,
    pub mz: MzConfig,
}

impl ErrorConfig {
    pub fn new(dt: f64, source: ErrorSource) -> Self {
        ErrorConfig {
            dt,
            dg_rel: 1e-4,
            source,
            bins: BinSource::ShortTimeAnalytic,
            kraus_mode: KrausMode::ExactUnitary,
            mz: MzConfig::default(),
        }
    }
}

/// Error traces over a lag grid for all three observables.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ErrorScan {
    pub taus: Vec<f64>,
    /// Indexed like [`Observable::ALL`].
    pub errors: [Vec<EstimationError>; 3],
    pub stats: Vec<CountingStats>,
}

impl ErrorScan {
    pub fn trace(&self, o: Observable) -> &[EstimationError] {
        &self.errors[o as usize]
    }

    pub fn values(&self, o: Observable) -> Vec<f64> {
        self.trace(o).iter().map(|e| e.value).collect()
    }
}

fn analytic_signal(tr: &RegressionTrace, k: usize, o: Observable) -> f64 {
    let half = 0.5 * (tr.n_t1 + tr.n_later[k]);
    let c = tr.c_pm[k].re;
    match o {
        Observable::Nd => c,
        Observable::N4 => half - c,
        Observable::N5 => half + c,
    }
}

fn analytic_scan(params: &ModelParams, prep: Preparation, taus: &[f64], cfg: &ErrorConfig) -> Result<ErrorScan> {
    let dg = cfg.dg_rel * params.omega_c();
    let g = params.gamma_coll * cfg.dt;
    let tr0 = Model::new(params)?.regression(prep, taus, cfg.dt)?;
    let trp = Model::new(&params.with_omega(params.omega + dg))?.regression(prep, taus, cfg.dt)?;
    let trm = Model::new(&params.with_omega(params.omega - dg))?.regression(prep, taus, cfg.dt)?;
    let mut errors: [Vec<EstimationError>; 3] = Default::default();
    let mut stats = Vec::with_capacity(taus.len());
    for k in 0..taus.len() {
        let nsum = tr0.n_t1 + tr0.n_later[k];
        let c = tr0.c_pm[k].re;
        let m4 = 0.25 * g * (nsum - 2.0 * c);
        let m5 = 0.25 * g * (nsum + 2.0 * c);
        stats.push(CountingStats {
            mean_n4: m4,
            mean_n5: m5,
            mean_nd: m5 - m4,
            var_n4: m4,
            var_n5: m5,
            var_nd: m4 + m5,
        });
        for o in Observable::ALL {
            let d = (analytic_signal(&trp, k, o) - analytic_signal(&trm, k, o)) / (2.0 * dg);
            let num = match o {
                Observable::Nd => 0.5 * nsum / g,
                _ => 2.0 * analytic_signal(&tr0, k, o) / g,
            };
            let (value, insensitive) = error_from_step(num, d, dg, 0.5 * nsum);
            let scale = match o {
                Observable::Nd => g,
                _ => 0.5 * g,
            };
            errors[o as usize].push(EstimationError {
                observable: o,
                value,
                tau: taus[k],
                t1: prep.t1(),
                dt: cfg.dt,
                source: ErrorSource::ShortTimeAnalytic,
                mean: stats[k].mean(o),
                var: stats[k].var(o),
                derivative: d * scale,
                insensitive,
            });
        }
    }
    Ok(ErrorScan { taus: taus.to_vec(), errors, stats })
}

fn two_bin_states(params: &ModelParams, prep: Preparation, taus: &[f64], cfg: &ErrorConfig) -> Result<Vec<BinReducedState>> {
    match cfg.bins {
        BinSource::ShortTimeAnalytic => {
            let m = Model::new(params)?;
            let tr = m.regression(prep, taus, cfg.dt)?;
            (0..taus.len())
                .map(|k| {
                    let mut s = timebin::two_bin_from_trace(params.n, params.gamma_coll, cfg.dt, &tr, k, prep.t1())?;
                    s.data = linalg::project_psd(&s.data)?.0;
                    Ok(s)
                })
                .collect()
        }
        BinSource::ExactDiscrete => {
            let kp = timebin::kraus_pair(params, cfg.dt, cfg.kraus_mode)?;
            let rho = crate::metrology::discrete_prepared(params, &kp, prep)?;
            let gaps: Vec<u64> = taus.iter().map(|t| (t / cfg.dt).round() as u64).collect();
            timebin::two_bin_exact_scan(&kp, &rho, &gaps, prep.t1())
        }
    }
}

fn exact_scan(params: &ModelParams, prep: Preparation, taus: &[f64], cfg: &ErrorConfig) -> Result<ErrorScan> {
    let dg = cfg.dg_rel * params.omega_c();
    let s0 = two_bin_states(params, prep, taus, cfg)?;
    let sp = two_bin_states(&params.with_omega(params.omega + dg), prep, taus, cfg)?;
    let sm = two_bin_states(&params.with_omega(params.omega - dg), prep, taus, cfg)?;
    let mut errors: [Vec<EstimationError>; 3] = Default::default();
    let mut stats = Vec::with_capacity(taus.len());
    for k in 0..taus.len() {
        let c0 = counting_stats(&s0[k], &cfg.mz)?;
        let cp = counting_stats(&sp[k], &cfg.mz)?;
        let cm = counting_stats(&sm[k], &cfg.mz)?;
        for o in Observable::ALL {
            let d = (cp.mean(o) - cm.mean(o)) / (2.0 * dg);
            let (value, insensitive) = error_from_step(c0.var(o), d, dg, c0.mean_n4 + c0.mean_n5);
            errors[o as usize].push(EstimationError {
                observable: o,
                value,
                tau: taus[k],
                t1: prep.t1(),
                dt: cfg.dt,
                source: ErrorSource::Exact,
                mean: c0.mean(o),
                var: c0.var(o),
                derivative: d,
                insensitive,
            });
        }
        stats.push(c0);
    }
    Ok(ErrorScan { taus: taus.to_vec(), errors, stats })
}

/// Errors of all three observables over a lag grid.
pub fn error_scan(params: &ModelParams, prep: Preparation, taus: &[f64], cfg: &ErrorConfig) -> Result<ErrorScan> {
    if taus.is_empty() {
        return Err(Error::InvalidParam("empty lag grid".into()));
    }
    match cfg.source {
        ErrorSource::ShortTimeAnalytic => analytic_scan(params, prep, taus, cfg),
        ErrorSource::Exact => exact_scan(params, prep, taus, cfg),
    }
}

/// Error of one observable at a single lag.
pub fn estimation_error(
    params: &ModelParams,
    prep: Preparation,
    tau: f64,
    observable: Observable,
    cfg: &ErrorConfig,
) -> Result<EstimationError> {
    let s = error_scan(params, prep, &[tau], cfg)?;
    Ok(s.trace(observable)[0])
}

/// Minimum of an error trace.
#[derive(Clone, Debug, serde::Serialize)]
pub struct OptimalSensing {
    pub observable: Observable,
    pub tau_star: f64,
    pub best: EstimationError,
    /// Local minima `(tau, value)` of the trace.
    pub minima: Vec<(f64, f64)>,
    pub trace: Vec<EstimationError>,
}

/// Minimum over the grid. The grid must cover two mean-field periods in the
/// oscillatory regime.
pub fn optimal_sensing_scan(
    params: &ModelParams,
    prep: Preparation,
    taus: &[f64],
    observable: Observable,
    cfg: &ErrorConfig,
) -> Result<OptimalSensing> {
    if let Ok(w) = mean_field_frequency(params) {
        let span = taus.last().copied().unwrap_or(0.0) - taus.first().copied().unwrap_or(0.0);
        if span < 2.0 * 2.0 * std::f64::consts::PI / w {
            return Err(Error::InvalidParam("lag grid must cover at least two mean-field periods".into()));
        }
    }
    let scan = error_scan(params, prep, taus, cfg)?;
    optimum_of(scan.trace(observable), observable)
}

/// Minimum and local minima of a precomputed trace.
pub fn optimum_of(trace: &[EstimationError], observable: Observable) -> Result<OptimalSensing> {
    let mut best: Option<usize> = None;
    for (k, e) in trace.iter().enumerate() {
        if e.insensitive {
            continue;
        }
        if best.is_none_or(|b| e.value < trace[b].value) {
            best = Some(k);
        }
    }
    let b = best.ok_or_else(|| Error::Numerical("every lag on the grid is an insensitive point".into()))?;
    let xs: Vec<f64> = trace.iter().map(|e| e.tau).collect();
    let ys: Vec<f64> = trace.iter().map(|e| e.value.min(f64::MAX)).collect();
    Ok(OptimalSensing {
        observable,
        tau_star: trace[b].tau,
        best: trace[b],
        minima: signal::local_minima(&xs, &ys),
        trace: trace.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cr;

    #[test]
    fn mixing_matrix_is_unitary() {
        for phi in [0.0, 0.7, 2.0] {
            let u = output_modes(&MzConfig { delta_phi: phi });
            let p = &u * u.adjoint();
            assert!(linalg::max_abs_diff(&p, &linalg::identity(4)) < 1e-12);
        }
    }

    #[test]
    fn toy_error() {
        assert!((error_from(0.01, 0.1).0 - 1.0).abs() < 1e-12);
        assert!(error_from(0.01, 0.0).1);
    }

    fn state(data: CMat) -> BinReducedState {
        BinReducedState {
            n_bins: 2,
            data,
            dt: 1.0,
            t1: None,
            tau: 0.0,
            source: BinSource::ExactDiscrete,
            warnings: vec![],
        }
    }

    #[test]
    fn vacuum_gives_no_counts() {
        let mut v = linalg::zeros(4, 4);
        v[(0, 0)] = ONE;
        let s = counting_stats(&state(v), &MzConfig::default()).unwrap();
        assert_eq!(s.mean_n4, 0.0);
        assert_eq!(s.mean_n5, 0.0);
    }

    #[test]
    fn identical_bins_null_one_port() {
        // product of two identical weak superpositions a|0> + b|1>; qubit bins
        // leave a residual of order |b|^4 at the dark port
        let p1: f64 = 1e-6;
        let (a, b) = ((1.0 - p1).sqrt(), c64::new(0.0, p1.sqrt()));
        let one = [cr(a), b];
        let psi: Vec<c64> = (0..4).map(|k| one[k / 2] * one[k % 2]).collect();
        let rho = CMat::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        let s = counting_stats(&state(rho), &MzConfig::default()).unwrap();
        assert!(s.mean_n4 < 1e-6 * s.mean_n5);
        assert!((s.mean_n4 + s.mean_n5 - p1).abs() < 1e-15);
    }
}
