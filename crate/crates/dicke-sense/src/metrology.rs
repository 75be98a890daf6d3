//! Fidelities, finite-difference quantum Fisher information of bin states,
//! lag scans and Cramér–Rao bounds.

use crate::dicke::ModelParams;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{Model, Preparation};
use crate::signal;
use crate::timebin::{self, BinReducedState, BinSource, KrausMode, KrausPair};

/// Inputs with eigenvalues below `-FIDELITY_PSD_TOL` are rejected.
pub const FIDELITY_PSD_TOL: f64 = 1e-8;
/// Halving the step may change the QFI by this much before it is flagged.
pub const CONVERGENCE_FLAG: f64 = 0.05;
/// Negative finite-difference QFI below this is an error.
pub const NEGATIVE_QFI_TOL: f64 = 1e-8;

/// Root fidelity `Tr sqrt(sqrt(a) b sqrt(a))`, without clamping.
pub fn fidelity_raw(a: &CMat, b: &CMat) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::Dimension { expected: a.nrows(), got: b.nrows() });
    }
    let sa = linalg::sqrt_psd(a, FIDELITY_PSD_TOL)?;
    let sb = linalg::sqrt_psd(b, FIDELITY_PSD_TOL)?;
    Ok(linalg::singular_values(&(&sa * &sb))?.iter().sum())
}

/// Root fidelity clamped to `[0, 1]`.
pub fn fidelity(a: &CMat, b: &CMat) -> Result<f64> {
    Ok(fidelity_raw(a, b)?.clamp(0.0, 1.0))
}

/// `8 (1 - F) / (2 h)^2`
pub fn qfi_from_fidelity(f: f64, h: f64) -> f64 {
    8.0 * (1.0 - f) / (4.0 * h * h)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct QfiResult {
    /// QFI at step `dg`.
    pub value: f64,
    /// `value / dt`
    pub per_time: f64,
    pub dg: f64,
    /// QFI at step `dg / 2`.
    pub value_half: f64,
    /// `|value_half - value| / value`
    pub convergence: f64,
    pub flagged: bool,
    pub dt: f64,
    pub t1: Option<f64>,
    pub tau: f64,
    /// Largest weight removed when projecting short-time states onto the
    /// PSD cone.
    pub clipped: f64,
}

fn checked_qfi(f: f64, h: f64) -> Result<f64> {
    let q = qfi_from_fidelity(f, h);
    if q < -NEGATIVE_QFI_TOL {
        return Err(Error::NegativeQfi(q));
    }
    Ok(q.max(0.0))
}

/// QFI from the four states at `g0 ± dg` and `g0 ± dg/2`, ordered
/// `[minus, plus, minus_half, plus_half]`.
pub fn qfi_from_states(states: &[CMat; 4], dg: f64) -> Result<(f64, f64)> {
    let f = fidelity_raw(&states[0], &states[1])?;
    let fh = fidelity_raw(&states[2], &states[3])?;
    Ok((checked_qfi(f, dg)?, checked_qfi(fh, dg / 2.0)?))
}

fn convergence(v: f64, vh: f64) -> f64 {
    let s = v.abs().max(vh.abs());
    if s < 1e-14 {
        0.0
    } else {
        (vh - v).abs() / s
    }
}

fn prepare_for_fidelity(s: &BinReducedState) -> Result<(CMat, f64)> {
    match s.source {
        BinSource::ShortTimeAnalytic => linalg::project_psd(&s.data),
        BinSource::ExactDiscrete => Ok((s.data.clone(), 0.0)),
    }
}

fn result_from(states: [BinReducedState; 4], dg: f64) -> Result<QfiResult> {
    let mut clipped = 0.0f64;
    let mut mats = Vec::with_capacity(4);
    for s in &states {
        let (m, c) = prepare_for_fidelity(s)?;
        clipped = clipped.max(c);
        mats.push(m);
    }
    let mats: [CMat; 4] = mats.try_into().expect("four states");
    let (value, value_half) = qfi_from_states(&mats, dg)?;
    let conv = convergence(value, value_half);
    let s = &states[1];
    Ok(QfiResult {
        value,
        per_time: value / s.dt,
        dg,
        value_half,
        convergence: conv,
        flagged: conv > CONVERGENCE_FLAG,
        dt: s.dt,
        t1: s.t1,
        tau: s.tau,
        clipped,
    })
}

/// Finite-difference QFI of a parameterized family of bin states.
pub fn qfi_bins<F>(mut factory: F, g0: f64, dg: f64) -> Result<QfiResult>
where
    F: FnMut(f64) -> Result<BinReducedState>,
{
    if !(dg > 0.0) {
        return Err(Error::InvalidParam(format!("finite-difference step must be positive, got {dg}")));
    }
    let states = [factory(g0 - dg)?, factory(g0 + dg)?, factory(g0 - dg / 2.0)?, factory(g0 + dg / 2.0)?];
    result_from(states, dg)
}

/// Numerical settings of the ω-estimation pipelines.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QfiConfig {
    /// Bin duration.
    pub dt: f64,
    /// Finite-difference step as a fraction of `omega_c`.
    pub dg_rel: f64,
    pub source: BinSource,
    pub kraus_mode: KrausMode,
}

impl QfiConfig {
    pub fn new(dt: f64, source: BinSource) -> Self {
        QfiConfig { dt, dg_rel: 1e-4, source, kraus_mode: KrausMode::ExactUnitary }
    }

    pub fn with_dg_rel(self, dg_rel: f64) -> Self {
        QfiConfig { dg_rel, ..self }
    }
}

/// Default bin duration for sweeps, `ΓΔt = min(2.5e-5, 1e-3/N)`.
pub fn default_dt(params: &ModelParams) -> f64 {
    (2.5e-5f64).min(1e-3 / params.n as f64) / params.gamma_coll
}

fn offsets(dg: f64) -> [f64; 4] {
    [-dg, dg, -dg / 2.0, dg / 2.0]
}

/// State prepared by the discrete map: its fixed point for a stationary
/// preparation, otherwise `round(t1/dt)` steps from the ground state.
pub fn discrete_prepared(params: &ModelParams, kp: &KrausPair, prep: Preparation) -> Result<CMat> {
    if params.gamma_loc > 0.0 {
        return Err(Error::InvalidParam("exact discrete bin states are collective only".into()));
    }
    match prep {
        Preparation::Stationary => {
            let l = crate::dicke::build_liouvillian(params)?;
            timebin::discrete_stationary_state(kp, &l)
        }
        Preparation::FromGround { t1 } => {
            let g = crate::dicke::DensityMatrix::ground(params.n);
            let steps = (t1 / kp.dt).round() as u64;
            Ok(timebin::unmonitored_steps(g.data(), kp, steps))
        }
    }
}

/// One-bin QFI for ω-estimation.
pub fn qfi_one_bin(params: &ModelParams, prep: Preparation, cfg: &QfiConfig) -> Result<QfiResult> {
    let dg = cfg.dg_rel * params.omega_c();
    let dt = cfg.dt;
    let factory = |w: f64| -> Result<BinReducedState> {
        let p = params.with_omega(w);
        match cfg.source {
            BinSource::ShortTimeAnalytic => {
                let m = Model::new(&p)?;
                let x = m.prepare(prep)?;
                timebin::one_bin_analytic(&m.l, &x, dt, prep.t1())
            }
            BinSource::ExactDiscrete => {
                let kp = timebin::kraus_pair(&p, dt, cfg.kraus_mode)?;
                let rho = discrete_prepared(&p, &kp, prep)?;
                Ok(timebin::one_bin_exact(&kp, &rho, prep.t1()))
            }
        }
    };
    qfi_bins(factory, params.omega, dg)
}

/// Two-bin QFI over a lag grid, with the refined optimum.
#[derive(Clone, Debug, serde::Serialize)]
pub struct QfiScan {
    pub results: Vec<QfiResult>,
    pub peak_index: usize,
    /// Lag of the maximum after parabolic refinement.
    pub tau_star: f64,
    /// Per-unit-time QFI at the refined maximum.
    pub peak_per_time: f64,
}

impl QfiScan {
    pub fn taus(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.tau).collect()
    }

    pub fn per_time(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.per_time).collect()
    }
}

/// Two-bin states at `ω + offset` for every lag, one family member at a time.
fn two_bin_family(
    params: &ModelParams,
    prep: Preparation,
    taus: &[f64],
    cfg: &QfiConfig,
    w: f64,
) -> Result<Vec<BinReducedState>> {
    let p = params.with_omega(w);
    match cfg.source {
        BinSource::ShortTimeAnalytic => {
            let m = Model::new(&p)?;
            let tr = m.regression(prep, taus, cfg.dt)?;
            (0..taus.len())
                .map(|k| timebin::two_bin_from_trace(p.n, p.gamma_coll, cfg.dt, &tr, k, prep.t1()))
                .collect()
        }
        BinSource::ExactDiscrete => {
            let kp = timebin::kraus_pair(&p, cfg.dt, cfg.kraus_mode)?;
            let rho = discrete_prepared(&p, &kp, prep)?;
            let gaps: Vec<u64> = taus.iter().map(|t| (t / cfg.dt).round() as u64).collect();
            timebin::two_bin_exact_scan(&kp, &rho, &gaps, prep.t1())
        }
    }
}

/// Per-lag two-bin QFI for ω-estimation.
pub fn qfi_vs_tau(params: &ModelParams, prep: Preparation, taus: &[f64], cfg: &QfiConfig) -> Result<QfiScan> {
    if taus.is_empty() {
        return Err(Error::InvalidParam("empty lag grid".into()));
    }
    let dg = cfg.dg_rel * params.omega_c();
    let mut fams = Vec::with_capacity(4);
    for o in offsets(dg) {
        fams.push(two_bin_family(params, prep, taus, cfg, params.omega + o)?);
    }
    let mut results = Vec::with_capacity(taus.len());
    for k in 0..taus.len() {
        let states = [fams[0][k].clone(), fams[1][k].clone(), fams[2][k].clone(), fams[3][k].clone()];
        results.push(result_from(states, dg)?);
    }
    let ys: Vec<f64> = results.iter().map(|r| r.per_time).collect();
    let xs: Vec<f64> = results.iter().map(|r| r.tau).collect();
    let (peak_index, tau_star, peak_per_time) = signal::refined_max(&xs, &ys);
    Ok(QfiScan { results, peak_index, tau_star, peak_per_time })
}

/// Uniform lag grid over `[0, tau_max]` with at least `per_period` points
/// per mean-field period (or per `1/Γ` in the overdamped regime).
pub fn lag_grid(params: &ModelParams, tau_max: f64, per_period: usize) -> Vec<f64> {
    let period = crate::dicke::mean_field_frequency(params)
        .map(|w| 2.0 * std::f64::consts::PI / w)
        .unwrap_or(1.0 / params.gamma_coll)
        .min(1.0 / params.gamma_coll);
    let h = period / per_period as f64;
    let n = (tau_max / h).ceil() as usize;
    (0..=n).map(|k| (k as f64 * h).min(tau_max)).collect::<Vec<_>>()
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CrbBound {
    pub k_repeats: u64,
    pub dt: f64,
    pub fisher_per_time: f64,
    /// `1 / (K dt F)`; infinite when the Fisher information vanishes.
    pub bound: f64,
    pub unbounded: bool,
}

pub fn cramer_rao_bound(k_repeats: u64, dt: f64, fisher_per_time: f64) -> Result<CrbBound> {
    if k_repeats == 0 || !(dt > 0.0) || !(fisher_per_time >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "Cramér-Rao bound needs K >= 1, dt > 0, F >= 0 (got {k_repeats}, {dt}, {fisher_per_time})"
        )));
    }
    let denom = k_repeats as f64 * dt * fisher_per_time;
    Ok(CrbBound {
        k_repeats,
        dt,
        fisher_per_time,
        bound: if denom > 0.0 { 1.0 / denom } else { f64::INFINITY },
        unbounded: denom == 0.0,
    })
}
