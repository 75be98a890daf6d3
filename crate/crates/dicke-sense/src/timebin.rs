//! Discrete collision model: Kraus maps for one coarse-grained step, joint
//! evolution of the system with one or two retained time-bin modes, and the
//! reduced bin states (exact discrete and short-time analytic).
//!
//! Joint states use the ordering `system ⊗ bin1 ⊗ bin2`; bin modes hold at
//! most one excitation. Two-bin matrices are indexed `σ1 * 2 + σ2`, i.e.
//! `|00>, |01>, |10>, |11>`.

use crate::dicke::{spin_ops, DensityMatrix, ModelParams, SpinOp, SuperOperator};
use crate::dynamics::{self, RegressionTrace};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, cr, CMat, SparseLu, I, ONE, ZERO};

/// Above this `N Γ Δt` the Kraus pair carries a warning.
pub const KRAUS_WARN_NGDT: f64 = 0.5;
/// Above this `N Γ Δt` the short-time formulas carry a warning.
pub const ANALYTIC_WARN_NGDT: f64 = 0.1;
/// Largest joint dimension `(N+1) * 4` accepted by [`evolve_retaining_bins`].
pub const MAX_JOINT_DIM: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BinSchedule {
    pub dt: f64,
    pub n1: u64,
    pub n2: u64,
}

impl BinSchedule {
    pub fn new(dt: f64, n1: u64, n2: u64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam(format!("bin duration must be positive, got {dt}")));
        }
        if n1 < 1 || n2 <= n1 {
            return Err(Error::InvalidParam(format!("bin indices need n2 > n1 >= 1, got ({n1}, {n2})")));
        }
        Ok(BinSchedule { dt, n1, n2 })
    }

    /// Nearest schedule with `t1 ≈ n1 dt` and `tau ≈ (n2 - n1 - 1) dt`.
    pub fn from_times(dt: f64, t1: f64, tau: f64) -> Result<Self> {
        if !(t1 >= 0.0) || !(tau >= 0.0) {
            return Err(Error::InvalidParam("t1 and tau must be non-negative".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("bin duration must be positive, got {dt}")));
        }
        let n1 = ((t1 / dt).round() as u64).max(1);
        let gap = (tau / dt).round() as u64;
        BinSchedule::new(dt, n1, n1 + gap + 1)
    }

    pub fn t1(&self) -> f64 {
        self.n1 as f64 * self.dt
    }

    pub fn tau(&self) -> f64 {
        (self.n2 - self.n1 - 1) as f64 * self.dt
    }

    /// Number of unmonitored steps between the two bins.
    pub fn gap_steps(&self) -> u64 {
        self.n2 - self.n1 - 1
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KrausMode {
    FirstOrder,
    #[default]
    ExactUnitary,
}

impl std::str::FromStr for KrausMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_order" => Ok(KrausMode::FirstOrder),
            "exact_unitary" | "exact" => Ok(KrausMode::ExactUnitary),
            _ => Err(Error::Parse(format!("unknown Kraus mode '{s}'"))),
        }
    }
}

/// Kraus operators of one collision step: no emission (`k0`) and one
/// emitted excitation (`k1`).
#[derive(Clone, Debug)]
pub struct KrausPair {
    pub k0: CMat,
    pub k1: CMat,
    pub mode: KrausMode,
    pub dt: f64,
    pub params: ModelParams,
    pub warnings: Vec<String>,
}

impl KrausPair {
    pub fn get(&self, sigma: usize) -> &CMat {
        if sigma == 0 {
            &self.k0
        } else {
            &self.k1
        }
    }

    /// `‖K0†K0 + K1†K1 - 1‖_max`
    pub fn completeness_error(&self) -> f64 {
        let s = &(self.k0.adjoint() * &self.k0) + &(self.k1.adjoint() * &self.k1);
        linalg::max_abs_diff(&s, &linalg::identity(s.nrows()))
    }

    /// `K0 X K0† + K1 X K1†`
    pub fn apply(&self, x: &CMat) -> CMat {
        &linalg::sandwich(&self.k0, x, &self.k0) + &linalg::sandwich(&self.k1, x, &self.k1)
    }
}

pub fn kraus_pair(params: &ModelParams, dt: f64, mode: KrausMode) -> Result<KrausPair> {
    params.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParam(format!("bin duration must be positive, got {dt}")));
    }
    let ops = spin_ops(params.n);
    let d = ops.dim;
    let g = params.gamma_coll;
    let mut warnings = Vec::new();
    let ngdt = params.n as f64 * g * dt;
    if ngdt > KRAUS_WARN_NGDT {
        warnings.push(format!("N*Gamma*dt = {ngdt:.3} exceeds {KRAUS_WARN_NGDT}"));
    }
    let (k0, k1) = match mode {
        KrausMode::FirstOrder => {
            let pm = ops.s_plus_s_minus();
            let k0 = CMat::from_fn(d, d, |i, j| {
                let id = if i == j { ONE } else { ZERO };
                id - I * (params.omega * dt) * ops.s_x[(i, j)] - pm[(i, j)] * (0.5 * g * dt)
            });
            let k1 = linalg::scale(&ops.s_minus, cr((g * dt).sqrt()));
            (k0, k1)
        }
        KrausMode::ExactUnitary => {
            // generator -i H dt of system + one bin, bin index fastest
            let mut sigma_up = linalg::zeros(2, 2);
            sigma_up[(1, 0)] = ONE;
            let sigma_dn = linalg::dagger(&sigma_up);
            let id2 = linalg::identity(2);
            let c = (g * dt).sqrt();
            let a = &linalg::scale(&linalg::kron(&ops.s_x, &id2), -I * (params.omega * dt))
                + &linalg::scale(
                    &(&linalg::kron(&ops.s_minus, &sigma_up) - &linalg::kron(&ops.s_plus, &sigma_dn)),
                    cr(c),
                );
            let u = linalg::expm(&a);
            let k0 = CMat::from_fn(d, d, |s, t| u[(2 * s, 2 * t)]);
            let k1 = CMat::from_fn(d, d, |s, t| u[(2 * s + 1, 2 * t)]);
            (k0, k1)
        }
    };
    Ok(KrausPair { k0, k1, mode, dt, params: *params, warnings })
}

/// One unmonitored collision step `E rho`.
pub fn unmonitored_step(rho: &DensityMatrix, kraus: &KrausPair) -> Result<DensityMatrix> {
    if rho.dim() != kraus.k0.nrows() {
        return Err(Error::Dimension { expected: kraus.k0.nrows(), got: rho.dim() });
    }
    Ok(DensityMatrix::new_unchecked(kraus.apply(rho.data())))
}

/// `E^steps rho` by repeated application.
pub fn unmonitored_steps(rho: &CMat, kraus: &KrausPair, steps: u64) -> CMat {
    let mut x = rho.clone();
    for _ in 0..steps {
        x = kraus.apply(&x);
    }
    linalg::hermitian_part(&x)
}

/// Fixed point of the discrete map `E`, obtained by defect correction with
/// the continuous generator as preconditioner.
pub fn discrete_stationary_state(kraus: &KrausPair, l: &SuperOperator) -> Result<CMat> {
    if !l.space.is_single_sector() || l.dim() != kraus.k0.nrows() {
        return Err(Error::Dimension { expected: kraus.k0.nrows(), got: l.dim() });
    }
    let d = l.dim();
    let pin = 0;
    let mut t: Vec<_> = l.mat.triplets().into_iter().filter(|&(r, _, _)| r != pin).collect();
    t.extend((0..d).map(|k| (pin, k + k * d, ONE)));
    let lu = SparseLu::new(&linalg::Csr::from_triplets(l.len(), l.len(), t))?;
    let mut x = dynamics::steady_state_vec(l)?;
    let dt = kraus.dt;
    for _ in 0..50 {
        let rho = linalg::unvec(&x, d);
        let e = kraus.apply(&rho);
        let mut r: Vec<c64> = linalg::vec_cols(&(&e - &rho)).into_iter().map(|z| z / dt).collect();
        let res = linalg::norm_inf(&r);
        if res < 1e-13 * (1.0 + l.mat.norm1()) {
            break;
        }
        r[pin] = ZERO;
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi -= di;
        }
    }
    let mut rho = linalg::hermitian_part(&linalg::unvec(&x, d));
    let tr = linalg::trace(&rho);
    rho = linalg::scale(&rho, ONE / tr);
    let e = kraus.apply(&rho);
    let res = linalg::max_abs_diff(&e, &rho);
    if res > 1e-12 {
        return Err(Error::Numerical(format!("discrete fixed point not reached, residual {res:.3e}")));
    }
    Ok(rho)
}

/// System plus one or two retained bins.
#[derive(Clone, Debug)]
pub struct JointBinState {
    pub n_bins_retained: usize,
    pub data: CMat,
    pub schedule: BinSchedule,
}

/// Where a reduced bin state came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BinSource {
    ExactDiscrete,
    ShortTimeAnalytic,
}

impl BinSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinSource::ExactDiscrete => "exact_discrete",
            BinSource::ShortTimeAnalytic => "short_time_analytic",
        }
    }
}

impl std::str::FromStr for BinSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_discrete" => Ok(BinSource::ExactDiscrete),
            "analytic" | "short_time_analytic" => Ok(BinSource::ShortTimeAnalytic),
            _ => Err(Error::Parse(format!("unknown bin-state source '{s}'"))),
        }
    }
}

/// Reduced density matrix of one (2×2) or two (4×4) bin modes.
#[derive(Clone, Debug)]
pub struct BinReducedState {
    pub n_bins: usize,
    pub data: CMat,
    pub dt: f64,
    /// Preparation time; `None` for a stationary preparation.
    pub t1: Option<f64>,
    pub tau: f64,
    pub source: BinSource,
    pub warnings: Vec<String>,
}

impl BinReducedState {
    pub fn trace(&self) -> c64 {
        linalg::trace(&self.data)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigvalsh(&self.data)?[0])
    }

    /// `<b†b>` of bin `which` (0 or 1).
    pub fn occupation(&self, which: usize) -> f64 {
        if self.n_bins == 1 {
            return self.data[(1, 1)].re;
        }
        let (a, b) = if which == 0 { (2, 3) } else { (1, 3) };
        self.data[(a, a)].re + self.data[(b, b)].re
    }

    /// `<b2† b1>` of a two-bin state.
    pub fn cross_coherence(&self) -> c64 {
        // b1 maps |10> -> |00>, |11> -> |01>; b2† maps |00> -> |01>, |10> -> |11>
        // Tr(b2† b1 mu) = mu[10, 01] + mu[11, ...] terms vanish in the restricted space
        self.data[(2, 1)]
    }

    /// Single-bin marginal of a two-bin state.
    pub fn marginal(&self, which: usize) -> CMat {
        assert_eq!(self.n_bins, 2);
        CMat::from_fn(2, 2, |a, b| {
            let mut acc = ZERO;
            for k in 0..2 {
                let (ia, ib) = if which == 0 { (a * 2 + k, b * 2 + k) } else { (k * 2 + a, k * 2 + b) };
                acc += self.data[(ia, ib)];
            }
            acc
        })
    }
}

/// Joint evolution from `rho0` at time zero: `n1 - 1` unmonitored steps,
/// coupling to bin `n1`, `n2 - n1 - 1` unmonitored steps, coupling to bin `n2`.
pub fn evolve_retaining_bins(
    params: &ModelParams,
    rho0: &DensityMatrix,
    schedule: &BinSchedule,
    mode: KrausMode,
) -> Result<JointBinState> {
    let kp = kraus_pair(params, schedule.dt, mode)?;
    let d = kp.k0.nrows();
    if d * 4 > MAX_JOINT_DIM {
        return Err(Error::Guard { what: "joint dimension", value: d * 4, limit: MAX_JOINT_DIM });
    }
    if rho0.dim() != d {
        return Err(Error::Dimension { expected: d, got: rho0.dim() });
    }
    let rho = unmonitored_steps(rho0.data(), &kp, schedule.n1 - 1);
    let data = joint_from_prepared(&kp, &rho, schedule.gap_steps());
    Ok(JointBinState { n_bins_retained: 2, data, schedule: *schedule })
}

/// Joint system-bin state after coupling bin 1 to the prepared state `rho`
/// only (no second bin).
pub fn joint_one_bin(kp: &KrausPair, rho: &CMat) -> CMat {
    let d = rho.nrows();
    let mut out = linalg::zeros(2 * d, 2 * d);
    for a in 0..2 {
        for b in 0..2 {
            let blk = linalg::sandwich(kp.get(a), rho, kp.get(b));
            for i in 0..d {
                for j in 0..d {
                    out[(i * 2 + a, j * 2 + b)] = blk[(i, j)];
                }
            }
        }
    }
    out
}

fn bin1_blocks(kp: &KrausPair, rho: &CMat) -> [[CMat; 2]; 2] {
    let f = |a: usize, b: usize| linalg::sandwich(kp.get(a), rho, kp.get(b));
    [[f(0, 0), f(0, 1)], [f(1, 0), f(1, 1)]]
}

fn joint_from_prepared(kp: &KrausPair, rho: &CMat, gap: u64) -> CMat {
    let d = rho.nrows();
    let mut blocks = bin1_blocks(kp, rho);
    for _ in 0..gap {
        for row in blocks.iter_mut() {
            for b in row.iter_mut() {
                *b = kp.apply(b);
            }
        }
    }
    let mut out = linalg::zeros(4 * d, 4 * d);
    for a1 in 0..2 {
        for b1 in 0..2 {
            for a2 in 0..2 {
                for b2 in 0..2 {
                    let blk = linalg::sandwich(kp.get(a2), &blocks[a1][b1], kp.get(b2));
                    for i in 0..d {
                        for j in 0..d {
                            out[(i * 4 + a1 * 2 + a2, j * 4 + b1 * 2 + b2)] = blk[(i, j)];
                        }
                    }
                }
            }
        }
    }
    linalg::hermitian_part(&out)
}

/// Continues a joint state for `steps` unmonitored collisions; bins are left
/// untouched.
pub fn continue_unmonitored(joint: &JointBinState, kp: &KrausPair, steps: u64) -> CMat {
    let nb = 1usize << joint.n_bins_retained;
    let d = joint.data.nrows() / nb;
    let id = linalg::identity(nb);
    let k0 = linalg::kron(&kp.k0, &id);
    let k1 = linalg::kron(&kp.k1, &id);
    let mut x = joint.data.clone();
    for _ in 0..steps {
        x = &linalg::sandwich(&k0, &x, &k0) + &linalg::sandwich(&k1, &x, &k1);
    }
    let _ = d;
    x
}

/// Partial trace over the system of `(system ⊗ bins)` matrix `x`.
pub fn trace_out_system(x: &CMat, nb: usize) -> CMat {
    let d = x.nrows() / nb;
    CMat::from_fn(nb, nb, |a, b| (0..d).map(|s| x[(s * nb + a, s * nb + b)]).sum())
}

/// Partial trace over the bins.
pub fn trace_out_bins(x: &CMat, nb: usize) -> CMat {
    let d = x.nrows() / nb;
    CMat::from_fn(d, d, |i, j| (0..nb).map(|a| x[(i * nb + a, j * nb + a)]).sum())
}

pub fn reduce_to_bins(joint: &JointBinState) -> BinReducedState {
    let nb = 1usize << joint.n_bins_retained;
    BinReducedState {
        n_bins: joint.n_bins_retained,
        data: linalg::hermitian_part(&trace_out_system(&joint.data, nb)),
        dt: joint.schedule.dt,
        t1: Some(joint.schedule.t1()),
        tau: joint.schedule.tau(),
        source: BinSource::ExactDiscrete,
        warnings: Vec::new(),
    }
}

/// Exact one-bin state emitted from a prepared system state: the Gram matrix
/// `Tr(K^a rho K^b†)`.
pub fn one_bin_exact(kp: &KrausPair, rho: &CMat, t1: Option<f64>) -> BinReducedState {
    let data = CMat::from_fn(2, 2, |a, b| linalg::trace(&linalg::sandwich(kp.get(a), rho, kp.get(b))));
    BinReducedState {
        n_bins: 1,
        data: linalg::hermitian_part(&data),
        dt: kp.dt,
        t1,
        tau: 0.0,
        source: BinSource::ExactDiscrete,
        warnings: kp.warnings.clone(),
    }
}

/// Exact two-bin states for several gaps (in steps, ascending), sharing the
/// propagation between them.
pub fn two_bin_exact_scan(kp: &KrausPair, rho: &CMat, gaps: &[u64], t1: Option<f64>) -> Result<Vec<BinReducedState>> {
    if gaps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("gap list must be ascending".into()));
    }
    let mut blocks = bin1_blocks(kp, rho);
    let mut done = 0u64;
    let mut out = Vec::with_capacity(gaps.len());
    for &gap in gaps {
        while done < gap {
            for row in blocks.iter_mut() {
                for b in row.iter_mut() {
                    *b = kp.apply(b);
                }
            }
            done += 1;
        }
        let mut mu = linalg::zeros(4, 4);
        for a1 in 0..2 {
            for b1 in 0..2 {
                for a2 in 0..2 {
                    for b2 in 0..2 {
                        mu[(a1 * 2 + a2, b1 * 2 + b2)] =
                            linalg::trace(&linalg::sandwich(kp.get(a2), &blocks[a1][b1], kp.get(b2)));
                    }
                }
            }
        }
        out.push(BinReducedState {
            n_bins: 2,
            data: linalg::hermitian_part(&mu),
            dt: kp.dt,
            t1,
            tau: gap as f64 * kp.dt,
            source: BinSource::ExactDiscrete,
            warnings: kp.warnings.clone(),
        });
    }
    Ok(out)
}

fn analytic_warnings(n: usize, gamma: f64, dt: f64) -> Vec<String> {
    let v = n as f64 * gamma * dt;
    if v > ANALYTIC_WARN_NGDT {
        vec![format!("N*Gamma*dt = {v:.3} exceeds {ANALYTIC_WARN_NGDT}; short-time formula may be inaccurate")]
    } else {
        Vec::new()
    }
}

/// One-bin short-time state from the moments `n = <S+S->` and `s = <S->`
/// at preparation.
pub fn one_bin_from_moments(n_atoms: usize, gamma: f64, dt: f64, n: f64, s: c64, t1: Option<f64>) -> Result<BinReducedState> {
    let g = gamma * dt;
    let sg = g.sqrt();
    let mut mu = linalg::zeros(2, 2);
    mu[(0, 0)] = cr(1.0 - g * n);
    mu[(1, 1)] = cr(g * n);
    mu[(1, 0)] = s * sg;
    mu[(0, 1)] = s.conj() * sg;
    let min = linalg::eigvalsh(&mu)?[0];
    if min < -1e-12 {
        return Err(Error::Validity { min_eig: min, tol: 1e-12 });
    }
    Ok(BinReducedState {
        n_bins: 1,
        data: mu,
        dt,
        t1,
        tau: 0.0,
        source: BinSource::ShortTimeAnalytic,
        warnings: analytic_warnings(n_atoms, gamma, dt),
    })
}

/// One-bin short-time state for a prepared state of `l`'s state space.
pub fn one_bin_analytic(l: &SuperOperator, rho_t1: &[c64], dt: f64, t1: Option<f64>) -> Result<BinReducedState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("bin duration must be positive, got {dt}")));
    }
    let n = l.space.expect(SpinOp::PlusMinus, rho_t1).re;
    let s = l.space.expect(SpinOp::Minus, rho_t1);
    one_bin_from_moments(l.params.n, l.params.gamma_coll, dt, n, s, t1)
}

/// Tolerance on negative eigenvalues of the two-bin short-time state. The
/// truncated expansion carries an `O((Γ Δt)^{3/2})` remainder, which for
/// adjacent bins lands directly on the near-singular fluctuation block.
pub fn two_bin_validity_tol(g: f64, scale: f64) -> f64 {
    (g * scale).powf(1.5) + 1e-12
}

/// Two-bin short-time state from regression sample `k` of `trace`, which must
/// have been computed with `later_shift = dt`.
pub fn two_bin_from_trace(
    n_atoms: usize,
    gamma: f64,
    dt: f64,
    trace: &RegressionTrace,
    k: usize,
    t1: Option<f64>,
) -> Result<BinReducedState> {
    let g = gamma * dt;
    let sg = g.sqrt();
    let (n1, s1) = (trace.n_t1, trace.s_t1);
    let (n2, s2) = (trace.n_later[k], trace.s_later[k]);
    let (cpm, cmm) = (trace.c_pm[k], trace.c_mm[k]);
    let mut mu = linalg::zeros(4, 4);
    mu[(0, 0)] = cr(1.0 - g * (n1 + n2));
    mu[(1, 1)] = cr(g * n2);
    mu[(2, 2)] = cr(g * n1);
    mu[(2, 0)] = s1 * sg;
    mu[(1, 0)] = s2 * sg;
    mu[(3, 0)] = cmm * g;
    mu[(2, 1)] = cpm * g;
    for r in 0..4 {
        for c in (r + 1)..4 {
            mu[(r, c)] = mu[(c, r)].conj();
        }
    }
    let scale = n1.max(n2).max(cpm.norm()).max(cmm.norm());
    let tol = two_bin_validity_tol(g, scale);
    let min = linalg::eigvalsh(&mu)?[0];
    if min < -tol {
        return Err(Error::Validity { min_eig: min, tol });
    }
    Ok(BinReducedState {
        n_bins: 2,
        data: mu,
        dt,
        t1,
        tau: trace.taus[k],
        source: BinSource::ShortTimeAnalytic,
        warnings: analytic_warnings(n_atoms, gamma, dt),
    })
}

/// Two-bin short-time state at a single lag.
pub fn two_bin_analytic(
    l: &SuperOperator,
    rho_t1: &[c64],
    dt: f64,
    tau: f64,
    t1: Option<f64>,
) -> Result<BinReducedState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("bin duration must be positive, got {dt}")));
    }
    let tr = dynamics::regression_trace(l, rho_t1, &[tau], dt, t1.is_none())?;
    two_bin_from_trace(l.params.n, l.params.gamma_coll, dt, &tr, 0, t1)
}

/// Characteristic probing time `dt / eta` of inefficient detection.
pub fn probing_time(eta: f64, dt: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParam(format!("efficiency must lie in (0, 1], got {eta}")));
    }
    Ok(dt / eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum ProbingRegime {
    Efficient,
    VeryInefficient,
}

/// Probing slower than relaxation means consecutive detections see an
/// uncorrelated system.
pub fn classify_probing(tau_eta: f64, relax_time: f64) -> ProbingRegime {
    if tau_eta > relax_time {
        ProbingRegime::VeryInefficient
    } else {
        ProbingRegime::Efficient
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicke::build_liouvillian;

    #[test]
    fn exact_kraus_is_isometric() {
        let p = ModelParams::from_ratios(6, 2.0, 0.0).unwrap();
        let kp = kraus_pair(&p, 1e-3, KrausMode::ExactUnitary).unwrap();
        assert!(kp.completeness_error() < 1e-12);
        assert!(kraus_pair(&p, 0.0, KrausMode::ExactUnitary).is_err());
    }

    #[test]
    fn kraus_modes_agree_to_second_order() {
        let p = ModelParams::from_ratios(20, 1.0, 0.0).unwrap();
        let dt = 1e-4;
        let a = kraus_pair(&p, dt, KrausMode::FirstOrder).unwrap();
        let b = kraus_pair(&p, dt, KrausMode::ExactUnitary).unwrap();
        let fro = |m: &CMat| linalg::norm2(&linalg::vec_cols(m));
        let rel = fro(&(&a.k1 - &b.k1)) / fro(&b.k1);
        assert!(rel < 1e-2, "{rel}");
        let (c, e) = (linalg::max_abs_diff(&a.k0, &b.k0), a.completeness_error());
        assert!(c < 1e-3 && e < 1e-3, "{c} {e}");
    }

    #[test]
    fn schedule_times() {
        let s = BinSchedule::new(0.5, 2, 5).unwrap();
        assert_eq!(s.t1(), 1.0);
        assert_eq!(s.tau(), 1.0);
        assert!(BinSchedule::new(0.5, 3, 3).is_err());
        assert!(BinSchedule::new(0.5, 0, 3).is_err());
    }

    #[test]
    fn discrete_fixed_point() {
        let p = ModelParams::from_ratios(5, 1.5, 0.0).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let kp = kraus_pair(&p, 1e-3, KrausMode::ExactUnitary).unwrap();
        let rho = discrete_stationary_state(&kp, &l).unwrap();
        assert!(linalg::max_abs_diff(&kp.apply(&rho), &rho) < 1e-12);
    }

    #[test]
    fn probing() {
        assert_eq!(probing_time(1.0, 0.3).unwrap(), 0.3);
        assert!((probing_time(0.01, 1e-4).unwrap() - 1e-2).abs() < 1e-15);
        assert!(probing_time(0.0, 1.0).is_err());
        assert!(probing_time(1.5, 1.0).is_err());
        assert_eq!(classify_probing(2.0, 1.0), ProbingRegime::VeryInefficient);
    }

    #[test]
    fn vacuum_one_bin() {
        let p = ModelParams::new(4, 0.0, 1.0, 0.0).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let x = DensityMatrix::ground(4).to_vec();
        let mu = one_bin_analytic(&l, &x, 1e-3, None).unwrap();
        assert_eq!(mu.data[(0, 0)], ONE);
        assert_eq!(mu.data[(1, 1)], ZERO);
    }
}
