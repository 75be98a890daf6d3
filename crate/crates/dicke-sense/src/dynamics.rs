//! Time evolution, stationary states, Liouvillian spectra and two-time
//! correlations by quantum regression.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::dicke::{self, DensityMatrix, SpinOp, SuperOperator};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, Csr, ExpmvOp, SparseLu, ONE, ZERO};

/// Positivity violations larger than this are reported as numerical failures.
pub const PROPAGATION_POSITIVITY_TOL: f64 = 1e-6;

/// Repeated application of `exp(L h)` with the Taylor plan cached per step.
pub struct Propagator<'a> {
    l: &'a SuperOperator,
    op: ExpmvOp<'a>,
    plans: Mutex<HashMap<u64, (usize, usize)>>,
}

impl<'a> Propagator<'a> {
    pub fn new(l: &'a SuperOperator) -> Self {
        Propagator { l, op: ExpmvOp::new(&l.mat), plans: Mutex::new(HashMap::new()) }
    }

    pub fn generator(&self) -> &SuperOperator {
        self.l
    }

    /// `exp(L t) x`, with blocks re-hermitized when `hermitize` is set.
    pub fn apply(&self, x: &[c64], t: f64, hermitize: bool) -> Vec<c64> {
        let plan = {
            let mut plans = self.plans.lock().expect("plan cache poisoned");
            *plans.entry(t.to_bits()).or_insert_with(|| self.op.plan(t))
        };
        let mut y = self.op.apply_with_plan(x, t, plan);
        if hermitize {
            self.l.space.hermitize(&mut y);
        }
        y
    }
}

/// `exp(L t) rho0` on vectorized states of `l.space`.
pub fn evolve_vec(l: &SuperOperator, x0: &[c64], t: f64) -> Result<Vec<c64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParam(format!("negative evolution time {t}")));
    }
    if x0.len() != l.len() {
        return Err(Error::Dimension { expected: l.len(), got: x0.len() });
    }
    let y = Propagator::new(l).apply(x0, t, true);
    let min = l.space.min_eigenvalue(&y)?;
    if min < -PROPAGATION_POSITIVITY_TOL {
        return Err(Error::NotPositive { min_eig: min, tol: PROPAGATION_POSITIVITY_TOL });
    }
    Ok(y)
}

pub fn evolve(l: &SuperOperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !l.space.is_single_sector() {
        return Err(Error::InvalidParam("evolve takes a single-sector generator; use evolve_vec".into()));
    }
    let y = evolve_vec(l, &rho0.to_vec(), t)?;
    Ok(DensityMatrix::from_vec(&y, l.dim()))
}

/// Expectation values along a trajectory sampled on `times` (ascending).
pub fn trajectory(l: &SuperOperator, x0: &[c64], times: &[f64], ops: &[SpinOp]) -> Result<Vec<Vec<c64>>> {
    check_grid(times)?;
    let prop = Propagator::new(l);
    let mut x = x0.to_vec();
    let mut t_prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        x = prop.apply(&x, t - t_prev, true);
        t_prev = t;
        out.push(ops.iter().map(|&o| l.space.expect(o, &x)).collect());
    }
    Ok(out)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParam("empty time grid".into()));
    }
    if grid[0] < 0.0 || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("time grid must be non-negative and ascending".into()));
    }
    Ok(())
}

fn pinned_system(l: &SuperOperator, pin: usize) -> Csr {
    let diag = l.space.diagonal_indices();
    let mut t: Vec<_> = l.mat.triplets().into_iter().filter(|&(r, _, _)| r != pin).collect();
    t.extend(diag.iter().map(|&c| (pin, c, ONE)));
    Csr::from_triplets(l.len(), l.len(), t)
}

fn solve_pinned(l: &SuperOperator, pin: usize) -> Result<Vec<c64>> {
    let a = pinned_system(l, pin);
    let lu = SparseLu::new(&a).map_err(|e| Error::Degenerate(format!("pinned stationary system is singular: {e}")))?;
    let mut b = vec![ZERO; l.len()];
    b[pin] = ONE;
    let mut x = lu.solve(&b);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Degenerate("pinned stationary system is singular".into()));
    }
    // one step of iterative refinement
    let ax = a.matvec(&x);
    let r: Vec<c64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let dx = lu.solve(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
    Ok(x)
}

/// Stationary state on the generator's state space. A null space of
/// dimension above one is reported as [`Error::Degenerate`].
pub fn steady_state_vec(l: &SuperOperator) -> Result<Vec<c64>> {
    let diag = l.space.diagonal_indices();
    let pin_a = diag[0];
    let pin_b = *diag.last().unwrap();
    let mut x = solve_pinned(l, pin_a)?;
    let scale = l.mat.norm1().max(1.0);
    let res = linalg::norm_inf(&l.apply(&x));
    if res > 1e-8 * scale {
        return Err(Error::Degenerate(format!("stationary residual {res:.3e} after pinned solve")));
    }
    if pin_b != pin_a {
        let y = solve_pinned(l, pin_b)?;
        let diff = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if diff > 1e-6 {
            return Err(Error::Degenerate(format!(
                "stationary solutions with different normalization rows differ by {diff:.3e}"
            )));
        }
    }
    l.space.hermitize(&mut x);
    let tr = l.space.trace(&x);
    for xi in x.iter_mut() {
        *xi /= tr;
    }
    Ok(x)
}

pub fn steady_state(l: &SuperOperator) -> Result<DensityMatrix> {
    if !l.space.is_single_sector() {
        return Err(Error::InvalidParam("steady_state takes a single-sector generator; use steady_state_vec".into()));
    }
    let x = steady_state_vec(l)?;
    Ok(DensityMatrix::from_vec(&x, l.dim()))
}

/// Eigen-decomposition of a Liouvillian.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Sorted by descending real part (ties by descending imaginary part).
    pub eigenvalues: Vec<c64>,
    /// Columns are vectorized right modes `r_j`.
    pub right_modes: CMat,
    /// Columns are vectorized left modes `l_j`, normalized so that
    /// `Tr(l_j^dagger r_k) = delta_jk`.
    pub left_modes: CMat,
    pub rates: SlowRates,
}

/// Characteristic decay rates extracted from a spectrum.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlowRates {
    /// `|Re lambda_1|`
    pub gap: f64,
    /// Slowest non-oscillatory decay rate.
    pub gamma_1: Option<f64>,
    /// Slowest oscillatory decay rate.
    pub gamma_2: Option<f64>,
    /// `1 / |lambda_1|`
    pub relax_time: f64,
    /// Eigenvalues too close to the real/oscillatory threshold to classify.
    pub borderline: Vec<(f64, f64)>,
}

fn sort_spectrum(ev: &mut [(c64, usize)]) {
    ev.sort_by(|a, b| {
        b.0.re
            .partial_cmp(&a.0.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.0.im.partial_cmp(&a.0.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Classifies sorted eigenvalues; index 0 is the stationary mode.
pub fn slow_rates(sorted: &[c64], gamma: f64) -> SlowRates {
    let thr = 1e-8 * gamma;
    let mut gamma_1 = None;
    let mut gamma_2 = None;
    let mut borderline = Vec::new();
    for &z in sorted.iter().skip(1) {
        let a = z.im.abs();
        if a > 0.1 * thr && a < 10.0 * thr {
            borderline.push((z.re, z.im));
        }
        if a <= thr {
            if gamma_1.is_none() {
                gamma_1 = Some(-z.re);
            }
        } else if gamma_2.is_none() {
            gamma_2 = Some(-z.re);
        }
    }
    let l1 = sorted.get(1).copied().unwrap_or(ZERO);
    SlowRates {
        gap: l1.re.abs(),
        gamma_1,
        gamma_2,
        relax_time: if l1.norm() > 0.0 { 1.0 / l1.norm() } else { f64::INFINITY },
        borderline,
    }
}

pub fn spectral_decomposition(l: &SuperOperator) -> Result<SpectralDecomposition> {
    let dense = l.to_dense();
    let (vals, vecs) = linalg::eig(&dense).map_err(|e| Error::Numerical(format!("{e} (superoperator dimension {})", l.len())))?;
    let mut idx: Vec<(c64, usize)> = vals.iter().copied().zip(0..).collect();
    sort_spectrum(&mut idx);
    let n = l.len();
    let right = CMat::from_fn(n, n, |i, j| vecs[(i, idx[j].1)]);
    let inv = linalg::inverse(&right);
    let left = CMat::from_fn(n, n, |i, j| inv[(j, i)].conj());
    let eigenvalues: Vec<c64> = idx.iter().map(|p| p.0).collect();
    let rates = slow_rates(&eigenvalues, l.params.gamma_coll);
    Ok(SpectralDecomposition { eigenvalues, right_modes: right, left_modes: left, rates })
}

/// Eigenvalues only (cheaper for large generators), sorted as in
/// [`SpectralDecomposition`].
pub fn liouvillian_eigenvalues(l: &SuperOperator) -> Result<Vec<c64>> {
    let vals = linalg::eigvals(&l.to_dense()).map_err(|e| Error::Numerical(format!("{e} (superoperator dimension {})", l.len())))?;
    let mut idx: Vec<(c64, usize)> = vals.into_iter().zip(0..).collect();
    sort_spectrum(&mut idx);
    Ok(idx.into_iter().map(|p| p.0).collect())
}

/// Which two-time correlation to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CorrelationKind {
    /// `<S+(tau) S->`
    PlusMinus,
    /// `<S+ S-(tau)>`
    PlusMinusReversed,
    /// `<S-(tau) S->`
    MinusMinus,
}

#[derive(Clone, Debug)]
pub struct TwoTimeCorrelation {
    pub t1: f64,
    pub kind: CorrelationKind,
    pub tau_grid: Vec<f64>,
    pub values: Vec<c64>,
}

/// Regression quantities needed by the short-time bin states, sampled on a
/// lag grid.
#[derive(Clone, Debug)]
pub struct RegressionTrace {
    pub taus: Vec<f64>,
    /// `<S+ S->` and `<S->` at the preparation time.
    pub n_t1: f64,
    pub s_t1: c64,
    /// `<S+(tau) S->_{t1}`
    pub c_pm: Vec<c64>,
    /// `<S-(tau) S->_{t1}`
    pub c_mm: Vec<c64>,
    /// `<S+ S->` and `<S->` at `t1 + tau + later_shift`.
    pub n_later: Vec<f64>,
    pub s_later: Vec<c64>,
}

/// Propagates `S- rho` (and `rho` itself unless `stationary`) along the lag
/// grid. The single-time moments of the later bin are taken at
/// `t1 + tau + later_shift`.
pub fn regression_trace(
    l: &SuperOperator,
    rho_t1: &[c64],
    taus: &[f64],
    later_shift: f64,
    stationary: bool,
) -> Result<RegressionTrace> {
    check_grid(taus)?;
    let space = &l.space;
    let prop = Propagator::new(l);
    let n_t1 = space.expect(SpinOp::PlusMinus, rho_t1).re;
    let s_t1 = space.expect(SpinOp::Minus, rho_t1);
    let mut v = space.left_mul(SpinOp::Minus, rho_t1);
    let mut r = if stationary { rho_t1.to_vec() } else { prop.apply(rho_t1, later_shift, true) };
    let mut out = RegressionTrace {
        taus: taus.to_vec(),
        n_t1,
        s_t1,
        c_pm: Vec::with_capacity(taus.len()),
        c_mm: Vec::with_capacity(taus.len()),
        n_later: Vec::with_capacity(taus.len()),
        s_later: Vec::with_capacity(taus.len()),
    };
    let mut prev = 0.0;
    for &tau in taus {
        let h = tau - prev;
        if h > 0.0 {
            v = prop.apply(&v, h, false);
            if !stationary {
                r = prop.apply(&r, h, true);
            }
        }
        prev = tau;
        out.c_pm.push(space.expect(SpinOp::Plus, &v));
        out.c_mm.push(space.expect(SpinOp::Minus, &v));
        out.n_later.push(space.expect(SpinOp::PlusMinus, &r).re);
        out.s_later.push(space.expect(SpinOp::Minus, &r));
    }
    Ok(out)
}

pub fn two_time_correlation(
    l: &SuperOperator,
    rho_t1: &[c64],
    t1: f64,
    tau_grid: &[f64],
    kind: CorrelationKind,
) -> Result<TwoTimeCorrelation> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidParam("empty lag grid".into()));
    }
    let tr = regression_trace(l, rho_t1, tau_grid, 0.0, true)?;
    let values = match kind {
        CorrelationKind::PlusMinus => tr.c_pm,
        CorrelationKind::PlusMinusReversed => tr.c_pm.iter().map(|z| z.conj()).collect(),
        CorrelationKind::MinusMinus => tr.c_mm,
    };
    Ok(TwoTimeCorrelation { t1, kind, tau_grid: tau_grid.to_vec(), values })
}

/// Two-time correlation from a spectral decomposition,
/// `sum_j Tr(O1 r_j) Tr(l_j^dagger O2 rho) exp(lambda_j tau)`.
pub fn correlation_from_modes(
    l: &SuperOperator,
    spec: &SpectralDecomposition,
    rho_t1: &[c64],
    tau: f64,
) -> c64 {
    let space = &l.space;
    let v = space.left_mul(SpinOp::Minus, rho_t1);
    let n = l.len();
    let mut acc = ZERO;
    for j in 0..n {
        let mut coef = ZERO;
        for i in 0..n {
            coef += spec.left_modes[(i, j)].conj() * v[i];
        }
        let col: Vec<c64> = (0..n).map(|i| spec.right_modes[(i, j)]).collect();
        acc += coef * space.expect(SpinOp::Plus, &col) * (spec.eigenvalues[j] * tau).exp();
    }
    acc
}

/// `Gamma (<S+S->_ss - <S+>_ss <S->_ss)` from a stationary state.
pub fn incoherent_intensity_of(l: &SuperOperator, rho_ss: &[c64]) -> f64 {
    let n = l.space.expect(SpinOp::PlusMinus, rho_ss).re;
    let s = l.space.expect(SpinOp::Minus, rho_ss);
    l.params.gamma_coll * (n - s.norm_sqr())
}

pub fn incoherent_intensity(l: &SuperOperator) -> Result<f64> {
    let x = steady_state_vec(l)?;
    Ok(incoherent_intensity_of(l, &x))
}

/// Three-mode approximation of the stationary `<S+(tau) S->`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AnsatzParams {
    pub i_inc: f64,
    pub omega_osc: f64,
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub coherent_bg: f64,
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    pub omega: f64,
}

impl AnsatzParams {
    pub fn new(l: &SuperOperator, rho_ss: &[c64], gamma_1: f64, gamma_2: f64) -> Result<Self> {
        let p = l.params;
        let omega_osc = dicke::mean_field_frequency(&p)?;
        let i_inc = incoherent_intensity_of(l, rho_ss).max(0.0);
        let s = l.space.expect(SpinOp::Minus, rho_ss);
        let g = p.gamma_coll;
        Ok(AnsatzParams {
            i_inc,
            omega_osc,
            gamma_1,
            gamma_2,
            coherent_bg: s.norm_sqr(),
            c1: i_inc / (2.0 * g),
            c2: i_inc / (4.0 * g),
            gamma: g,
            omega: p.omega,
        })
    }
}

pub fn ansatz_correlation(a: &AnsatzParams, tau: f64) -> c64 {
    let v = a.coherent_bg
        + a.c1 * (-a.gamma_1 * tau).exp()
        + 2.0 * a.c2 * (a.omega_osc * tau).cos() * (-a.gamma_2 * tau).exp();
    c64::new(v, 0.0)
}

/// Frequency derivative of the ansatz; `rate` is the envelope decay rate
/// (the oscillatory rate `gamma_2` unless overridden).
pub fn ansatz_derivative(a: &AnsatzParams, tau: f64, rate: Option<f64>) -> Result<c64> {
    if a.omega_osc <= 0.0 {
        return Err(Error::InvalidParam("ansatz derivative needs a positive oscillation frequency".into()));
    }
    let rate = rate.unwrap_or(a.gamma_2);
    let dw = a.omega / a.omega_osc;
    let v = -(a.i_inc * tau * dw / (2.0 * a.gamma)) * (a.omega_osc * tau).sin() * (-rate * tau).exp();
    Ok(c64::new(v, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicke::{build_liouvillian, ModelParams};

    #[test]
    fn dark_state_when_undriven() {
        let l = build_liouvillian(&ModelParams::new(6, 0.0, 1.0, 0.0).unwrap()).unwrap();
        let ss = steady_state(&l).unwrap();
        assert!((ss.data()[(6, 6)].re - 1.0).abs() < 1e-12);
        assert!((ss.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_atom_bloch_solution() {
        // Independent solve of the optical Bloch equations for H = w sx,
        // decay rate g: unknowns (u, v, w) = (<sx>, <sy>, <sz>).
        let (w, g) = (1.0, 1.0);
        // d<sx>/dt = -g/2 <sx>
        // d<sy>/dt = -w <sz> - g/2 <sy>
        // d<sz>/dt = w <sy> - g (<sz> + 1/2)
        let a = [[-g / 2.0, 0.0, 0.0], [0.0, -g / 2.0, -w], [0.0, w, -g]];
        let b = [0.0, 0.0, g / 2.0];
        // Cramer's rule on the 2x2 (sy, sz) block
        let det = a[1][1] * a[2][2] - a[1][2] * a[2][1];
        let sz = (a[1][1] * b[2] - a[2][1] * b[1]) / det;
        let excited = 0.5 + sz;
        let l = build_liouvillian(&ModelParams::new(1, w, g, 0.0).unwrap()).unwrap();
        let ss = steady_state(&l).unwrap();
        assert!((ss.data()[(0, 0)].re - excited).abs() < 1e-12, "{} vs {excited}", ss.data()[(0, 0)].re);
    }

    #[test]
    fn semigroup_property() {
        let l = build_liouvillian(&ModelParams::from_ratios(8, 1.7, 0.0).unwrap()).unwrap();
        let r0 = DensityMatrix::ground(8);
        let a = evolve(&l, &evolve(&l, &r0, 0.3).unwrap(), 0.45).unwrap();
        let b = evolve(&l, &r0, 0.75).unwrap();
        assert!(linalg::max_abs_diff(a.data(), b.data()) < 1e-9);
        let c = evolve(&l, &r0, 0.0).unwrap();
        assert!(linalg::max_abs_diff(c.data(), r0.data()) < 1e-15);
    }

    #[test]
    fn negative_time_rejected() {
        let l = build_liouvillian(&ModelParams::from_ratios(3, 1.0, 0.0).unwrap()).unwrap();
        assert!(evolve(&l, &DensityMatrix::ground(3), -1.0).is_err());
    }

    #[test]
    fn two_level_gap() {
        let l = build_liouvillian(&ModelParams::new(1, 0.0, 1.0, 0.0).unwrap()).unwrap();
        let s = spectral_decomposition(&l).unwrap();
        assert!(s.eigenvalues[0].norm() < 1e-10);
        assert!((s.rates.gap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn correlation_at_zero_lag() {
        let l = build_liouvillian(&ModelParams::from_ratios(6, 2.0, 0.0).unwrap()).unwrap();
        let x = steady_state_vec(&l).unwrap();
        let c = two_time_correlation(&l, &x, 0.0, &[0.0, 0.5], CorrelationKind::PlusMinus).unwrap();
        let n = l.space.expect(SpinOp::PlusMinus, &x);
        assert!((c.values[0] - n).norm() < 1e-12);
        assert!(two_time_correlation(&l, &x, 0.0, &[], CorrelationKind::PlusMinus).is_err());
    }
}
