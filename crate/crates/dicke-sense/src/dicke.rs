//! Collective spin operators, density matrices and Liouvillians in the Dicke
//! basis.
//!
//! Basis states are ordered by decreasing magnetization: index `k` holds
//! `m = S - k`. Density matrices are vectorized by stacking columns.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, cr, CMat, Csr, I, ONE, ZERO};

/// Physical parameters of the driven, collectively (and optionally locally)
/// decaying ensemble.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub omega: f64,
    pub gamma_coll: f64,
    pub gamma_loc: f64,
}

impl ModelParams {
    pub fn new(n: usize, omega: f64, gamma_coll: f64, gamma_loc: f64) -> Result<Self> {
        let p = ModelParams { n, omega, gamma_coll, gamma_loc };
        p.validate()?;
        Ok(p)
    }

    /// Parameters in units of the collective rate (`gamma_coll = 1`), with the
    /// drive given as a fraction of the critical drive.
    pub fn from_ratios(n: usize, omega_ratio: f64, gamma_loc_ratio: f64) -> Result<Self> {
        let wc = n as f64 / 2.0;
        ModelParams::new(n, omega_ratio * wc, 1.0, gamma_loc_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParam("particle count must be at least 1".into()));
        }
        if !(self.gamma_coll > 0.0) || !self.gamma_coll.is_finite() {
            return Err(Error::InvalidParam(format!("collective rate must be positive, got {}", self.gamma_coll)));
        }
        if !(self.gamma_loc >= 0.0) || !self.gamma_loc.is_finite() {
            return Err(Error::InvalidParam(format!("local rate must be non-negative, got {}", self.gamma_loc)));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidParam(format!("drive must be non-negative, got {}", self.omega)));
        }
        Ok(())
    }

    pub fn omega_c(&self) -> f64 {
        omega_c(self)
    }

    pub fn omega_ratio(&self) -> f64 {
        self.omega / self.omega_c()
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        ModelParams { omega, ..*self }
    }

    pub fn with_gamma_loc(&self, gamma_loc: f64) -> Self {
        ModelParams { gamma_loc, ..*self }
    }
}

/// Critical drive `N * Gamma / 2`.
pub fn omega_c(p: &ModelParams) -> f64 {
    p.n as f64 * p.gamma_coll / 2.0
}

/// Frequency of the mean-field limit cycle, `sqrt(omega^2 - omega_c^2)`.
pub fn mean_field_frequency(p: &ModelParams) -> Result<f64> {
    let wc = omega_c(p);
    if p.omega <= wc {
        return Err(Error::InvalidParam(format!(
            "mean-field frequency undefined for omega = {} <= omega_c = {wc} (overdamped)",
            p.omega
        )));
    }
    Ok((p.omega * p.omega - wc * wc).sqrt())
}

/// Angular momentum matrices for one spin sector.
#[derive(Clone, Debug)]
pub struct CollectiveSpinOps {
    pub dim: usize,
    pub s_x: CMat,
    pub s_y: CMat,
    pub s_z: CMat,
    pub s_plus: CMat,
    pub s_minus: CMat,
}

impl CollectiveSpinOps {
    pub fn s_plus_s_minus(&self) -> CMat {
        &self.s_plus * &self.s_minus
    }
}

/// Spin-`j` ladder operators with `j = twice_j / 2`.
pub fn spin_ops(twice_j: usize) -> CollectiveSpinOps {
    let dim = twice_j + 1;
    let s = twice_j as f64 / 2.0;
    let mut sp = linalg::zeros(dim, dim);
    let mut sz = linalg::zeros(dim, dim);
    for k in 0..dim {
        let m = s - k as f64;
        sz[(k, k)] = cr(m);
        if k >= 1 {
            sp[(k - 1, k)] = cr((s * (s + 1.0) - m * (m + 1.0)).max(0.0).sqrt());
        }
    }
    let sm = linalg::dagger(&sp);
    let sx = CMat::from_fn(dim, dim, |i, j| (sp[(i, j)] + sm[(i, j)]) * 0.5);
    let sy = CMat::from_fn(dim, dim, |i, j| (sp[(i, j)] - sm[(i, j)]) * c64::new(0.0, -0.5));
    CollectiveSpinOps { dim, s_x: sx, s_y: sy, s_z: sz, s_plus: sp, s_minus: sm }
}

/// Collective operators of `n` spin-1/2 particles in the `S = n/2` sector.
pub fn build_collective_ops(n: usize) -> Result<CollectiveSpinOps> {
    if n == 0 {
        return Err(Error::InvalidParam("particle count must be at least 1".into()));
    }
    Ok(spin_ops(n))
}

/// Validated density matrix on a single spin sector.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    data: CMat,
}

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;

impl DensityMatrix {
    /// Checks Hermiticity (relative), unit trace and positivity.
    pub fn new(data: CMat) -> Result<Self> {
        check_density(&data, POSITIVITY_TOL)?;
        Ok(DensityMatrix { data })
    }

    /// Accepts a matrix without validation (after hermitizing). Used for
    /// intermediate propagation results whose validity is checked by callers.
    pub fn new_unchecked(data: CMat) -> Self {
        DensityMatrix { data: linalg::hermitian_part(&data) }
    }

    pub fn from_vec(v: &[c64], d: usize) -> Self {
        DensityMatrix::new_unchecked(linalg::unvec(v, d))
    }

    pub fn pure(psi: &[c64]) -> Result<Self> {
        let nrm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::InvalidParam("zero state vector".into()));
        }
        let d = psi.len();
        Ok(DensityMatrix { data: CMat::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / (nrm * nrm)) })
    }

    /// `|S, m = S - k><S, m = S - k|` for `n` particles.
    pub fn dicke(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidParam(format!("Dicke index {k} outside 0..={n}")));
        }
        let mut psi = vec![ZERO; n + 1];
        psi[k] = ONE;
        DensityMatrix::pure(&psi)
    }

    /// All particles in the ground state, `|S, -S>`.
    pub fn ground(n: usize) -> Self {
        DensityMatrix::dicke(n, n).expect("valid index")
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn into_data(self) -> CMat {
        self.data
    }

    pub fn to_vec(&self) -> Vec<c64> {
        linalg::vec_cols(&self.data)
    }

    pub fn trace(&self) -> c64 {
        linalg::trace(&self.data)
    }

    pub fn expect(&self, op: &CMat) -> c64 {
        linalg::trace_prod(op, &self.data)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigvalsh(&self.data)?.first().copied().unwrap_or(0.0))
    }
}

/// Validity check shared by every state type.
pub fn check_density(a: &CMat, pos_tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension { expected: a.nrows(), got: a.ncols() });
    }
    let scale = linalg::max_abs(a).max(1.0);
    let mut herm = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            herm = herm.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    if herm > HERMITIAN_TOL * scale {
        return Err(Error::Numerical(format!("matrix is not Hermitian (deviation {herm:.3e})")));
    }
    let tr = linalg::trace(a);
    if (tr - ONE).norm() > TRACE_TOL {
        return Err(Error::Numerical(format!("trace {:.12} differs from 1", tr.re)));
    }
    let min = linalg::eigvalsh(a)?.first().copied().unwrap_or(0.0);
    if min < -pos_tol {
        return Err(Error::NotPositive { min_eig: min, tol: pos_tol });
    }
    Ok(())
}

/// Spin operators that the dynamics and observables act with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpinOp {
    X,
    Y,
    Z,
    Plus,
    Minus,
    PlusMinus,
}

/// One total-spin block of a block-diagonal density matrix.
#[derive(Clone, Debug)]
pub struct Sector {
    pub twice_j: usize,
    pub dim: usize,
    pub offset: usize,
    ops: [Csr; 6],
}

impl Sector {
    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn op(&self, which: SpinOp) -> &Csr {
        &self.ops[which as usize]
    }

    pub fn len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }
}

/// Layout of vectorized block-diagonal states: sectors are stored one after
/// another, each column-stacked.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub n: usize,
    pub sectors: Vec<Sector>,
    len: usize,
}

fn sector(twice_j: usize, offset: usize) -> Sector {
    let o = spin_ops(twice_j);
    let pm = o.s_plus_s_minus();
    let sp = |m: &CMat| Csr::from_dense(m, 0.0);
    Sector {
        twice_j,
        dim: o.dim,
        offset,
        ops: [sp(&o.s_x), sp(&o.s_y), sp(&o.s_z), sp(&o.s_plus), sp(&o.s_minus), sp(&pm)],
    }
}

impl StateSpace {
    /// Only the maximal sector `j = n/2`.
    pub fn collective(n: usize) -> Self {
        let s = sector(n, 0);
        let len = s.len();
        StateSpace { n, sectors: vec![s], len }
    }

    /// All sectors `j = n/2, n/2 - 1, ..., (n mod 2)/2`.
    pub fn ladder(n: usize) -> Self {
        let mut sectors = Vec::new();
        let mut offset = 0;
        let mut tj = n as i64;
        while tj >= 0 {
            let s = sector(tj as usize, offset);
            offset += s.len();
            sectors.push(s);
            tj -= 2;
        }
        StateSpace { n, sectors, len: offset }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_single_sector(&self) -> bool {
        self.sectors.len() == 1
    }

    /// Dimension of the maximal sector.
    pub fn max_dim(&self) -> usize {
        self.sectors[0].dim
    }

    pub fn block(&self, x: &[c64], s: usize) -> CMat {
        let sec = &self.sectors[s];
        linalg::unvec(&x[sec.offset..sec.offset + sec.len()], sec.dim)
    }

    pub fn set_block(&self, x: &mut [c64], s: usize, b: &CMat) {
        let sec = &self.sectors[s];
        let v = linalg::vec_cols(b);
        x[sec.offset..sec.offset + sec.len()].copy_from_slice(&v);
    }

    /// Indices of diagonal entries; the trace functional.
    pub fn diagonal_indices(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        for s in &self.sectors {
            for k in 0..s.dim {
                idx.push(s.offset + k + k * s.dim);
            }
        }
        idx
    }

    pub fn trace(&self, x: &[c64]) -> c64 {
        self.diagonal_indices().into_iter().map(|i| x[i]).sum()
    }

    pub fn sector_traces(&self, x: &[c64]) -> Vec<f64> {
        self.sectors
            .iter()
            .map(|s| (0..s.dim).map(|k| x[s.offset + k + k * s.dim].re).sum())
            .collect()
    }

    /// `Tr(O x)` summed over sectors.
    pub fn expect(&self, op: SpinOp, x: &[c64]) -> c64 {
        let mut acc = ZERO;
        for s in &self.sectors {
            let o = s.op(op);
            // Tr(O X) = sum_{r,c} O[r,c] X[c,r]
            for r in 0..o.nrows {
                for k in o.indptr[r]..o.indptr[r + 1] {
                    let c = o.indices[k];
                    acc += o.values[k] * x[s.offset + c + r * s.dim];
                }
            }
        }
        acc
    }

    /// `O x` sector by sector.
    pub fn left_mul(&self, op: SpinOp, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; self.len];
        for s in &self.sectors {
            let o = s.op(op);
            for col in 0..s.dim {
                let base = s.offset + col * s.dim;
                for r in 0..s.dim {
                    let mut acc = ZERO;
                    for k in o.indptr[r]..o.indptr[r + 1] {
                        acc += o.values[k] * x[base + o.indices[k]];
                    }
                    y[base + r] = acc;
                }
            }
        }
        y
    }

    /// `x O` sector by sector.
    pub fn right_mul(&self, x: &[c64], op: SpinOp) -> Vec<c64> {
        let mut y = vec![ZERO; self.len];
        for s in &self.sectors {
            let o = s.op(op);
            // (X O)[:, c] = sum_r X[:, r] O[r, c]
            for r in 0..s.dim {
                for k in o.indptr[r]..o.indptr[r + 1] {
                    let c = o.indices[k];
                    let v = o.values[k];
                    for i in 0..s.dim {
                        y[s.offset + i + c * s.dim] += x[s.offset + i + r * s.dim] * v;
                    }
                }
            }
        }
        y
    }

    /// Replaces every block by its Hermitian part.
    pub fn hermitize(&self, x: &mut [c64]) {
        for s in &self.sectors {
            for c in 0..s.dim {
                for r in 0..=c {
                    let a = s.offset + r + c * s.dim;
                    let b = s.offset + c + r * s.dim;
                    let h = (x[a] + x[b].conj()) * 0.5;
                    x[a] = h;
                    x[b] = h.conj();
                }
            }
        }
    }

    /// Smallest eigenvalue over all Hermitian blocks.
    pub fn min_eigenvalue(&self, x: &[c64]) -> Result<f64> {
        let mut m = f64::INFINITY;
        for i in 0..self.sectors.len() {
            let b = self.block(x, i);
            if let Some(&v) = linalg::eigvalsh(&b)?.first() {
                m = m.min(v);
            }
        }
        Ok(m)
    }

    /// Embeds a maximal-sector density matrix.
    pub fn embed_maximal(&self, rho: &DensityMatrix) -> Result<Vec<c64>> {
        if rho.dim() != self.max_dim() {
            return Err(Error::Dimension { expected: self.max_dim(), got: rho.dim() });
        }
        let mut x = vec![ZERO; self.len];
        self.set_block(&mut x, 0, rho.data());
        Ok(x)
    }
}

/// Liouvillian acting on vectorized states of a [`StateSpace`].
#[derive(Clone, Debug)]
pub struct SuperOperator {
    pub space: Arc<StateSpace>,
    pub mat: Csr,
    pub params: ModelParams,
}

impl SuperOperator {
    /// Vector length the operator acts on.
    pub fn len(&self) -> usize {
        self.mat.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.mat.nrows == 0
    }

    /// Hilbert dimension of the maximal sector.
    pub fn dim(&self) -> usize {
        self.space.max_dim()
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        self.mat.matvec(x)
    }

    pub fn to_dense(&self) -> CMat {
        self.mat.to_dense()
    }

    /// Row vector of the trace functional applied from the left, `vec(1)^T L`.
    pub fn trace_row(&self) -> Vec<c64> {
        let mut t = vec![ZERO; self.len()];
        for i in self.space.diagonal_indices() {
            t[i] = ONE;
        }
        self.mat.vecmat(&t)
    }
}

/// Generic Lindblad superoperator for Hamiltonian `h` and jump operators
/// `(rate, A)`, column-stacking convention.
pub fn lindblad_superop(h: &Csr, jumps: &[(f64, Csr)]) -> Csr {
    let d = h.nrows;
    let id = Csr::identity(d);
    let mut l = id.kron(h).add(&h.transpose().kron(&id).scaled(cr(-1.0))).scaled(-I);
    for (rate, a) in jumps {
        if *rate == 0.0 {
            continue;
        }
        let ada = a.adjoint().mul(a);
        let term = a
            .conj()
            .kron(a)
            .add(&id.kron(&ada).scaled(cr(-0.5)))
            .add(&ada.transpose().kron(&id).scaled(cr(-0.5)));
        l = l.add(&term.scaled(cr(*rate)));
    }
    l
}

/// Collective Liouvillian on one sector with the given spin operators.
pub(crate) fn collective_block(sec: &Sector, omega: f64, gamma: f64) -> Csr {
    let h = sec.op(SpinOp::X).scaled(cr(omega));
    lindblad_superop(&h, &[(gamma, sec.op(SpinOp::Minus).clone())])
}

/// Collective Liouvillian on the maximal sector. A non-zero local rate is
/// ignored here; the local channel lives in [`crate::permsym`].
pub fn build_liouvillian(params: &ModelParams) -> Result<SuperOperator> {
    params.validate()?;
    let space = StateSpace::collective(params.n);
    let mat = collective_block(&space.sectors[0], params.omega, params.gamma_coll);
    Ok(SuperOperator { space: Arc::new(space), mat, params: *params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n1_has_spin_half_sz() {
        let o = build_collective_ops(1).unwrap();
        assert_eq!(o.s_z[(0, 0)], cr(0.5));
        assert_eq!(o.s_z[(1, 1)], cr(-0.5));
    }

    #[test]
    fn n2_ladder_element() {
        let o = build_collective_ops(2).unwrap();
        // <1,0|S+|1,-1>: rows/cols ordered m = 1, 0, -1
        assert!((o.s_plus[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_particles_rejected() {
        assert!(build_collective_ops(0).is_err());
        assert!(ModelParams::new(0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(3, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn critical_drive_values() {
        assert_eq!(omega_c(&ModelParams::new(10, 0.0, 1.0, 0.0).unwrap()), 5.0);
        assert_eq!(omega_c(&ModelParams::new(1, 0.0, 2.0, 0.0).unwrap()), 1.0);
        assert_eq!(omega_c(&ModelParams::new(50, 0.0, 0.5, 0.0).unwrap()), 12.5);
    }

    #[test]
    fn mean_field_frequency_values() {
        let p = ModelParams::from_ratios(10, 2.0, 0.0).unwrap();
        assert!((mean_field_frequency(&p).unwrap() - 3f64.sqrt() * 5.0).abs() < 1e-12);
        let p = ModelParams::from_ratios(10, 2f64.sqrt(), 0.0).unwrap();
        assert!((mean_field_frequency(&p).unwrap() - 5.0).abs() < 1e-12);
        let p = ModelParams::from_ratios(10, 1.0 + 1e-9, 0.0).unwrap();
        assert!(mean_field_frequency(&p).unwrap() < 1e-3);
        assert!(mean_field_frequency(&ModelParams::from_ratios(10, 1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn trace_row_vanishes() {
        let p = ModelParams::from_ratios(6, 1.3, 0.0).unwrap();
        let l = build_liouvillian(&p).unwrap();
        assert!(linalg::norm_inf(&l.trace_row()) < 1e-10);
    }

    #[test]
    fn single_spin_decay_spectrum() {
        let p = ModelParams::new(1, 0.0, 1.0, 0.0).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let mut ev = linalg::eigvals(&l.to_dense()).unwrap();
        ev.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
        let expect = [0.0, -0.5, -0.5, -1.0];
        for (e, x) in ev.iter().zip(expect) {
            assert!((e.re - x).abs() < 1e-12 && e.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dark_state_is_stationary() {
        let p = ModelParams::new(7, 0.0, 1.0, 0.0).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let g = DensityMatrix::ground(7).to_vec();
        assert_eq!(linalg::norm_inf(&l.apply(&g)), 0.0);
    }

    #[test]
    fn left_right_mul_match_dense() {
        let space = StateSpace::collective(3);
        let o = build_collective_ops(3).unwrap();
        let x: Vec<c64> = (0..16).map(|i| c64::new(i as f64, 0.5 * i as f64)).collect();
        let xm = linalg::unvec(&x, 4);
        let l = linalg::vec_cols(&(&o.s_minus * &xm));
        let r = linalg::vec_cols(&(&xm * &o.s_plus));
        assert!(space.left_mul(SpinOp::Minus, &x).iter().zip(&l).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(space.right_mul(&x, SpinOp::Plus).iter().zip(&r).all(|(a, b)| (a - b).norm() < 1e-12));
        let e = linalg::trace_prod(&o.s_x, &xm);
        assert!((space.expect(SpinOp::X, &x) - e).norm() < 1e-12);
    }
}
