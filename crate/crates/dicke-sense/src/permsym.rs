//! Local (single-site) decay on permutation-symmetric states.
//!
//! A permutation-invariant N-qubit state is block diagonal over total spin
//! `j`, each block acting as `W_j ⊗ 1_{d_j} / d_j` where `d_j` is the number
//! of copies of spin `j`. Only the `W_j` are stored; each carries the
//! physical weight of its sector, so the plain sum of block traces is one.
//!
//! The brute-force full-register oracle at the end of this module evolves
//! all `2^N` amplitudes with per-site dissipators and is used to validate
//! the block construction.

use std::sync::Arc;

use crate::dicke::{collective_block, lindblad_superop, DensityMatrix, ModelParams, Sector, SpinOp, StateSpace, SuperOperator};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, cr, CMat, Csr, ExpmvOp, SparseLu, ONE, ZERO};

/// Default largest particle number for the ladder representation.
pub const DEFAULT_MAX_N: usize = 40;
/// Largest register size for the full-register oracle.
pub const ORACLE_MAX_N: usize = 8;

/// `<j m; 1 -1 | j' m-1>` for `j' = j + dj`, `dj ∈ {-1, 0, 1}`.
pub fn cg_lowering(j: f64, m: f64, dj: i32) -> f64 {
    let v = match dj {
        1 => (j - m + 1.0) * (j - m + 2.0) / ((2.0 * j + 1.0) * (2.0 * j + 2.0)),
        0 => {
            if j == 0.0 {
                0.0
            } else {
                (j + m) * (j - m + 1.0) / (2.0 * j * (j + 1.0))
            }
        }
        -1 => {
            if j == 0.0 {
                0.0
            } else {
                (j + m - 1.0) * (j + m) / (2.0 * j * (2.0 * j + 1.0))
            }
        }
        _ => 0.0,
    };
    v.max(0.0).sqrt()
}

/// Weight of the `j -> j + dj` branch of the summed single-site jump, in the
/// physical-weight convention.
fn branch_weight(n: usize, j: f64, dj: i32) -> f64 {
    let h = n as f64 / 2.0;
    match dj {
        1 => h - j,
        0 => h + 1.0,
        _ => h + j + 1.0,
    }
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Number of copies of spin `j = twice_j / 2` among `n` spin-1/2 particles.
pub fn degeneracy(n: usize, twice_j: usize) -> f64 {
    assert!(twice_j <= n && (n - twice_j) % 2 == 0);
    let a = (n + twice_j) / 2 + 1;
    let b = (n - twice_j) / 2;
    ((twice_j + 1) as f64).ln().exp() * (ln_factorial(n) - ln_factorial(a) - ln_factorial(b)).exp()
}

/// Jump map from sector `src` into sector `dst` as a rectangular matrix
/// `B` with `W_dst += B W_src B†`.
fn jump_matrix(n: usize, src: &Sector, dst: &Sector) -> Csr {
    let j = src.j();
    let jd = dst.j();
    let dj = (dst.twice_j as i32 - src.twice_j as i32) / 2;
    let a = branch_weight(n, j, dj).sqrt();
    let mut t = Vec::new();
    for k in 0..src.dim {
        let m = j - k as f64;
        let m_new = m - 1.0;
        if m_new < -jd - 1e-9 || m_new > jd + 1e-9 {
            continue;
        }
        let kd = (jd - m_new).round() as usize;
        let c = a * cg_lowering(j, m, dj);
        if c != 0.0 {
            t.push((kd, k, cr(c)));
        }
    }
    Csr::from_triplets(dst.dim, src.dim, t)
}

fn place(t: &mut Vec<(usize, usize, c64)>, blk: &Csr, r0: usize, c0: usize) {
    t.extend(blk.triplets().into_iter().map(|(r, c, v)| (r + r0, c + c0, v)));
}

/// Generator of collective plus local decay on the full sector ladder, with
/// a configurable size guard.
pub fn build_permsym_liouvillian_guarded(params: &ModelParams, max_n: usize) -> Result<SuperOperator> {
    params.validate()?;
    if params.n > max_n {
        return Err(Error::Guard { what: "particle count", value: params.n, limit: max_n });
    }
    let space = StateSpace::ladder(params.n);
    let n = params.n;
    let gl = params.gamma_loc;
    let mut t = Vec::new();
    for (si, s) in space.sectors.iter().enumerate() {
        let mut blk = collective_block(s, params.omega, params.gamma_coll);
        if gl > 0.0 {
            // -(γ/2){N/2 + S_z, W}
            let id = Csr::identity(s.dim);
            let a = id.scaled(cr(n as f64 / 2.0)).add(s.op(SpinOp::Z));
            let anti = id.kron(&a).add(&a.transpose().kron(&id)).scaled(cr(-0.5 * gl));
            blk = blk.add(&anti);
        }
        place(&mut t, &blk, s.offset, s.offset);
        if gl > 0.0 {
            for di in [-1i64, 0, 1] {
                let di2 = si as i64 + di;
                if di2 < 0 || di2 as usize >= space.sectors.len() {
                    continue;
                }
                let d = &space.sectors[di2 as usize];
                let b = jump_matrix(n, s, d);
                if b.nnz() == 0 {
                    continue;
                }
                let sup = b.conj().kron(&b).scaled(cr(gl));
                place(&mut t, &sup, d.offset, s.offset);
            }
        }
    }
    let mat = Csr::from_triplets(space.len(), space.len(), t);
    Ok(SuperOperator { space: Arc::new(space), mat, params: *params })
}

pub fn build_permsym_liouvillian(params: &ModelParams) -> Result<SuperOperator> {
    build_permsym_liouvillian_guarded(params, DEFAULT_MAX_N)
}

/// Block-diagonal state over all total-spin sectors.
#[derive(Clone, Debug)]
pub struct DickeLadderState {
    pub space: Arc<StateSpace>,
    pub data: Vec<c64>,
}

impl DickeLadderState {
    /// Embeds a maximal-sector state.
    pub fn from_maximal(space: Arc<StateSpace>, rho: &DensityMatrix) -> Result<Self> {
        let data = space.embed_maximal(rho)?;
        Ok(DickeLadderState { space, data })
    }

    pub fn ground(space: Arc<StateSpace>) -> Self {
        let n = space.n;
        Self::from_maximal(space, &DensityMatrix::ground(n)).expect("ground state fits the maximal sector")
    }

    pub fn trace(&self) -> f64 {
        self.space.trace(&self.data).re
    }

    /// Physical weight of each sector, maximal `j` first.
    pub fn sector_weights(&self) -> Vec<f64> {
        self.space.sector_traces(&self.data)
    }

    pub fn expect(&self, op: SpinOp) -> c64 {
        self.space.expect(op, &self.data)
    }

    pub fn block(&self, s: usize) -> CMat {
        self.space.block(&self.data, s)
    }

    /// Rows `(j, m, m', re, im)`.
    pub fn csv_rows(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let mut rows = Vec::new();
        for (si, s) in self.space.sectors.iter().enumerate() {
            let b = self.block(si);
            let j = s.j();
            for r in 0..s.dim {
                for c in 0..s.dim {
                    let z = b[(r, c)];
                    rows.push((j, j - r as f64, j - c as f64, z.re, z.im));
                }
            }
        }
        rows
    }
}

pub fn evolve_permsym(gen: &SuperOperator, state0: &DickeLadderState, t: f64) -> Result<DickeLadderState> {
    let data = dynamics::evolve_vec(gen, &state0.data, t)?;
    Ok(DickeLadderState { space: state0.space.clone(), data })
}

/// Full `2^N` register with explicit site operators. Site 0 is the most
/// significant bit; `|0>` is spin up.
pub struct FullRegister {
    pub n: usize,
    pub dim: usize,
    pub sx: Csr,
    pub sy: Csr,
    pub sz: Csr,
    pub sp: Csr,
    pub sm: Csr,
    pub site_lowering: Vec<Csr>,
}

impl FullRegister {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("particle count must be at least 1".into()));
        }
        if n > ORACLE_MAX_N {
            return Err(Error::Guard { what: "oracle register size", value: n, limit: ORACLE_MAX_N });
        }
        let dim = 1usize << n;
        let lower = Csr::from_triplets(2, 2, vec![(1, 0, ONE)]);
        let id2 = Csr::identity(2);
        let site = |op: &Csr, i: usize| {
            let mut m = Csr::identity(1);
            for k in 0..n {
                m = m.kron(if k == i { op } else { &id2 });
            }
            m
        };
        let site_lowering: Vec<Csr> = (0..n).map(|i| site(&lower, i)).collect();
        let mut sm = Csr::from_triplets(dim, dim, vec![]);
        for l in &site_lowering {
            sm = sm.add(l);
        }
        let sp = sm.adjoint();
        let sx = sp.add(&sm).scaled(cr(0.5));
        let sy = sp.add(&sm.scaled(cr(-1.0))).scaled(c64::new(0.0, -0.5));
        let sz = sp.mul(&sm).add(&sm.mul(&sp).scaled(cr(-1.0))).scaled(cr(0.5));
        Ok(FullRegister { n, dim, sx, sy, sz, sp, sm, site_lowering })
    }

    /// Symmetric Dicke states `|N/2, N/2 - k>` as columns, built by repeated
    /// lowering of the all-up state.
    pub fn dicke_basis(&self) -> CMat {
        let mut out = linalg::zeros(self.dim, self.n + 1);
        let mut v = vec![ZERO; self.dim];
        v[0] = ONE;
        for k in 0..=self.n {
            let nrm = linalg::norm2(&v);
            for (i, z) in v.iter().enumerate() {
                out[(i, k)] = z / nrm;
            }
            v = self.sm.matvec(&v);
        }
        out
    }

    /// Maps a maximal-sector density matrix into the register.
    pub fn embed(&self, rho: &DensityMatrix) -> CMat {
        let b = self.dicke_basis();
        &(&b * rho.data()) * b.adjoint()
    }

    pub fn liouvillian(&self, p: &ModelParams) -> Csr {
        let h = self.sx.scaled(cr(p.omega));
        let mut jumps = vec![(p.gamma_coll, self.sm.clone())];
        if p.gamma_loc > 0.0 {
            jumps.extend(self.site_lowering.iter().map(|l| (p.gamma_loc, l.clone())));
        }
        lindblad_superop(&h, &jumps)
    }

    fn trace_with(&self, op: &Csr, x: &[c64]) -> c64 {
        let d = self.dim;
        let mut acc = ZERO;
        for r in 0..op.nrows {
            for k in op.indptr[r]..op.indptr[r + 1] {
                acc += op.values[k] * x[op.indices[k] + r * d];
            }
        }
        acc
    }

    fn left_mul(&self, op: &Csr, x: &[c64]) -> Vec<c64> {
        let d = self.dim;
        let mut y = vec![ZERO; d * d];
        for c in 0..d {
            let col = op.matvec(&x[c * d..(c + 1) * d]);
            y[c * d..(c + 1) * d].copy_from_slice(&col);
        }
        y
    }

    pub fn observables(&self, x: &[c64]) -> CollectiveObservables {
        CollectiveObservables {
            sx: self.trace_with(&self.sx, x).re,
            sy: self.trace_with(&self.sy, x).re,
            sz: self.trace_with(&self.sz, x).re,
            spm: self.trace_with(&self.sp.mul(&self.sm), x).re,
            sm: self.trace_with(&self.sm, x),
        }
    }
}

/// Collective one-time observables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectiveObservables {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub spm: f64,
    pub sm: c64,
}

impl CollectiveObservables {
    pub fn of(space: &StateSpace, x: &[c64]) -> Self {
        CollectiveObservables {
            sx: space.expect(SpinOp::X, x).re,
            sy: space.expect(SpinOp::Y, x).re,
            sz: space.expect(SpinOp::Z, x).re,
            spm: space.expect(SpinOp::PlusMinus, x).re,
            sm: space.expect(SpinOp::Minus, x),
        }
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        [
            (self.sx - o.sx).abs(),
            (self.sy - o.sy).abs(),
            (self.sz - o.sz).abs(),
            (self.spm - o.spm).abs(),
            (self.sm - o.sm).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub observables: CollectiveObservables,
    /// `<S+(tau) S->` taken at the evaluation time.
    pub correlation: Vec<c64>,
}

fn oracle_correlations(reg: &FullRegister, op: &ExpmvOp<'_>, x: &[c64], taus: &[f64]) -> Vec<c64> {
    let mut v = reg.left_mul(&reg.sm, x);
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        if tau > prev {
            v = op.apply(&v, tau - prev);
            prev = tau;
        }
        out.push(reg.trace_with(&reg.sp, &v));
    }
    out
}

/// Full-register evolution of a register state `rho0` for time `t`, then
/// correlations at lags `taus` (ascending).
pub fn brute_force_register(params: &ModelParams, rho0: &CMat, t: f64, taus: &[f64]) -> Result<OracleResult> {
    params.validate()?;
    let reg = FullRegister::new(params.n)?;
    if rho0.nrows() != reg.dim {
        return Err(Error::Dimension { expected: reg.dim, got: rho0.nrows() });
    }
    let l = reg.liouvillian(params);
    let op = ExpmvOp::new(&l);
    let x = op.apply(&linalg::vec_cols(rho0), t);
    Ok(OracleResult { observables: reg.observables(&x), correlation: oracle_correlations(&reg, &op, &x, taus) })
}

/// Oracle for a symmetric (maximal-sector) initial state.
pub fn brute_force_oracle(params: &ModelParams, rho0: &DensityMatrix, t: f64, taus: &[f64]) -> Result<OracleResult> {
    let reg = FullRegister::new(params.n)?;
    if rho0.dim() != params.n + 1 {
        return Err(Error::Dimension { expected: params.n + 1, got: rho0.dim() });
    }
    brute_force_register(params, &reg.embed(rho0), t, taus)
}

/// Stationary observables of the full register. Up to four sites the null
/// vector comes from a dense eigendecomposition; beyond that from a pinned
/// sparse solve.
pub fn brute_force_stationary(params: &ModelParams, taus: &[f64]) -> Result<OracleResult> {
    params.validate()?;
    let reg = FullRegister::new(params.n)?;
    let l = reg.liouvillian(params);
    let d = reg.dim;
    let mut x = if params.n <= 4 {
        let (vals, vecs) = linalg::eig(&l.to_dense())?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].norm().partial_cmp(&vals[b].norm()).unwrap());
        if vals[order[1]].norm() < 1e-9 {
            return Err(Error::Degenerate("full-register Liouvillian has several stationary states".into()));
        }
        (0..l.nrows).map(|i| vecs[(i, order[0])]).collect::<Vec<c64>>()
    } else {
        let mut t: Vec<_> = l.triplets().into_iter().filter(|&(r, _, _)| r != 0).collect();
        t.extend((0..d).map(|k| (0, k + k * d, ONE)));
        let lu = SparseLu::new(&Csr::from_triplets(l.nrows, l.ncols, t))?;
        let mut b = vec![ZERO; l.nrows];
        b[0] = ONE;
        lu.solve(&b)
    };
    let tr: c64 = (0..d).map(|k| x[k + k * d]).sum();
    for z in x.iter_mut() {
        *z /= tr;
    }
    let op = ExpmvOp::new(&l);
    Ok(OracleResult { observables: reg.observables(&x), correlation: oracle_correlations(&reg, &op, &x, taus) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_weights_preserve_trace() {
        for n in 1..12usize {
            let mut tj = n as i64;
            while tj >= 0 {
                let j = tj as f64 / 2.0;
                let mut m = j;
                while m >= -j {
                    let gain: f64 = [-1, 0, 1]
                        .into_iter()
                        .filter(|&dj| j + dj as f64 >= 0.0 && j + (dj as f64) <= n as f64 / 2.0)
                        .map(|dj| branch_weight(n, j, dj) * cg_lowering(j, m, dj).powi(2))
                        .sum();
                    let loss = n as f64 / 2.0 + m;
                    assert!((gain - loss).abs() < 1e-12, "n={n} j={j} m={m}: {gain} vs {loss}");
                    m -= 1.0;
                }
                tj -= 2;
            }
        }
    }

    #[test]
    fn degeneracies_count_states() {
        for n in 1..16usize {
            let mut total = 0.0;
            let mut tj = n as i64;
            while tj >= 0 {
                total += degeneracy(n, tj as usize) * (tj as f64 + 1.0);
                tj -= 2;
            }
            assert!((total - 2f64.powi(n as i32)).abs() < 1e-6 * total);
        }
    }

    #[test]
    fn single_atom_rates_add() {
        let p = ModelParams::new(1, 0.0, 1.0, 0.3).unwrap();
        let l = build_permsym_liouvillian(&p).unwrap();
        // excited population decays at Γ + γ
        let x0 = vec![ONE, ZERO, ZERO, ZERO];
        let y = l.apply(&x0);
        assert!((y[0].re + 1.3).abs() < 1e-14);
        assert!((y[3].re - 1.3).abs() < 1e-14);
    }

    #[test]
    fn guard() {
        let p = ModelParams::from_ratios(41, 1.0, 0.1).unwrap();
        assert!(matches!(build_permsym_liouvillian(&p), Err(Error::Guard { .. })));
        assert!(FullRegister::new(9).is_err());
    }
}
