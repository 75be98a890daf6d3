//! Dense and sparse complex linear algebra used throughout the crate.
//!
//! Dense matrices are `faer::Mat<c64>`. Superoperators are stored as [`Csr`]
//! and converted to dense form only for spectral work and small oracles.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};

pub use faer::c64;

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

#[inline]
pub fn cr(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn dagger(a: &CMat) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn transpose(a: &CMat) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn conj(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn scale(a: &CMat, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add_scaled(a: &CMat, b: &CMat, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)] * s)
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

/// `a * x * b^dagger`
pub fn sandwich(a: &CMat, x: &CMat, b: &CMat) -> CMat {
    let ax = a * x;
    &ax * b.adjoint()
}

pub fn trace(a: &CMat) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Tr(a b) without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> c64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    let ab = a * b;
    let ba = b * a;
    &ab - &ba
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// Induced 1-norm (max column sum).
pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Column-stacking vectorization.
pub fn vec_cols(a: &CMat) -> Vec<c64> {
    let mut v = Vec::with_capacity(a.nrows() * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v.push(a[(i, j)]);
        }
    }
    v
}

pub fn unvec(v: &[c64], d: usize) -> CMat {
    assert_eq!(v.len(), d * d, "vector length is not a square");
    Mat::from_fn(d, d, |i, j| v[i + j * d])
}

/// Eigen-decomposition of the Hermitian part of `a`; eigenvalues ascending.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitian_part(a);
    let e = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver failed on {}x{}: {e:?}", a.nrows(), a.ncols())))?;
    let s = e.S();
    let vals: Vec<f64> = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>> {
    Ok(eigh(a)?.0)
}

/// Square root of a positive semidefinite matrix. Eigenvalues below zero are
/// clipped; anything below `-tol` is reported as an error.
pub fn sqrt_psd(a: &CMat, tol: f64) -> Result<CMat> {
    let (w, v) = eigh(a)?;
    if let Some(&m) = w.first() {
        if m < -tol {
            return Err(Error::NotPositive { min_eig: m, tol });
        }
    }
    let n = a.nrows();
    let vs = Mat::from_fn(n, n, |i, j| v[(i, j)] * w[j].max(0.0).sqrt());
    Ok(&vs * v.adjoint())
}

/// Projects a Hermitian matrix onto unit-trace PSD matrices by clipping
/// negative eigenvalues. Returns the projected matrix and the clipped weight.
pub fn project_psd(a: &CMat) -> Result<(CMat, f64)> {
    let (w, v) = eigh(a)?;
    let clipped: f64 = w.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    let wp: Vec<f64> = w.iter().map(|&x| x.max(0.0)).collect();
    let tr: f64 = wp.iter().sum();
    if tr <= 0.0 {
        return Err(Error::Numerical("no positive weight left after clipping".into()));
    }
    let n = a.nrows();
    let vs = Mat::from_fn(n, n, |i, j| v[(i, j)] * (wp[j] / tr));
    Ok((&vs * v.adjoint(), clipped))
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::Numerical(format!("svd failed on {}x{}: {e:?}", a.nrows(), a.ncols())))
}

pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

/// Eigenvalues and right eigenvectors of a general square matrix.
pub fn eig(a: &CMat) -> Result<(Vec<c64>, CMat)> {
    let e = a
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigensolver failed to converge on {}x{}: {e:?}", a.nrows(), a.ncols())))?;
    let s = e.S();
    Ok(((0..a.nrows()).map(|i| s[i]).collect(), e.U().to_owned()))
}

pub fn eigvals(a: &CMat) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigensolver failed to converge on {}x{}: {e:?}", a.nrows(), a.ncols())))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let theta13 = 5.371920351148152;
    let nrm = norm1(a);
    let s = if nrm > theta13 { (nrm / theta13).log2().ceil() as i32 } else { 0 };
    let a = scale(a, cr(0.5f64.powi(s)));
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c6 + a4[(i, j)] * c4 + a2[(i, j)] * c2 + id[(i, j)] * c0
        })
    };
    let u_inner = &a6 * &lin(b[13], b[11], b[9], 0.0);
    let u_sum = &u_inner + &lin(b[7], b[5], b[3], b[1]);
    let u = &a * &u_sum;
    let v_inner = &a6 * &lin(b[12], b[10], b[8], 0.0);
    let v = &v_inner + &lin(b[6], b[4], b[2], b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `a^k` by binary powering.
pub fn mat_pow(a: &CMat, mut k: u64) -> CMat {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    let mut first = true;
    while k > 0 {
        if k & 1 == 1 {
            result = if first { base.clone() } else { &result * &base };
            first = false;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

pub fn matvec(a: &CMat, x: &[c64]) -> Vec<c64> {
    let mut y = vec![ZERO; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == ZERO {
            continue;
        }
        for i in 0..a.nrows() {
            y[i] += a[(i, j)] * xj;
        }
    }
    y
}

pub fn norm_inf(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn norm2(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<c64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, c64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<c64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Csr { nrows, ncols, indptr, indices, values };
        m.prune(0.0);
        m
    }

    pub fn from_dense(a: &CMat, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)].norm() > drop_tol {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Csr::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn identity(n: usize) -> Self {
        Csr::from_triplets(n, n, (0..n).map(|i| (i, i, ONE)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn prune(&mut self, tol: f64) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k].norm() > tol {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn triplets(&self) -> Vec<(usize, usize, c64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                t.push((r, self.indices[k], self.values[k]));
            }
        }
        t
    }

    pub fn to_dense(&self) -> CMat {
        let mut a = zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            a[(r, c)] += v;
        }
        a
    }

    pub fn matvec_into(&self, x: &[c64], y: &mut [c64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for r in 0..self.nrows {
            let mut s = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[r] = s;
        }
    }

    pub fn matvec(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `x^T A` for a row vector `x`.
    pub fn vecmat(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; self.ncols];
        for r in 0..self.nrows {
            if x[r] == ZERO {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += x[r] * self.values[k];
            }
        }
        y
    }

    pub fn scaled(&self, s: c64) -> Csr {
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= s;
        }
        m
    }

    pub fn add(&self, other: &Csr) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets());
        Csr::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn mul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (c, v) = (self.indices[k], self.values[k]);
                for q in other.indptr[c]..other.indptr[c + 1] {
                    t.push((r, other.indices[q], v * other.values[q]));
                }
            }
        }
        Csr::from_triplets(self.nrows, other.ncols, t)
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(self.ncols, self.nrows, self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect())
    }

    pub fn conj(&self) -> Csr {
        let mut m = self.clone();
        for v in &mut m.values {
            *v = v.conj();
        }
        m
    }

    pub fn adjoint(&self) -> Csr {
        self.transpose().conj()
    }

    pub fn kron(&self, other: &Csr) -> Csr {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        Csr::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, t)
    }

    pub fn diagonal(&self) -> Vec<c64> {
        let mut d = vec![ZERO; self.nrows.min(self.ncols)];
        for r in 0..d.len() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.ncols];
        for k in 0..self.nnz() {
            col[self.indices[k]] += self.values[k].norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn shifted(&self, mu: c64) -> Csr {
        let n = self.nrows.min(self.ncols);
        let mut t = self.triplets();
        t.extend((0..n).map(|i| (i, i, -mu)));
        Csr::from_triplets(self.nrows, self.ncols, t)
    }
}

/// Sparse LU factorization of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, c64>,
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<Self> {
        use faer::sparse::{SparseColMat, Triplet};
        let trip: Vec<Triplet<usize, usize, c64>> =
            a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, c64>::try_new_from_triplets(a.nrows, a.ncols, &trip)
            .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))?;
        let lu = m
            .sp_lu()
            .map_err(|e| Error::Numerical(format!("sparse LU failed on dimension {}: {e:?}", a.nrows)))?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[c64]) -> Vec<c64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Backward-error thresholds for the truncated Taylor series used by
/// [`expmv`], indexed by degree (double precision).
const THETA: [(usize, f64); 35] = [
    (1, 2.29e-16),
    (2, 2.58e-8),
    (3, 1.39e-5),
    (4, 3.40e-4),
    (5, 2.40e-3),
    (6, 9.07e-3),
    (7, 2.38e-2),
    (8, 5.00e-2),
    (9, 8.96e-2),
    (10, 1.44e-1),
    (11, 2.14e-1),
    (12, 3.00e-1),
    (13, 4.00e-1),
    (14, 5.14e-1),
    (15, 6.41e-1),
    (16, 7.81e-1),
    (17, 9.31e-1),
    (18, 1.09),
    (19, 1.26),
    (20, 1.44),
    (21, 1.62),
    (22, 1.82),
    (23, 2.01),
    (24, 2.22),
    (25, 2.43),
    (26, 2.64),
    (27, 2.86),
    (28, 3.08),
    (29, 3.31),
    (30, 3.54),
    (35, 4.7),
    (40, 6.0),
    (45, 7.2),
    (50, 8.5),
    (55, 9.9),
];

/// Taylor degree and number of substeps for `exp(t A) v` given `||t A||_1`.
pub fn taylor_plan(norm_ta: f64) -> (usize, usize) {
    if norm_ta == 0.0 {
        return (0, 1);
    }
    let mut best = (0usize, 0usize, usize::MAX);
    for &(m, th) in THETA.iter() {
        let s = (norm_ta / th).ceil().max(1.0) as usize;
        let cost = m * s;
        if cost < best.2 {
            best = (m, s, cost);
        }
    }
    (best.0, best.1)
}

/// Sparse matrix exponential action `exp(t A) v` (truncated Taylor with
/// substepping and a trace shift).
pub struct ExpmvOp<'a> {
    a: &'a Csr,
    mu: c64,
    shifted: Csr,
    norm: f64,
}

impl<'a> ExpmvOp<'a> {
    pub fn new(a: &'a Csr) -> Self {
        let n = a.nrows as f64;
        let mu = a.diagonal().iter().sum::<c64>() / n;
        let shifted = a.shifted(mu);
        let norm = shifted.norm1();
        ExpmvOp { a, mu, shifted, norm }
    }

    pub fn matrix(&self) -> &Csr {
        self.a
    }

    pub fn plan(&self, t: f64) -> (usize, usize) {
        taylor_plan(self.norm * t.abs())
    }

    pub fn apply(&self, v: &[c64], t: f64) -> Vec<c64> {
        let plan = self.plan(t);
        self.apply_with_plan(v, t, plan)
    }

    pub fn apply_with_plan(&self, v: &[c64], t: f64, (m, s): (usize, usize)) -> Vec<c64> {
        if t == 0.0 || m == 0 {
            let eta = (self.mu * t).exp();
            return v.iter().map(|x| x * eta).collect();
        }
        let tol = f64::EPSILON / 2.0;
        let eta = (self.mu * (t / s as f64)).exp();
        let mut f = v.to_vec();
        let mut b = v.to_vec();
        let mut tmp = vec![ZERO; v.len()];
        for _ in 0..s {
            let mut c1 = norm_inf(&b);
            for j in 1..=m {
                self.shifted.matvec_into(&b, &mut tmp);
                let coef = t / (s as f64 * j as f64);
                for (bi, ti) in b.iter_mut().zip(tmp.iter()) {
                    *bi = ti * coef;
                }
                let c2 = norm_inf(&b);
                for (fi, bi) in f.iter_mut().zip(b.iter()) {
                    *fi += bi;
                }
                if c1 + c2 <= tol * norm_inf(&f) {
                    break;
                }
                c1 = c2;
            }
            for fi in f.iter_mut() {
                *fi *= eta;
            }
            b.copy_from_slice(&f);
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mat(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        Mat::from_fn(n, n, |_, _| c64::new(next(), next()))
    }

    #[test]
    fn expm_of_diagonal() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { cr(i as f64 - 1.0) * 3.0 } else { ZERO });
        let e = expm(&a);
        for i in 0..3 {
            assert!((e[(i, i)].re - (3.0 * (i as f64 - 1.0)).exp()).abs() < 1e-12 * e[(i, i)].re.max(1.0));
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        // exp(theta * [[0,-1],[1,0]]) is a rotation.
        let th = 7.3;
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => cr(-th),
            (1, 0) => cr(th),
            _ => ZERO,
        });
        let e = expm(&a);
        assert!((e[(0, 0)].re - th.cos()).abs() < 1e-12);
        assert!((e[(1, 0)].re - th.sin()).abs() < 1e-12);
    }

    #[test]
    fn expmv_matches_dense() {
        let a = rand_mat(12, 3);
        let sp = Csr::from_dense(&scale(&a, cr(4.0)), 0.0);
        let v: Vec<c64> = (0..12).map(|i| c64::new(i as f64, 1.0)).collect();
        let dense = matvec(&expm(&scale(&a, cr(4.0 * 0.7))), &v);
        let op = ExpmvOp::new(&sp);
        let y = op.apply(&v, 0.7);
        let err = y.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10 * norm_inf(&dense), "err {err}");
    }

    #[test]
    fn sparse_lu_solves() {
        let a = &rand_mat(9, 11) + &scale(&identity(9), cr(3.0));
        let sp = Csr::from_dense(&a, 0.0);
        let b: Vec<c64> = (0..9).map(|i| c64::new(1.0, i as f64)).collect();
        let x = SparseLu::new(&sp).unwrap().solve(&b);
        let r = matvec(&a, &x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-12));
    }

    #[test]
    fn kron_and_vec_identity() {
        // vec(A X B) = (B^T kron A) vec(X)
        let a = rand_mat(3, 1);
        let x = rand_mat(3, 2);
        let b = rand_mat(3, 5);
        let lhs = vec_cols(&(&(&a * &x) * &b));
        let rhs = matvec(&kron(&transpose(&b), &a), &vec_cols(&x));
        assert!(lhs.iter().zip(&rhs).all(|(p, q)| (p - q).norm() < 1e-12));
    }

    #[test]
    fn mat_pow_matches_repeated_product() {
        let a = scale(&rand_mat(4, 9), cr(0.5));
        let mut r = identity(4);
        for _ in 0..13 {
            r = &r * &a;
        }
        assert!(max_abs_diff(&mat_pow(&a, 13), &r) < 1e-12);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let b = rand_mat(5, 21);
        let p = &b * b.adjoint();
        let s = sqrt_psd(&p, 1e-12).unwrap();
        assert!(max_abs_diff(&(&s * &s), &p) < 1e-12);
    }
}
