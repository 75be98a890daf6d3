#![allow(dead_code)]

use dicke_sense::dicke::DensityMatrix;
use dicke_sense::linalg::{c64, CMat};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random full-rank density matrix `G G† / Tr`.
pub fn random_density(dim: usize, rng: &mut StdRng) -> DensityMatrix {
    let g = CMat::from_fn(dim, dim, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let r = &g * g.adjoint();
    let tr: c64 = (0..dim).map(|i| r[(i, i)]).sum();
    DensityMatrix::new(CMat::from_fn(dim, dim, |i, j| r[(i, j)] / tr)).unwrap()
}
