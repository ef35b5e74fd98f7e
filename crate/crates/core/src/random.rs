//! Seeded generators for test systems, probes and matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gramian::LinearSystem;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random orthogonal matrix (QR of a uniform matrix).
pub fn orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    uniform_matrix(rng, n, n).qr().q()
}

/// Stable `(A, B)` with `A = G - (α(G) + ω₀) I` so the stability margin is
/// exactly `ω₀ ∈ [0.3, 1.5]`.
pub fn stable_system(rng: &mut impl Rng, n: usize, m: usize) -> LinearSystem {
    let g = uniform_matrix(rng, n, n) * (1.0 / (n as f64).sqrt());
    let abscissa = g
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let omega0 = rng.gen_range(0.3..1.5);
    let a = g - DMatrix::identity(n, n) * (abscissa + omega0);
    let b = uniform_matrix(rng, n, m);
    LinearSystem::new(a, b).expect("generated system is well formed")
}

/// Random stable system with `n ∈ [2, max_n]`, `m ∈ [1, max_m]`.
pub fn stable_system_sized(rng: &mut impl Rng, max_n: usize, max_m: usize) -> LinearSystem {
    let n = rng.gen_range(2..=max_n);
    let m = rng.gen_range(1..=max_m.min(n));
    stable_system(rng, n, m)
}

/// Symmetric negative definite `A` and `B` with `BB*` commuting with `A`,
/// both diagonal in a random orthonormal basis.
pub fn commuting_system(rng: &mut impl Rng, n: usize) -> LinearSystem {
    let v = orthogonal(rng, n);
    let lambdas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..4.0)).collect();
    let bs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
    let a = &v * DMatrix::from_diagonal(&DVector::from_iterator(n, lambdas.iter().map(|l| -l))) * v.transpose();
    let b = &v * DMatrix::from_diagonal(&DVector::from_iterator(n, bs.iter().map(|b| b.sqrt())));
    LinearSystem::new(crate::linalg::symmetrize(&a), b).expect("generated system is well formed")
}
