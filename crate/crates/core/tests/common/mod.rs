#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvlr_core::ComplexTensor3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> ComplexTensor3 {
    ComplexTensor3::from_fn(dims, |_, _, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn idx(dims: [usize; 3], i: [usize; 3]) -> usize {
    i[0] + dims[0] * (i[1] + dims[1] * i[2])
}

/// Explicit matrix of the periodic backward difference along `mode` (0-based),
/// built entry by entry from its definition.
pub fn dense_diff(dims: [usize; 3], mode: usize) -> DMatrix<Complex64> {
    let n = dims.iter().product();
    let mut d = DMatrix::zeros(n, n);
    for i3 in 0..dims[2] {
        for i2 in 0..dims[1] {
            for i1 in 0..dims[0] {
                let here = [i1, i2, i3];
                let mut prev = here;
                prev[mode] = (here[mode] + dims[mode] - 1) % dims[mode];
                let r = idx(dims, here);
                d[(r, r)] += Complex64::new(1.0, 0.0);
                d[(r, idx(dims, prev))] -= Complex64::new(1.0, 0.0);
            }
        }
    }
    d
}

/// Solves `(μI + μ Σ_n D_nᴴ D_n) z = h` with a dense LU factorization.
pub fn dense_solve_z(h: &ComplexTensor3, mu: f64) -> ComplexTensor3 {
    let dims = h.dims();
    let n = h.len();
    let mut a = DMatrix::<Complex64>::identity(n, n) * Complex64::new(mu, 0.0);
    for mode in 0..3 {
        let d = dense_diff(dims, mode);
        a += d.adjoint() * &d * Complex64::new(mu, 0.0);
    }
    let b = DVector::from_column_slice(h.as_slice());
    let z = a.lu().solve(&b).expect("operator is positive definite");
    ComplexTensor3::from_vec(dims, z.iter().copied().collect()).unwrap()
}

pub fn relative_error(a: &ComplexTensor3, reference: &ComplexTensor3) -> f64 {
    a.distance(reference).unwrap() / reference.frobenius_norm()
}
