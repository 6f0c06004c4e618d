use nalgebra::SVD;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{ComplexMatrix, ComplexTensor3};

/// `(eps, max_iterations)` pairs tried in order before giving up on an SVD.
const SVD_ATTEMPTS: [(f64, usize); 3] =
    [(f64::EPSILON, 2_000), (16.0 * f64::EPSILON, 20_000), (1e3 * f64::EPSILON, 200_000)];

fn failure(m: &ComplexMatrix) -> Error {
    Error::SvdFailure {
        rows: m.nrows(),
        cols: m.ncols(),
        frobenius: m.norm(),
        max_abs: m.iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

fn decompose(m: &ComplexMatrix, vectors: bool) -> Result<SVD<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(failure(m));
    }
    for (eps, iters) in SVD_ATTEMPTS {
        if let Some(svd) = m.clone().try_svd(vectors, vectors, eps, iters) {
            return Ok(svd);
        }
        log::debug!("svd of {}x{} did not converge with eps={eps:e}, max_iter={iters}; retrying", m.nrows(), m.ncols());
    }
    Err(failure(m))
}

pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(decompose(m, false)?.singular_values.iter().copied().collect())
}

pub fn nuclear_norm(m: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Singular value thresholding `U diag(max(σ - τ, 0)) Vᴴ`, the proximal map of
/// `τ‖·‖_*`. Uses a full (not truncated) SVD.
pub fn svt(m: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid(format!("svt threshold must be >= 0, got {tau}")));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(m.clone());
    }
    let svd = decompose(m, true)?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let kept: Vec<(usize, f64)> =
        svd.singular_values.iter().enumerate().filter_map(|(i, &s)| (s > tau).then_some((i, s - tau))).collect();
    if kept.is_empty() {
        return Ok(ComplexMatrix::zeros(rows, cols));
    }
    let left = ComplexMatrix::from_fn(rows, kept.len(), |r, j| {
        let (i, shrunk) = kept[j];
        u[(r, i)] * shrunk
    });
    let right = ComplexMatrix::from_fn(kept.len(), cols, |j, col| v_t[(kept[j].0, col)]);
    Ok(left * right)
}

/// Complex soft-thresholding: each entry `a` becomes `(a/|a|)·max(|a| - τ, 0)`, with `0 ↦ 0`.
pub fn soft_threshold(t: &ComplexTensor3, tau: f64) -> ComplexTensor3 {
    let mut out = t.clone();
    soft_threshold_in_place(out.as_mut_slice(), tau);
    out
}

pub fn soft_threshold_in_place(values: &mut [Complex64], tau: f64) {
    debug_assert!(tau >= 0.0);
    for z in values.iter_mut() {
        let r = z.norm();
        *z = if r > tau { *z * ((r - tau) / r) } else { Complex64::new(0.0, 0.0) };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn diagonal_case() {
        let m = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0)]));
        let out = svt(&m, 2.0).unwrap();
        let expect = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert!((out - expect).norm() < 1e-12);
    }

    #[test]
    fn zero_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (r, k) in [(4, 7), (7, 4), (5, 5), (1, 9)] {
            let m = random_matrix(&mut rng, r, k);
            let out = svt(&m, 0.0).unwrap();
            assert!((&out - &m).norm() <= 1e-10 * m.norm());
        }
    }

    #[test]
    fn large_threshold_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(&mut rng, 6, 3);
        let smax = singular_values(&m).unwrap().into_iter().fold(0.0, f64::max);
        assert_eq!(svt(&m, smax).unwrap().norm(), 0.0);
        assert_eq!(svt(&m, smax * 3.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn negative_threshold_rejected() {
        let m = ComplexMatrix::zeros(2, 2);
        assert!(svt(&m, -1.0).is_err());
        assert!(svt(&m, f64::NAN).is_err());
    }

    #[test]
    fn non_finite_input_reports_svd_failure() {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 1)] = c(f64::INFINITY, 0.0);
        assert!(matches!(svt(&m, 0.1), Err(Error::SvdFailure { rows: 2, cols: 2, .. })));
    }

    #[test]
    fn shrinks_nuclear_norm_and_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 5, 8);
            let tau = rng.random_range(0.0..1.5);
            let sv = singular_values(&m).unwrap();
            let rank_in = sv.iter().filter(|&&s| s > 1e-12).count();
            let out = svt(&m, tau).unwrap();
            let sv_out = singular_values(&out).unwrap();
            let rank_out = sv_out.iter().filter(|&&s| s > 1e-9).count();
            assert!(rank_out <= rank_in);
            let exact: f64 = sv.iter().map(|s| (s - tau).max(0.0)).sum();
            let nuc_out: f64 = sv_out.iter().sum();
            assert!((nuc_out - exact).abs() < 1e-9);
            assert!(nuc_out <= sv.iter().sum::<f64>() - tau * rank_out as f64 + 1e-9);
        }
    }

    /// Proximal optimality checked against random perturbations: the SVT output
    /// minimizes τ‖A‖_* + ½‖A − M‖² over a grid of scaled random directions.
    #[test]
    fn svt_is_proximal_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let objective = |a: &ComplexMatrix, m: &ComplexMatrix, tau: f64| {
            tau * nuclear_norm(a).unwrap() + 0.5 * (a - m).norm_squared()
        };
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 3, 3);
            let tau = rng.random_range(0.1..1.0);
            let a = svt(&m, tau).unwrap();
            let best = objective(&a, &m, tau);
            for _ in 0..20 {
                let dir = random_matrix(&mut rng, 3, 3);
                for step in [-1.0, -0.1, -0.01, -1e-3, 1e-3, 0.01, 0.1, 1.0] {
                    let cand = &a + &dir * c(step, 0.0);
                    assert!(objective(&cand, &m, tau) >= best - 1e-10);
                }
            }
        }
    }

    #[test]
    fn soft_threshold_cases() {
        let z = Complex64::from_polar(2.0, FRAC_PI_4);
        let t = ComplexTensor3::from_vec([1, 1, 1], vec![z]).unwrap();
        let out = soft_threshold(&t, 0.5);
        assert!((out[(0, 0, 0)] - Complex64::from_polar(1.5, FRAC_PI_4)).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r =
            ComplexTensor3::from_fn([3, 2, 2], |_, _, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        assert_eq!(soft_threshold(&r, 0.0), r);
        assert_eq!(soft_threshold(&r, 2.0), ComplexTensor3::zeros([3, 2, 2]));
        assert_eq!(soft_threshold(&ComplexTensor3::zeros([1, 1, 2]), 0.3), ComplexTensor3::zeros([1, 1, 2]));
    }

    #[test]
    fn soft_threshold_shrinks_and_keeps_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let r =
            ComplexTensor3::from_fn([4, 4, 4], |_, _, _| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
        let out = soft_threshold(&r, 0.7);
        for (a, b) in r.as_slice().iter().zip(out.as_slice()) {
            assert!(b.norm() <= a.norm());
            if b.norm() > 0.0 {
                assert!((b.arg() - a.arg()).abs() < 1e-12);
            }
        }
    }
}
