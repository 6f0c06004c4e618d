use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor3;

/// Separable 3D FFT over a tensor in storage order.
#[derive(Clone)]
pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, forward, inverse }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform scaled by `1/N`, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        assert_eq!(data.len(), self.dims.iter().product::<usize>());
        let [n1, n2, n3] = self.dims;
        if n1 > 1 {
            plans[0].process(data);
        }
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        for (mode, &n) in [(1usize, &n2), (2, &n3)] {
            if n <= 1 {
                continue;
            }
            let s: usize = self.dims[..mode].iter().product();
            let block = s * n;
            // gather: each (outer, inner) line becomes contiguous
            let mut w = 0;
            for outer in 0..data.len() / block {
                for inner in 0..s {
                    for k in 0..n {
                        lines[w] = data[outer * block + k * s + inner];
                        w += 1;
                    }
                }
            }
            plans[mode].process(&mut lines);
            let mut r = 0;
            for outer in 0..data.len() / block {
                for inner in 0..s {
                    for k in 0..n {
                        data[outer * block + k * s + inner] = lines[r];
                        r += 1;
                    }
                }
            }
        }
    }
}

/// Eigenvalues of `D*D` in the 3D Fourier basis,
/// `T = |fftn(d1)|² + |fftn(d2)|² + |fftn(d3)|²`, with `d_n` the difference
/// kernels (`+1` at the origin, `-1` one step along mode `n`) zero-padded to the
/// tensor dims. Cached per dims and reused across iterations.
#[derive(Clone, Debug)]
pub struct FreqKernel {
    dims: [usize; 3],
    values: Vec<f64>,
    fft: Fft3,
}

impl FreqKernel {
    pub fn new(dims: [usize; 3]) -> Self {
        let fft = Fft3::new(dims);
        let len: usize = dims.iter().product();
        let mut values = vec![0.0; len];
        for mode in 0..3 {
            let mut kernel = vec![Complex64::new(0.0, 0.0); len];
            kernel[0] += 1.0;
            let step: usize = dims[..mode].iter().product();
            // one step along `mode`; wraps onto the origin when that mode has length 1
            let idx = if dims[mode] > 1 { step } else { 0 };
            kernel[idx] -= 1.0;
            fft.forward(&mut kernel);
            for (v, k) in values.iter_mut().zip(&kernel) {
                *v += k.norm_sqr();
            }
        }
        Self { dims, values, fft }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }
}

/// Solves `(μI + μD*D) Z = H` by diagonalizing `D*D` with the 3D FFT.
pub fn solve_z(h: &ComplexTensor3, mu: f64, kernel: &FreqKernel) -> Result<ComplexTensor3> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive and finite, got {mu}")));
    }
    if h.dims() != kernel.dims {
        return Err(Error::invalid(format!("kernel dims {:?} do not match tensor dims {:?}", kernel.dims, h.dims())));
    }
    let mut z = h.clone();
    let buf = z.as_mut_slice();
    kernel.fft.forward(buf);
    for (v, t) in buf.iter_mut().zip(&kernel.values) {
        *v /= mu + mu * t;
    }
    kernel.fft.inverse(buf);
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{diff, diff_adjoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> ComplexTensor3 {
        ComplexTensor3::from_fn(dims, |_, _, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Direct O(N²) DFT along all modes.
    fn naive_dft3(t: &ComplexTensor3) -> ComplexTensor3 {
        let [n1, n2, n3] = t.dims();
        ComplexTensor3::from_fn([n1, n2, n3], |k1, k2, k3| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    for i1 in 0..n1 {
                        let ph = -2.0
                            * PI
                            * ((k1 * i1) as f64 / n1 as f64
                                + (k2 * i2) as f64 / n2 as f64
                                + (k3 * i3) as f64 / n3 as f64);
                        acc += t[(i1, i2, i3)] * Complex64::from_polar(1.0, ph);
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn fft3_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dims in [[3, 4, 5], [1, 6, 2], [5, 1, 1], [2, 3, 1]] {
            let t = random(&mut rng, dims);
            let plan = Fft3::new(dims);
            let mut fast = t.clone();
            plan.forward(fast.as_mut_slice());
            let slow = naive_dft3(&t);
            assert!(fast.distance(&slow).unwrap() < 1e-10 * slow.frobenius_norm());
            plan.inverse(fast.as_mut_slice());
            assert!(fast.distance(&t).unwrap() < 1e-12 * t.frobenius_norm());
        }
    }

    #[test]
    fn kernel_matches_closed_form() {
        let dims = [4, 5, 3];
        let k = FreqKernel::new(dims);
        let t = ComplexTensor3::from_vec(dims, k.values().iter().map(|&v| Complex64::new(v, 0.0)).collect()).unwrap();
        for k3 in 0..3 {
            for k2 in 0..5 {
                for k1 in 0..4 {
                    let expect = (2.0 - 2.0 * (2.0 * PI * k1 as f64 / 4.0).cos())
                        + (2.0 - 2.0 * (2.0 * PI * k2 as f64 / 5.0).cos())
                        + (2.0 - 2.0 * (2.0 * PI * k3 as f64 / 3.0).cos());
                    assert!((t[(k1, k2, k3)].re - expect).abs() < 1e-12);
                }
            }
        }
        assert_eq!(k.values()[0], 0.0);
        assert!(k.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn constant_right_hand_side() {
        let mu = 0.37;
        let c = Complex64::new(1.5, -0.5);
        let dims = [3, 4, 2];
        let h = ComplexTensor3::filled(dims, c * mu);
        let z = solve_z(&h, mu, &FreqKernel::new(dims)).unwrap();
        for v in z.as_slice() {
            assert!((v - c).norm() < 1e-13);
        }
    }

    #[test]
    fn round_trip_through_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = [5, 6, 4];
        let kernel = FreqKernel::new(dims);
        for mu in [1e-2, 1.0, 250.0] {
            let z = random(&mut rng, dims);
            let dd = diff_adjoint(&diff(&z));
            let h = z.zip_map(&dd, |a, b| mu * a + mu * b).unwrap();
            let back = solve_z(&h, mu, &kernel).unwrap();
            assert!(back.distance(&z).unwrap() <= 1e-8 * z.frobenius_norm());
        }
    }

    #[test]
    fn rejects_bad_mu_and_dims() {
        let h = ComplexTensor3::zeros([2, 2, 2]);
        let k = FreqKernel::new([2, 2, 2]);
        assert!(solve_z(&h, 0.0, &k).is_err());
        assert!(solve_z(&h, -1.0, &k).is_err());
        assert!(solve_z(&h, f64::NAN, &k).is_err());
        assert!(solve_z(&h, 1.0, &FreqKernel::new([2, 2, 3])).is_err());
    }
}
