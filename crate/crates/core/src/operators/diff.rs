use num_complex::Complex64;

use crate::error::Result;
use crate::tensor::ComplexTensor3;

/// The three periodic difference components `[D1 z; D2 z; D3 z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffStack {
    pub components: [ComplexTensor3; 3],
}

impl DiffStack {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { components: [ComplexTensor3::zeros(dims), ComplexTensor3::zeros(dims), ComplexTensor3::zeros(dims)] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.components[0].dims()
    }

    pub fn inner(&self, other: &DiffStack) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.components.iter().zip(&other.components) {
            acc += a.inner(b)?;
        }
        Ok(acc)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.components.iter().map(ComplexTensor3::frobenius_norm_sqr).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.components.iter().map(ComplexTensor3::l1_norm).sum()
    }
}

/// Offset between neighbours along `mode` (0-based) in storage order.
fn stride(dims: [usize; 3], mode: usize) -> usize {
    dims[..mode].iter().product()
}

/// Applies `out[i] = x[i] - x[i + shift]` along `mode`, indices wrapping periodically.
/// `shift = -1` gives the backward difference, `shift = +1` the forward one.
fn periodic_delta(x: &ComplexTensor3, mode: usize, shift: isize, out: &mut [Complex64]) {
    let dims = x.dims();
    let n = dims[mode];
    let s = stride(dims, mode);
    let src = x.as_slice();
    let block = s * n;
    for (base, chunk) in out.chunks_mut(block).enumerate() {
        let offset = base * block;
        for k in 0..n {
            let nb = (k as isize + shift).rem_euclid(n as isize) as usize;
            for inner in 0..s {
                chunk[k * s + inner] = src[offset + k * s + inner] - src[offset + nb * s + inner];
            }
        }
    }
}

/// Periodic backward differences along every mode:
/// component `n` holds `z[i] - z[i - e_n]`, with index 0 wrapping to the last index.
pub fn diff(z: &ComplexTensor3) -> DiffStack {
    let dims = z.dims();
    let mut out = DiffStack::zeros(dims);
    for (mode, comp) in out.components.iter_mut().enumerate() {
        periodic_delta(z, mode, -1, comp.as_mut_slice());
    }
    out
}

/// Adjoint of [`diff`]: `Σ_n (f_n[i] - f_n[i + e_n])`.
pub fn diff_adjoint(f: &DiffStack) -> ComplexTensor3 {
    let dims = f.dims();
    let mut acc = ComplexTensor3::zeros(dims);
    let mut buf = vec![Complex64::new(0.0, 0.0); acc.len()];
    for (mode, comp) in f.components.iter().enumerate() {
        periodic_delta(comp, mode, 1, &mut buf);
        for (a, b) in acc.as_mut_slice().iter_mut().zip(&buf) {
            *a += b;
        }
    }
    acc
}

/// Anisotropic 3D total variation `Σ |D_n z|` over all entries and modes.
pub fn total_variation(z: &ComplexTensor3) -> f64 {
    diff(z).l1_norm()
}
