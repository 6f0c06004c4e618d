//! Linear and proximal operators used by the ADMM solvers.
//!
//! * [`diff`] / [`diff_adjoint`]: periodic first differences along each mode and their adjoint.
//! * [`FreqKernel`] / [`solve_z`]: FFT-diagonalized solve of `(μI + μD*D) Z = H`.
//! * [`svt`]: singular value thresholding of a complex matrix.
//! * [`soft_threshold`]: complex magnitude shrinkage.
//!
//! All norms are taken on complex moduli.

mod diff;
mod fft;
mod prox;

pub use diff::{diff, diff_adjoint, total_variation, DiffStack};
pub use fft::{solve_z, Fft3, FreqKernel};
pub use prox::{nuclear_norm, singular_values, soft_threshold, soft_threshold_in_place, svt};
