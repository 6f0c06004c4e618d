//! Dense complex 3-mode tensors.
//!
//! Storage is mode-1 fastest: entry `(i1, i2, i3)` lives at linear offset
//! `i1 + I1 * (i2 + I2 * i3)`. Every unfolding, file format and simulator in
//! this crate refers to this single layout.
//!
//! Mode-n unfoldings follow the Kolda–Bader convention: the mode-n fibers
//! become columns, and the column index cycles through the remaining indices
//! in ascending mode order with the lowest remaining mode fastest. For a
//! tensor of dims `(I1, I2, I3)` this gives
//!
//! | mode | rows | column index of `(i1, i2, i3)` |
//! |------|------|--------------------------------|
//! | 1    | I1   | `i2 + I2 * i3`                 |
//! | 2    | I2   | `i1 + I1 * i3`                 |
//! | 3    | I3   | `i1 + I1 * i2`                 |

mod io;

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use io::{read_ct3, write_ct3, CT3_MAGIC};

/// Dense complex matrix (column-major), used for unfoldings.
pub type ComplexMatrix = DMatrix<Complex64>;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor3 {
    dims: [usize; 3],
    data: Vec<Complex64>,
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

fn check_mode(mode: usize) -> Result<()> {
    if !(1..=3).contains(&mode) {
        return Err(Error::invalid(format!("mode must be 1, 2 or 3, got {mode}")));
    }
    Ok(())
}

impl ComplexTensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self::filled(dims, Complex64::new(0.0, 0.0))
    }

    pub fn filled(dims: [usize; 3], value: Complex64) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "tensor dims must be positive");
        Self { dims, data: vec![value; dims[0] * dims[1] * dims[2]] }
    }

    /// Builds a tensor from data already in storage order.
    pub fn from_vec(dims: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {dims:?} ({expected} entries)",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn<F>(dims: [usize; 3], mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> Complex64,
    {
        assert!(dims.iter().all(|&d| d > 0), "tensor dims must be positive");
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i3 in 0..dims[2] {
            for i2 in 0..dims[1] {
                for i1 in 0..dims[0] {
                    data.push(f(i1, i2, i3));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        debug_assert!(i1 < self.dims[0] && i2 < self.dims[1] && i3 < self.dims[2]);
        i1 + self.dims[0] * (i2 + self.dims[1] * i3)
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    /// Returns the mode-3 fiber (time series) at spatial pixel `(i1, i2)`.
    pub fn fiber3(&self, i1: usize, i2: usize) -> Vec<Complex64> {
        (0..self.dims[2]).map(|k| self[(i1, i2, k)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            None => Ok(()),
            Some(pos) => Err(Error::invalid(format!("tensor contains a non-finite entry at linear offset {pos}"))),
        }
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    /// Element-wise combination of two equally shaped tensors.
    pub fn zip_map<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        self.same_dims(other)?;
        Ok(Self { dims: self.dims, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub(crate) fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!("dimension mismatch: {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    /// `Σ conj(self) · other`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Sum of complex moduli.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).sum()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }

    /// Mode-`mode` matricization (modes are 1-based).
    pub fn unfold(&self, mode: usize) -> Result<ComplexMatrix> {
        check_mode(mode)?;
        let [n1, n2, n3] = self.dims;
        let m = match mode {
            1 => ComplexMatrix::from_column_slice(n1, n2 * n3, &self.data),
            2 => {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.data.len()];
                for i3 in 0..n3 {
                    for i2 in 0..n2 {
                        for i1 in 0..n1 {
                            let col = i1 + n1 * i3;
                            buf[i2 + n2 * col] = self.data[i1 + n1 * (i2 + n2 * i3)];
                        }
                    }
                }
                ComplexMatrix::from_vec(n2, n1 * n3, buf)
            }
            _ => {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.data.len()];
                for i3 in 0..n3 {
                    for i2 in 0..n2 {
                        for i1 in 0..n1 {
                            let col = i1 + n1 * i2;
                            buf[i3 + n3 * col] = self.data[i1 + n1 * (i2 + n2 * i3)];
                        }
                    }
                }
                ComplexMatrix::from_vec(n3, n1 * n2, buf)
            }
        };
        Ok(m)
    }

    /// Inverse of [`ComplexTensor3::unfold`].
    pub fn fold(m: &ComplexMatrix, mode: usize, dims: [usize; 3]) -> Result<Self> {
        check_mode(mode)?;
        check_dims(dims)?;
        let [n1, n2, n3] = dims;
        let rows = dims[mode - 1];
        let cols = n1 * n2 * n3 / rows;
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::invalid(format!(
                "cannot fold a {}x{} matrix along mode {mode} into dims {dims:?} (expected {rows}x{cols})",
                m.nrows(),
                m.ncols()
            )));
        }
        let src = m.as_slice();
        let data = match mode {
            1 => src.to_vec(),
            2 => {
                let mut data = vec![Complex64::new(0.0, 0.0); src.len()];
                for i3 in 0..n3 {
                    for i2 in 0..n2 {
                        for i1 in 0..n1 {
                            data[i1 + n1 * (i2 + n2 * i3)] = src[i2 + n2 * (i1 + n1 * i3)];
                        }
                    }
                }
                data
            }
            _ => {
                let mut data = vec![Complex64::new(0.0, 0.0); src.len()];
                for i3 in 0..n3 {
                    for i2 in 0..n2 {
                        for i1 in 0..n1 {
                            data[i1 + n1 * (i2 + n2 * i3)] = src[i3 + n3 * (i1 + n1 * i2)];
                        }
                    }
                }
                data
            }
        };
        Ok(Self { dims, data })
    }
}

impl Index<(usize, usize, usize)> for ComplexTensor3 {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i1, i2, i3): (usize, usize, usize)) -> &Complex64 {
        let k = self.offset(i1, i2, i3);
        &self.data[k]
    }
}

impl IndexMut<(usize, usize, usize)> for ComplexTensor3 {
    #[inline]
    fn index_mut(&mut self, (i1, i2, i3): (usize, usize, usize)) -> &mut Complex64 {
        let k = self.offset(i1, i2, i3);
        &mut self.data[k]
    }
}
