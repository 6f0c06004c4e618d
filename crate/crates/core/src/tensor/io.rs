//! "CT3" v1 binary container.
//!
//! Layout: magic `43 54 33 00`, three little-endian `u64` dims `(I1, I2, I3)`,
//! then `I1*I2*I3` interleaved `(re, im)` little-endian `f64` pairs in storage
//! order (mode-1 fastest).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::ComplexTensor3;
use crate::error::{Error, Result};

pub const CT3_MAGIC: [u8; 4] = *b"CT3\0";
const HEADER_LEN: usize = 4 + 3 * 8;

impl ComplexTensor3 {
    pub fn to_ct3_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * self.len());
        out.extend_from_slice(&CT3_MAGIC);
        for d in self.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for z in self.as_slice() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_ct3_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("header truncated ({} bytes)", bytes.len())));
        }
        if bytes[..4] != CT3_MAGIC {
            return Err(Error::Format(format!("bad magic {:02x?}", &bytes[..4])));
        }
        let mut dims = [0usize; 3];
        for (n, d) in dims.iter_mut().enumerate() {
            let raw = u64::from_le_bytes(bytes[4 + 8 * n..12 + 8 * n].try_into().unwrap());
            *d = usize::try_from(raw).map_err(|_| Error::Format(format!("dimension {raw} too large")))?;
        }
        if dims.contains(&0) {
            return Err(Error::Format(format!("zero dimension in {dims:?}")));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload = &bytes[HEADER_LEN..];
        if count.checked_mul(16) != Some(payload.len()) {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {} for dims {dims:?}",
                payload.len(),
                count.saturating_mul(16)
            )));
        }
        let data: Vec<Complex64> = payload
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let t = ComplexTensor3::from_vec(dims, data)?;
        t.ensure_finite().map_err(|e| Error::Format(e.to_string()))?;
        Ok(t)
    }
}

pub fn write_ct3(path: impl AsRef<Path>, t: &ComplexTensor3) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&t.to_ct3_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_ct3(path: impl AsRef<Path>) -> Result<ComplexTensor3> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
    ComplexTensor3::from_ct3_bytes(&buf)
}
