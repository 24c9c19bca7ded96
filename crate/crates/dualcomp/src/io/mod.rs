//! On-disk formats and report emitters.
//!
//! All binary formats are little-endian with a 4-byte magic and a u16
//! version. Parsers validate declared sizes against the actual byte count
//! before allocating anything, so arbitrary input is safe to feed them.

pub mod grid_file;
pub mod label_file;
pub mod model_file;
pub mod report;
pub mod sequence_file;

use std::path::Path;

use crate::error::{Error, Result};

/// Bounded little-endian reader over a byte slice.
pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8], what: &'static str) -> Self {
        Self { data, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::SizeMismatch {
                what: self.what,
                expected: (self.pos + n) as u64,
                actual: self.data.len() as u64,
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::BadMagic {
                expected: *expected,
                got: [got[0], got[1], got[2], got[3]],
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = self.take(count.checked_mul(4).ok_or(Error::SizeMismatch {
            what: self.what,
            expected: u64::MAX,
            actual: self.data.len() as u64,
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or(Error::SizeMismatch {
            what: self.what,
            expected: u64::MAX,
            actual: self.data.len() as u64,
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    /// Require that the declared payloads consume the file exactly.
    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::SizeMismatch {
                what: self.what,
                expected: self.pos as u64,
                actual: self.data.len() as u64,
            });
        }
        Ok(())
    }

    /// Total bytes the declared payload needs; errors early (before any
    /// allocation) when the file cannot contain it.
    pub fn require_total(&self, expected: u64) -> Result<()> {
        if self.data.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                what: self.what,
                expected,
                actual: self.data.len() as u64,
            });
        }
        Ok(())
    }
}

/// Write-temp-rename so readers never observe a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
