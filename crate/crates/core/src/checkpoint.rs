//! Binary checkpoint codec.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "PNET" | u32 version = 1 | u32 F | f32 × param_count(F) | u32 meta_len | meta (UTF-8)
//! ```
//!
//! Parameters are stored in layer order: conv1 kernels, conv1 bias, …,
//! dense2 weights, dense2 bias, each tensor row-major.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{param_shapes, ParasNet};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"PNET";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ParasNet<f32>,
    /// Free-form training metadata (seed, epochs, final loss, ...).
    pub metadata: String,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let n = self.model.param_count();
        let mut out = Vec::with_capacity(16 + 4 * n + self.metadata.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.model.filters() as u32).to_le_bytes());
        for p in self.model.params() {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let filters = r.u32("filter count")? as usize;
        if filters == 0 || filters > 4096 {
            return Err(Error::Corrupt(alloc::format!("implausible filter count {filters}")));
        }
        let params = param_shapes(filters)
            .into_iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let data = r.f32s(n, "parameters")?;
                Tensor::new(shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        // Training never produces these, so they can only come from damage.
        if let Some(i) = params.iter().position(|p| p.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Corrupt(alloc::format!("non-finite value in parameter tensor {i}")));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta = r.take(meta_len, "metadata")?;
        let metadata = String::from_utf8(meta.to_vec())
            .map_err(|_| Error::Corrupt("metadata is not valid UTF-8".into()))?;
        r.finish()?;
        Ok(Self {
            model: ParasNet::from_params(filters, params)?,
            metadata,
        })
    }
}

/// Cursor over a byte slice that reports how much is missing on truncation.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(Error::Truncated {
                section,
                missing: n - left,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().expect("4 bytes");
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, expected: u32) -> Result<()> {
        let found = self.u32("version")?;
        if found != expected {
            return Err(Error::VersionMismatch { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32s(&mut self, n: usize, section: &'static str) -> Result<Vec<f32>> {
        let raw = self.take(4 * n, section)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn f64s(&mut self, n: usize, section: &'static str) -> Result<Vec<f64>> {
        let raw = self.take(8 * n, section)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(self) -> Result<()> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(Error::TrailingBytes(n)),
        }
    }
}
