//! Versioned binary encoding of [`ModelPair`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RDFL" | version u8
//! | u32 len + d shape tag | u32 len + g shape tag | u32 len + origin
//! | iteration u64
//! | u64 count + d values (f64) | u64 count + g values (f64)
//! ```

use super::{ModelError, ModelPair, ParamVector};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"RDFL";
pub const FORMAT_VERSION: u8 = 1;

pub fn serialize<S: Scalar>(m: &ModelPair<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(size_bytes(m));
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    for text in [m.d.shape_tag(), m.g.shape_tag(), m.origin.as_str()] {
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
    }
    out.extend_from_slice(&m.iteration.to_le_bytes());
    for v in [&m.d, &m.g] {
        out.extend_from_slice(&(v.len() as u64).to_le_bytes());
        for x in v.values() {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    out
}

/// Encoded length of `m`; the model size `M` used in communication accounting.
pub fn size_bytes<S: Scalar>(m: &ModelPair<S>) -> usize {
    4 + 1
        + 3 * 4
        + m.d.shape_tag().len()
        + m.g.shape_tag().len()
        + m.origin.len()
        + 8
        + 2 * 8
        + 8 * (m.d.len() + m.g.len())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Decode(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<String, ModelError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| ModelError::Decode(e.to_string()))
    }

    fn vector<S: Scalar>(&mut self, tag: String) -> Result<ParamVector<S>, ModelError> {
        let count = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if count > remaining / 8 {
            return Err(ModelError::Decode(format!("vector of {count} values exceeds input")));
        }
        let values = self
            .take(count as usize * 8)?
            .chunks_exact(8)
            .map(|c| S::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        ParamVector::new(tag, values).map_err(|e| ModelError::Decode(e.to_string()))
    }
}

pub fn deserialize<S: Scalar>(bytes: &[u8]) -> Result<ModelPair<S>, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::Decode("bad magic".into()));
    }
    let version = r.take(1)?[0];
    if version != FORMAT_VERSION {
        return Err(ModelError::Decode(format!("unsupported version {version}")));
    }
    let d_tag = r.text()?;
    let g_tag = r.text()?;
    let origin = r.text()?;
    let iteration = r.u64()?;
    let d = r.vector(d_tag)?;
    let g = r.vector(g_tag)?;
    if r.pos != bytes.len() {
        return Err(ModelError::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelPair::new(d, g, origin, iteration))
}
