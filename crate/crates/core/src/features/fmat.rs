//! The `FMAT` feature file format.
//!
//! ```text
//! "FMAT"            4 bytes
//! version           u32 LE (= 1)
//! rows              u64 LE
//! cols              u64 LE
//! id block length   u32 LE
//! id block          JSON array of sample ids, UTF-8
//! payload           rows * cols f32 LE, row-major
//! ```

use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FMAT";
pub const VERSION: u32 = 1;

pub fn encode(fm: &FeatureMatrix) -> Result<Vec<u8>> {
    let ids = serde_json::to_vec(fm.ids())?;
    let id_len = u32::try_from(ids.len()).map_err(|_| Error::arg("id block exceeds 4 GiB"))?;
    let mut out = Vec::with_capacity(28 + ids.len() + 4 * fm.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(fm.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(fm.cols() as u64).to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(&ids);
    for v in fm.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated FMAT file while reading {what}"))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<FeatureMatrix> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not an FMAT file".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported FMAT version {version}")));
    }
    let rows = c.u64("rows")?;
    let cols = c.u64("cols")?;
    let id_len = c.u32("id block length")? as usize;
    let ids: Vec<String> = serde_json::from_slice(c.take(id_len, "id block")?)
        .map_err(|e| Error::Format(format!("bad id block: {e}")))?;
    let count = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .and_then(|n| n.checked_mul(4).map(|b| (n, b)))
        .ok_or_else(|| Error::Format(format!("payload size {rows}x{cols} overflows")))?;
    let payload = c.take(count.1, "payload")?;
    if c.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after payload", buf.len() - c.pos)));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows as usize, cols as usize, data, ids)
        .map_err(|e| Error::Format(format!("inconsistent FMAT contents: {e}")))
}

pub fn export_features(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, encode(fm)?).map_err(|e| Error::io(path, e))
}

pub fn import_features(path: &Path) -> Result<FeatureMatrix> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
