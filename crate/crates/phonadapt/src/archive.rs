//! Feature archive (FARC) file format.
//!
//! Layout: magic `FARC`, u32 version, u32 utterance count; then per
//! utterance: u32 id length, UTF-8 id bytes, u32 rows, u32 cols, and
//! rows*cols little-endian 64-bit reals in row-major order. Everything
//! little-endian; writes are byte-deterministic.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FARC_MAGIC: &[u8; 4] = b"FARC";
pub const FARC_VERSION: u32 = 1;

fn parse_err(detail: String) -> Error {
    Error::Parse {
        what: "feature archive".into(),
        detail,
    }
}

pub fn write_archive(path: &Path, entries: &[(String, Matrix)]) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(FARC_MAGIC);
    out.extend_from_slice(&FARC_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (id, feat) in entries {
        let id_bytes = id.as_bytes();
        out.extend_from_slice(&(id_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(id_bytes);
        out.extend_from_slice(&(feat.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(feat.cols() as u32).to_le_bytes());
        for v in feat.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| parse_err(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_archive(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4)? != FARC_MAGIC {
        return Err(parse_err("bad magic, not a FARC file".into()));
    }
    let version = r.u32()?;
    if version != FARC_VERSION {
        return Err(parse_err(format!("unsupported archive version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = r.u32()? as usize;
        let id = String::from_utf8(r.take(id_len)?.to_vec()).map_err(|e| parse_err(format!("bad id: {e}")))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data = r
            .take(rows * cols * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        entries.push((id, Matrix::from_vec(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(parse_err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}
