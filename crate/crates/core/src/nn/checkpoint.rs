//! Little-endian checkpoint container.
//!
//! ```text
//! magic      16 bytes  "STRESSREP-CKPT\0\0"
//! version    u32
//! meta_len   u32, then meta_len bytes of UTF-8 (config echo, TOML)
//! n_records  u32
//! record     name_len u32, name bytes, ndim u32, dims u64 x ndim,
//!            data f32 x prod(dims)
//! ```

use std::io::{Read, Write};

use super::{NnError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 16] = b"STRESSREP-CKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub records: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// All records whose name starts with `prefix`, prefix stripped, in order.
    pub fn with_prefix(&self, prefix: &str) -> Vec<(String, Tensor<f32>)> {
        self.records
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
            .collect()
    }
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut out: W) -> Result<(), NnError> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(ck.meta.len() as u32).to_le_bytes())?;
    out.write_all(ck.meta.as_bytes())?;
    out.write_all(&(ck.records.len() as u32).to_le_bytes())?;
    for (name, t) in &ck.records {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * t.data.len());
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String, NnError> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| NnError::Checkpoint("invalid UTF-8".into()))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(16)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = c.u32()? as usize;
    let meta = c.string(meta_len)?;
    let n = c.u32()? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let len = c.u32()? as usize;
        let name = c.string(len)?;
        let ndim = c.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| NnError::Checkpoint(format!("record '{name}' too large")))?;
        let raw = c.take(count.checked_mul(4).ok_or_else(|| NnError::Checkpoint("overflow".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push((name, Tensor { shape, data }));
    }
    if c.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes after last record".into()));
    }
    Ok(Checkpoint { meta, records })
}
