//! Binary model snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "RAFM"                 4 bytes
//! version                u32 (= 1)
//! m                      u32
//! feature count |F|      u64
//! ranks                  m x u32
//! levels                 |F| x u32
//! bias                   f64
//! linear weights         |F| x f64
//! table 1 .. table m     |F_k| x D_k x f64, features ascending
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{RafmError, Result};
use crate::model::{LevelAssignment, RaFMModel, RankLadder};

pub const MAGIC: &[u8; 4] = b"RAFM";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &RaFMModel, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.levels() as u32).to_le_bytes())?;
    w.write_all(&(model.feature_count() as u64).to_le_bytes())?;
    for &r in model.ladder().ranks() {
        w.write_all(&(r as u32).to_le_bytes())?;
    }
    for &k in model.assignment().levels() {
        w.write_all(&k.to_le_bytes())?;
    }
    w.write_all(&model.bias().to_le_bytes())?;
    for v in model.linear() {
        w.write_all(&v.to_le_bytes())?;
    }
    for table in model.tables() {
        for v in table.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(model: &RaFMModel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(
        24 + 8 * (model.feature_count() * 2 + model.embedding_parameter_count()),
    );
    write_model(model, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn save(model: &RaFMModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| RafmError::Snapshot(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<RaFMModel> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(RafmError::Snapshot("bad magic, not a model snapshot".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(RafmError::Snapshot(format!("unsupported format version {version}")));
    }
    let m = c.u32()? as usize;
    let feature_count = usize::try_from(c.u64()?)
        .map_err(|_| RafmError::Snapshot("feature count overflows usize".into()))?;
    if feature_count > buf.len() {
        return Err(RafmError::Snapshot("feature count larger than file".into()));
    }
    let ranks = (0..m).map(|_| c.u32().map(|r| r as usize)).collect::<Result<Vec<_>>>()?;
    let levels = (0..feature_count).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let ladder = RankLadder::new(ranks).map_err(|e| RafmError::Snapshot(e.to_string()))?;
    let assignment =
        LevelAssignment::new(levels, m).map_err(|e| RafmError::Snapshot(e.to_string()))?;
    let mut model = RaFMModel::zeros(ladder, assignment)?;
    model.set_bias(c.f64()?);
    for w in model.linear_mut() {
        *w = c.f64()?;
    }
    for level in 1..=m {
        for v in model.table_mut(level).as_mut_slice() {
            *v = c.f64()?;
        }
    }
    if c.pos != buf.len() {
        return Err(RafmError::Snapshot(format!(
            "{} trailing bytes after model",
            buf.len() - c.pos
        )));
    }
    Ok(model)
}

pub fn read_model<R: Read>(mut r: R) -> Result<RaFMModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn load(path: &Path) -> Result<RaFMModel> {
    from_bytes(&fs::read(path)?)
}
