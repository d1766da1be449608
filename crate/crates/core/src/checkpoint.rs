//! Binary checkpoint format.
//!
//! ```text
//! b"PAINTNT1"
//! u64  config length, then the config file text (UTF-8)
//! u64  number of parameter records
//! u64  total parameter elements
//! per record: u32 name length, name, u32 rank, rank × u64 dims,
//!             f64 values
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::accounting::count_params;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::PainModel;
use crate::nn::Parameters;

pub const MAGIC: &[u8; 8] = b"PAINTNT1";

pub fn to_bytes(config: &RunConfig, model: &PainModel) -> Vec<u8> {
    let text = config.to_toml_string();
    let params = model.named_parameters();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    let total: usize = params.iter().map(|(_, t)| t.len()).sum();
    out.extend_from_slice(&(total as u64).to_le_bytes());
    for (name, t) in &params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} too large")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(RunConfig, PainModel)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("missing PAINTNT1 magic".into()));
    }
    let len = r.u64()?;
    let text = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Checkpoint(format!("config text: {e}")))?;
    let config = RunConfig::from_toml_str(text)?;
    let mut model = PainModel::from_config(&config)?;

    let records = r.u64()?;
    let total = r.u64()?;
    let expected = count_params(&config.spatial, &config.temporal)?;
    if total as u64 != expected {
        return Err(Error::Checkpoint(format!(
            "file holds {total} parameters but the config defines {expected}"
        )));
    }
    let mut stored = std::collections::HashMap::with_capacity(records);
    for _ in 0..records {
        let name_len = r.u32()?;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("parameter name: {e}")))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = r
            .take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        stored.insert(name, (shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut failure = None;
    model.visit_mut("", &mut |name, t| {
        if failure.is_some() {
            return;
        }
        match stored.remove(name) {
            Some((shape, data)) if shape == t.shape() => *t = t.with_data(data).expect("shape checked"),
            Some((shape, _)) => {
                failure = Some(format!(
                    "parameter `{name}` has shape {shape:?}, expected {:?}",
                    t.shape()
                ))
            }
            None => failure = Some(format!("parameter `{name}` missing")),
        }
    });
    if let Some(msg) = failure {
        return Err(Error::Checkpoint(msg));
    }
    if let Some(extra) = stored.keys().next() {
        return Err(Error::Checkpoint(format!("unknown parameter `{extra}`")));
    }
    Ok((config, model))
}

/// Writes via a sibling temporary file and a rename, so a failed save never
/// leaves a partial checkpoint at `path`.
pub fn save(path: &Path, config: &RunConfig, model: &PainModel) -> Result<()> {
    let tmp = path.with_extension("partial");
    let result = std::fs::write(&tmp, to_bytes(config, model))
        .map_err(|e| Error::io(&tmp, e))
        .and_then(|()| std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e)));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn load(path: &Path) -> Result<(RunConfig, PainModel)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
