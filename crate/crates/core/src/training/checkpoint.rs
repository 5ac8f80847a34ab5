use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Parameterized};

const MAGIC: &[u8; 8] = b"DSCNNCKP";
pub const FORMAT_VERSION: u32 = 1;

pub const TAG_MODEL: &str = "model";
pub const TAG_PRETRAIN: &str = "pretrain";

/// A tagged set of named tensors plus the key=value config that produced them.
///
/// Layout (little-endian): magic, `u32` version, tag, config text, `u32`
/// tensor count, then per tensor its name, `u64` rows, `u64` cols and
/// `rows*cols` `f64` values. Strings are a `u32` byte length then UTF-8.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tag: String,
    pub config: Vec<(String, String)>,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn from_params(tag: &str, config: Vec<(String, String)>, model: &impl Parameterized) -> Self {
        Checkpoint {
            tag: tag.to_string(),
            config,
            tensors: model.named_params().into_iter().map(|(n, m)| (n, m.clone())).collect(),
        }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Overwrites every parameter of `model`; names and shapes must match
    /// one to one.
    pub fn apply_to(&self, model: &mut impl Parameterized) -> Result<()> {
        let mut params = model.named_params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Contract(format!(
                "checkpoint holds {} tensors, model has {} parameters",
                self.tensors.len(),
                params.len()
            )));
        }
        for ((name, dst), (src_name, src)) in params.iter().zip(&self.tensors) {
            if name != src_name {
                return Err(Error::Contract(format!("checkpoint tensor {src_name:?} where model expects {name:?}")));
            }
            dst.check_same_shape(src, "checkpoint load")?;
        }
        for ((_, dst), (_, src)) in params.iter_mut().zip(&self.tensors) {
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.tag);
        let config: String = self.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_str(&mut out, &config);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format(path, None, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(path, None, format!("unsupported checkpoint version {version}")));
        }
        let tag = r.string()?;
        let config_text = r.string()?;
        let mut config = Vec::new();
        for (n, line) in config_text.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, None, format!("config entry {} lacks '='", n + 1)))?;
            config.push((k.to_string(), v.to_string()));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::format(path, None, format!("tensor {name:?} has absurd shape")))?;
            let data = r.take(n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, None, "trailing bytes after last tensor"));
        }
        Ok(Checkpoint { tag, config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if n > have {
            return Err(Error::format(self.path, None, format!("truncated: expected {n} bytes, found {have}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(self.path, None, "string is not UTF-8"))
    }
}
