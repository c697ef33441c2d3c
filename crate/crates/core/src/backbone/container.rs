//! Binary parameter container shared by checkpoints and head files:
//! magic (4 bytes), version u32 LE, u64 LE length + UTF-8 JSON block, then
//! per tensor a u64-length-prefixed name, rank u32, extents u64 LE and the
//! f64 LE row-major payload, until end of file.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

pub const FORMAT_VERSION: u32 = 1;

pub fn encode(magic: &[u8; 4], json: &str, params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Load(format!("truncated file while reading {}", what())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &dyn Fn() -> String) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &dyn Fn() -> String) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &dyn Fn() -> String) -> Result<usize> {
        let n = self.u64(what)?;
        usize::try_from(n).map_err(|_| Error::Load(format!("length {n} too large while reading {}", what())))
    }
}

/// Decodes a container, returning its JSON block and tensors.
pub fn decode(bytes: &[u8], magic: &[u8; 4]) -> Result<(String, ParamSet)> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::Load("bad magic".into()));
    }
    let mut c = Cursor { bytes, pos: 4 };
    let version = c.u32(&|| "format version".into())?;
    if version != FORMAT_VERSION {
        return Err(Error::Load(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let n = c.len(&|| "config block".into())?;
    let json = std::str::from_utf8(c.take(n, &|| "config block".into())?)
        .map_err(|_| Error::Load("config block is not UTF-8".into()))?
        .to_string();

    let mut params = BTreeMap::new();
    while c.pos < bytes.len() {
        let idx = params.len();
        let n = c.len(&|| format!("name of tensor #{idx}"))?;
        let name = std::str::from_utf8(c.take(n, &|| format!("name of tensor #{idx}"))?)
            .map_err(|_| Error::Load(format!("name of tensor #{idx} is not UTF-8")))?
            .to_string();
        let what = || format!("tensor `{name}`");
        let rank = c.u32(&what)? as usize;
        let shape = (0..rank).map(|_| c.len(&what)).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
        let Some(count) = count.filter(|&n| n.checked_mul(8).is_some()) else {
            return Err(Error::Load(format!("tensor `{name}` has an absurd shape {shape:?}")));
        };
        let payload = c.take(count * 8, &what)?;
        let data = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Load(format!("tensor `{name}`: {e}")))?;
        if params.insert(name.clone(), t).is_some() {
            return Err(Error::Load(format!("duplicate tensor `{name}`")));
        }
    }
    Ok((json, params))
}

/// Checks that `params` holds exactly the expected names and shapes.
pub fn check_shapes(params: &ParamSet, expected: &[(String, Vec<usize>)]) -> Result<()> {
    for (name, shape) in expected {
        let t = params
            .get(name)
            .ok_or_else(|| Error::Load(format!("missing tensor `{name}`")))?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Load(format!(
                "tensor `{name}` has shape {:?} but the config implies {shape:?}",
                t.shape()
            )));
        }
    }
    if let Some(extra) = params.keys().find(|k| !expected.iter().any(|(n, _)| n == *k)) {
        return Err(Error::Load(format!("unexpected tensor `{extra}`")));
    }
    Ok(())
}
