//! `TTTS` checkpoint files.
//!
//! Layout (little endian): magic `TTTS`, `u32` format version, `u32` tensor
//! count, then per tensor a `u32` name length, the UTF-8 name, a `u32` rank,
//! `rank` `u32` dimensions and the `f32` data. The model dimensions travel as
//! an extra tensor named `meta.dims`.

use std::collections::BTreeMap;
use std::path::Path;

use lombard_core::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{FilmHead, ModelDims, TtsModel};
use crate::tensor::Tensor;
use crate::TtsError;

pub const MAGIC: &[u8; 4] = b"TTTS";
pub const FORMAT_VERSION: u32 = 1;
const META_DIMS: &str = "meta.dims";

fn push_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: impl Iterator<Item = f32>) {
    out.extend((name.len() as u32).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend((d as u32).to_le_bytes());
    }
    for v in data {
        out.extend(v.to_le_bytes());
    }
}

pub fn to_bytes<T: Scalar>(model: &TtsModel<T>) -> Vec<u8> {
    let tensors = model.tensors();
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend(((tensors.len() + 1) as u32).to_le_bytes());
    let meta = model.dims.to_meta();
    push_tensor(&mut out, META_DIMS, &[meta.len()], meta.iter().map(|&v| v as f32));
    for (name, t) in tensors {
        push_tensor(&mut out, &name, &t.shape, t.data.iter().map(|v| v.as_f64() as f32));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TtsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            TtsError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TtsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<TtsModel<T>, TtsError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(TtsError::Checkpoint("bad magic (expected TTTS)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(TtsError::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = r.u32()? as usize;
    let mut stored: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| TtsError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| TtsError::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        if stored.insert(name.clone(), Tensor::from_vec(&shape, data)).is_some() {
            return Err(TtsError::Checkpoint(format!("duplicate tensor '{name}'")));
        }
    }
    if r.pos != bytes.len() {
        return Err(TtsError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let meta = stored
        .remove(META_DIMS)
        .ok_or_else(|| TtsError::Checkpoint("missing meta.dims".into()))?;
    let dims = ModelDims::from_meta(&meta.data.iter().map(|&v| v as usize).collect::<Vec<_>>())
        .ok_or_else(|| TtsError::Checkpoint("meta.dims must hold 8 values".into()))?;
    dims.validate()?;

    // build a zero model of the recorded structure, then fill it by name
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = TtsModel::<T>::init(dims, &mut rng)?.zeros_like();
    let fb = dims.freeze_boundary;
    if stored.contains_key(&format!("blocks.{fb}.film.gamma.weight")) {
        for block in model.blocks.iter_mut().skip(fb) {
            block.film = Some(FilmHead::identity(dims.hidden, dims.style_dim));
        }
    }
    for (name, t) in model.tensors_mut() {
        let src = stored
            .remove(&name)
            .ok_or_else(|| TtsError::Checkpoint(format!("missing tensor '{name}'")))?;
        if src.shape != t.shape {
            return Err(TtsError::Checkpoint(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                src.shape, t.shape
            )));
        }
        *t = src.cast();
    }
    if let Some(extra) = stored.keys().next() {
        return Err(TtsError::Checkpoint(format!("unexpected tensor '{extra}'")));
    }
    Ok(model)
}

pub fn save<T: Scalar>(model: &TtsModel<T>, path: &Path) -> Result<(), TtsError> {
    std::fs::write(path, to_bytes(model)).map_err(|e| TtsError::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<TtsModel<T>, TtsError> {
    let bytes = std::fs::read(path).map_err(|e| TtsError::io(path, e))?;
    from_bytes(&bytes)
}
