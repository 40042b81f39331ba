//! `TSACKPT1` checkpoint files.
//!
//! Layout (little-endian): magic, `u32` array count, then per array a `u16`
//! name length and UTF-8 name, `u8` trainable flag, `u8` rank, `rank` × `u32`
//! dims and the `f64` payload; finally a `u32`-length-prefixed JSON model
//! config.

use std::path::Path;

use super::config::ModelConfig;
use super::params::{FreezeMask, ModelParameters, ParamArray};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TSACKPT1";

pub fn encode_checkpoint<T: Scalar>(
    params: &ModelParameters<T>,
    freeze: &FreezeMask,
    cfg: &ModelConfig,
) -> Result<Vec<u8>> {
    if freeze.trainable.len() != params.arrays.len() {
        return Err(Error::Shape("freeze mask does not match parameter count".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.arrays.len() as u32).to_le_bytes());
    for (a, &trainable) in params.arrays.iter().zip(&freeze.trainable) {
        let name = a.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(trainable as u8);
        out.push(a.rank);
        for d in a.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in a.value.data() {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    let json = serde_json::to_vec(cfg)?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(
    bytes: &[u8],
    origin: &Path,
) -> Result<(ModelParameters<T>, FreezeMask, ModelConfig)> {
    let corrupt = |reason: String| Error::corrupt(origin, reason);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(corrupt("missing TSACKPT1 magic".into()));
    }
    let count = r.u32().ok_or_else(|| corrupt("truncated array count".into()))? as usize;
    let mut arrays = Vec::with_capacity(count.min(4096));
    let mut trainable = Vec::with_capacity(count.min(4096));
    for k in 0..count {
        let truncated = |what: &str| corrupt(format!("truncated in {what} of array {k}"));
        let len = r.u16().ok_or_else(|| truncated("name length"))? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(|| truncated("name"))?)
            .map_err(|_| corrupt(format!("array {k} name is not UTF-8")))?
            .to_string();
        let flag = r.u8().ok_or_else(|| truncated("trainable flag"))?;
        let rank = r.u8().ok_or_else(|| truncated("rank"))?;
        if !(rank == 1 || rank == 2) {
            return Err(corrupt(format!("array {name} has unsupported rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(r.u32().ok_or_else(|| truncated("dims"))? as usize);
        }
        let (rows, cols) = if rank == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
        let payload = r
            .take(rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| truncated("payload"))?)
            .ok_or_else(|| corrupt(format!("truncated payload of array {name}")))?;
        let data = payload.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap()))).collect();
        arrays.push(ParamArray { name, rank, value: Matrix::from_vec(rows, cols, data)? });
        trainable.push(flag != 0);
    }
    let json_len = r.u32().ok_or_else(|| corrupt("truncated config length".into()))? as usize;
    let json = r.take(json_len).ok_or_else(|| corrupt("truncated config".into()))?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes after config".into()));
    }
    let cfg: ModelConfig =
        serde_json::from_slice(json).map_err(|e| corrupt(format!("config is not valid JSON: {e}")))?;
    cfg.validate().map_err(|e| corrupt(e.to_string()))?;
    let params = ModelParameters { arrays };
    params.check_layout(&cfg).map_err(|e| corrupt(e.to_string()))?;
    Ok((params, FreezeMask { trainable }, cfg))
}

pub fn save_checkpoint<T: Scalar>(
    params: &ModelParameters<T>,
    freeze: &FreezeMask,
    cfg: &ModelConfig,
    path: &Path,
) -> Result<()> {
    let bytes = encode_checkpoint(params, freeze, cfg)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ModelParameters<T>, FreezeMask, ModelConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig { layers: 2, heads: 2, d_model: 8, d_ff: 16, ..ModelConfig::desk() }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = small();
        let p = ModelParameters::<f64>::init(&cfg, 9).unwrap();
        let m = FreezeMask::finetune(&p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, &m, &cfg, &path).unwrap();
        let (p2, m2, c2) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!((p2, m2, c2), (p, m, cfg));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let cfg = small();
        let p = ModelParameters::<f64>::init(&cfg, 1).unwrap();
        let bytes = encode_checkpoint(&p, &FreezeMask::all_trainable(&p), &cfg).unwrap();
        for cut in [4, 20, bytes.len() / 2, bytes.len() - 1] {
            let r = decode_checkpoint::<f64>(&bytes[..cut], Path::new("x"));
            assert!(matches!(r, Err(Error::Corrupt { .. })), "cut {cut}");
        }
    }

    #[test]
    fn shape_mismatch_names_array() {
        let cfg = small();
        let mut p = ModelParameters::<f64>::init(&cfg, 1).unwrap();
        let idx = p.index_of("blocks.1.ffn.w2").unwrap();
        p.arrays[idx].value = Matrix::zeros(3, 8);
        let bytes = encode_checkpoint(&p, &FreezeMask::all_trainable(&p), &cfg).unwrap();
        let err = decode_checkpoint::<f64>(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
        assert!(err.to_string().contains("blocks.1.ffn.w2"), "{err}");
    }

    #[test]
    fn loads_into_single_precision() {
        let cfg = small();
        let p = ModelParameters::<f64>::init(&cfg, 2).unwrap();
        let bytes = encode_checkpoint(&p, &FreezeMask::all_trainable(&p), &cfg).unwrap();
        let (p32, _, _) = decode_checkpoint::<f32>(&bytes, Path::new("x")).unwrap();
        assert_eq!(p32, p.cast::<f32>());
    }
}
