//! Binary checkpoints.
//!
//! Layout, all little-endian: the magic `LUPD`, a `u32` format version, a
//! `u32` layer count, one `u32` per layer size, then every weight as `f64` in
//! the flat order used by [`ModelParams`].

use std::path::Path;

use liteupdate_core::nn::{Activation, Architecture};
use liteupdate_core::ModelParams;

use crate::HarnessError;

pub const MAGIC: &[u8; 4] = b"LUPD";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let sizes = params.arch().layer_sizes();
    let mut out = Vec::with_capacity(12 + 4 * sizes.len() + 8 * params.weights().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for w in params.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], HarnessError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| HarnessError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, HarnessError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams, HarnessError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(HarnessError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(HarnessError::Checkpoint(format!("unsupported version {version}")));
    }
    let layers = r.u32()? as usize;
    if layers > 64 {
        return Err(HarnessError::Checkpoint(format!("implausible layer count {layers}")));
    }
    let sizes = (0..layers).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    let arch = Architecture::new(sizes, Activation::Tanh)?;
    let count = arch.param_count();
    let payload = bytes.len() - r.pos;
    if payload != 8 * count {
        return Err(HarnessError::Checkpoint(format!(
            "payload holds {payload} bytes, architecture needs {} weights",
            count
        )));
    }
    let weights = r.take(payload)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(ModelParams::from_weights(arch, weights)?)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, encode(params)).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))
}

pub fn load(path: &Path) -> Result<ModelParams, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use liteupdate_core::nn::init_params;

    fn small() -> ModelParams {
        init_params(&Architecture::new(vec![256, 3, 2], Activation::Tanh).unwrap(), 9)
    }

    #[test]
    fn header_layout() {
        let b = encode(&small());
        assert_eq!(&b[..4], b"LUPD");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 256);
        assert_eq!(b.len(), 24 + 8 * (256 * 3 + 3 + 3 * 2 + 2));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = small();
        assert_eq!(decode(&encode(&p)).unwrap(), p);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let b = encode(&small());
        let mut bad_magic = b.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        assert!(decode(&b[..b.len() - 3]).is_err());
        assert!(decode(&b[..10]).is_err());
        let mut extra = b.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(decode(&extra).is_err());
        let mut bad_version = b.clone();
        bad_version[4] = 7;
        assert!(decode(&bad_version).is_err());
        assert!(decode(&[]).is_err());
    }
}
