//! Checkpoint container: `MDLP` magic, the model descriptor as a u32 LE
//! length-prefixed UTF-8 string, then every parameter array (running
//! statistics included) as f64 LE values in spec order.

use std::fs;
use std::path::Path;

use super::model::{init_params, ModelParams};
use super::spec::ModelSpec;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MDLP";

pub fn encode_checkpoint(spec: &ModelSpec, params: &ModelParams) -> Vec<u8> {
    let descriptor = spec.to_descriptor();
    let mut out = Vec::with_capacity(8 + descriptor.len() + 8 * params.num_values());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    for (_, array) in params.arrays() {
        for v in array {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelSpec, ModelParams)> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not an MDLP checkpoint".into()));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let descriptor = bytes
        .get(8..8 + len)
        .ok_or_else(|| Error::Format("truncated checkpoint descriptor".into()))?;
    let descriptor = std::str::from_utf8(descriptor)
        .map_err(|_| Error::Format("checkpoint descriptor is not UTF-8".into()))?;
    let spec = ModelSpec::from_descriptor(descriptor)?;
    let mut params = init_params(&spec, 0)?;
    let mut body = bytes[8 + len..].chunks_exact(8);
    let expected = params.num_values();
    if body.len() != expected || !body.remainder().is_empty() {
        return Err(Error::Format(format!(
            "checkpoint holds {} bytes of parameters, spec needs {}",
            bytes.len() - 8 - len,
            8 * expected
        )));
    }
    for (_, array) in params.arrays_mut() {
        for v in array.iter_mut() {
            *v = f64::from_le_bytes(body.next().unwrap().try_into().unwrap());
        }
    }
    Ok((spec, params))
}

pub fn write_checkpoint(path: &Path, spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    fs::write(path, encode_checkpoint(spec, params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelSpec, ModelParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| e.context(path.display().to_string()))
}
