//! Binary checkpoints: `HGSC` magic, little-endian `u32` format version,
//! one byte parametrization tag, `u64` iteration, then the serialized
//! trainer state. The header fields are repeated in the payload and must
//! agree with it.

use std::path::Path;

use crate::geometry::Parametrization;
use crate::optim::TrainerState;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HGSC";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 8;

pub fn encode_checkpoint(state: &TrainerState) -> Result<Vec<u8>> {
    let payload = bincode::serialize(state)
        .map_err(|e| Error::InvalidArgument(format!("checkpoint serialization failed: {e}")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(state.set.parametrization.tag());
    out.extend_from_slice(&(state.iteration as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<TrainerState> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let tag = bytes[8];
    let iteration = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
    let state: TrainerState = bincode::deserialize(&bytes[HEADER_LEN..])
        .map_err(|e| Error::format(path, format!("corrupt checkpoint payload: {e}")))?;
    let p: Parametrization = state.set.parametrization;
    if p.tag() != tag || state.iteration as u64 != iteration || p != state.config.parametrization {
        return Err(Error::format(path, "checkpoint header disagrees with its payload"));
    }
    Ok(state)
}

pub fn save_checkpoint(path: &Path, state: &TrainerState) -> Result<()> {
    let bytes = encode_checkpoint(state)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainerState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
