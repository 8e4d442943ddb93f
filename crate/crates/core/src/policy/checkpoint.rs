//! Versioned binary checkpoints: `SAPOCKPT`, a u32 version, a length-prefixed
//! JSON header (architecture, step, parameter count), then params and both Adam
//! moment vectors as little-endian f64. Round trips are bit-exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Architecture, PolicyState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SAPOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    step: u64,
    params: usize,
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

pub fn save_checkpoint<W: Write>(state: &PolicyState, mut w: W) -> Result<()> {
    state.validate()?;
    let header = serde_json::to_vec(&Header {
        arch: state.arch,
        step: state.step,
        params: state.params.len(),
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    write_f64s(&mut w, &state.params)?;
    write_f64s(&mut w, &state.adam_m)?;
    write_f64s(&mut w, &state.adam_v)?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<PolicyState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.params != header.arch.param_count() {
        return Err(Error::Checkpoint(format!(
            "header declares {} parameters, architecture needs {}",
            header.params,
            header.arch.param_count()
        )));
    }
    let state = PolicyState {
        arch: header.arch,
        params: read_f64s(&mut r, header.params)?,
        adam_m: read_f64s(&mut r, header.params)?,
        adam_v: read_f64s(&mut r, header.params)?,
        step: header.step,
    };
    state.validate()?;
    Ok(state)
}
