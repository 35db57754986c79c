//! Value-function checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `PVI1`                  |
//! | 4      | 8    | iteration (u64)               |
//! | 12     | 32   | model fingerprint (SHA-256)   |
//! | 44     | 8    | state count (u64)             |
//! | 52     | 8·n  | values (f64)                  |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::mdp::Fingerprint;

pub const MAGIC: &[u8; 4] = b"PVI1";
const HEADER_LEN: usize = 4 + 8 + 32 + 8;

/// Dense value vector with the iteration it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub iteration: u64,
    pub fingerprint: Fingerprint,
}

pub fn save_checkpoint(vf: &ValueFunction, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(MAGIC)?;
        w.write_all(&vf.iteration.to_le_bytes())?;
        w.write_all(&vf.fingerprint.0)?;
        w.write_all(&(vf.values.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * 8192);
        for chunk in vf.values.chunks(8192) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    })
}

/// Reads a checkpoint without checking which model it belongs to.
pub fn load_checkpoint(path: &Path) -> Result<ValueFunction> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a value checkpoint (bad magic or short header)"));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    let iteration = u64_at(4);
    let mut fp = [0u8; 32];
    fp.copy_from_slice(&bytes[12..44]);
    let count = u64_at(44) as usize;
    let expected_len = count
        .checked_mul(8)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, "state count overflows"))?;
    if bytes.len() != expected_len {
        return Err(Error::format(
            path,
            format!(
                "expected {expected_len} bytes for {count} states, found {}",
                bytes.len()
            ),
        ));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(ValueFunction {
        values,
        iteration,
        fingerprint: Fingerprint(fp),
    })
}

/// Loads a checkpoint and refuses it unless it was written for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: Fingerprint) -> Result<ValueFunction> {
    let vf = load_checkpoint(path)?;
    if vf.fingerprint != expected {
        return Err(Error::Fingerprint {
            expected: expected.to_hex(),
            found: vf.fingerprint.to_hex(),
        });
    }
    Ok(vf)
}

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint_{iteration:010}.pvi"))
}

/// Iteration numbers of the checkpoints in `dir`, ascending.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<u64>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(num) = name
            .strip_prefix("checkpoint_")
            .and_then(|r| r.strip_suffix(".pvi"))
        {
            if let Ok(i) = num.parse::<u64>() {
                found.push(i);
            }
        }
    }
    found.sort_unstable();
    Ok(found)
}
