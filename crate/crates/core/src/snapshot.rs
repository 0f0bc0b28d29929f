//! Binary phase-space snapshots.
//!
//! Fixed little-endian layout so files are byte-identical across platforms
//! and reruns:
//!
//! ```text
//! offset  size  field
//! 0       6     magic  b"VWLAB1"
//! 6       8     config hash (u64, FNV-1a of the config text)
//! 14      4     spatial dimension d (u32)
//! 18      4     transverse dimension n (u32)
//! 22      8     x grid length (u64)
//! 30      8     v grid length (u64)
//! 38      8×4   x_min, x_step, v_min, v_step (f64)
//! 70      8     time t (f64)
//! 78      8·N   values, row-major over (x index, v index)
//! ```

use crate::grid::{Grid1, PhaseGrid, PhaseSpaceState};
use crate::{Error, Result};
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 6] = b"VWLAB1";

/// Metadata carried alongside the grid data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnapshotHeader {
    pub config_hash: u64,
    pub dim_x: u32,
    pub dim_n: u32,
}

pub fn write_snapshot(
    path: &Path,
    state: &PhaseSpaceState,
    header: SnapshotHeader,
) -> Result<()> {
    let mut buf = Vec::with_capacity(78 + 8 * state.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&header.config_hash.to_le_bytes());
    buf.extend_from_slice(&header.dim_x.to_le_bytes());
    buf.extend_from_slice(&header.dim_n.to_le_bytes());
    buf.extend_from_slice(&(state.grid.x.len as u64).to_le_bytes());
    buf.extend_from_slice(&(state.grid.v.len as u64).to_le_bytes());
    for value in [
        state.grid.x.min,
        state.grid.x.step,
        state.grid.v.min,
        state.grid.v.step,
        state.time,
    ] {
        buf.extend_from_slice(&value.to_le_bytes());
    }
    for &v in state.values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(PhaseSpaceState, SnapshotHeader)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 78 {
        return Err(Error::Config(format!(
            "snapshot {}: truncated header ({} bytes)",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::Config(format!(
            "snapshot {}: bad magic (expected VWLAB1)",
            path.display()
        )));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let header = SnapshotHeader {
        config_hash: u64_at(6),
        dim_x: u32_at(14),
        dim_n: u32_at(18),
    };
    let x_len = u64_at(22) as usize;
    let v_len = u64_at(30) as usize;
    let expected = 78 + 8 * x_len * v_len;
    if bytes.len() != expected {
        return Err(Error::Config(format!(
            "snapshot {}: expected {} bytes for a {}×{} grid, found {}",
            path.display(),
            expected,
            x_len,
            v_len,
            bytes.len()
        )));
    }
    let grid = PhaseGrid {
        x: Grid1 {
            min: f64_at(38),
            step: f64_at(46),
            len: x_len,
        },
        v: Grid1 {
            min: f64_at(54),
            step: f64_at(62),
            len: v_len,
        },
    };
    let time = f64_at(70);
    let mut values = Vec::with_capacity(x_len * v_len);
    for k in 0..x_len * v_len {
        values.push(f64_at(78 + 8 * k));
    }
    let values = Array2::from_shape_vec((x_len, v_len), values)
        .map_err(|e| Error::Config(format!("snapshot {}: {e}", path.display())))?;
    Ok((PhaseSpaceState { grid, values, time }, header))
}
