//! Flat binary container for scalar fields.
//!
//! Layout (little-endian): 8 magic bytes, `u32` version, `u64` n, `f64` L,
//! then `n * n` `f64` samples in row-major order. Metadata goes into a JSON
//! sidecar next to the container (`<path>.json`).

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{norms, Grid2D, NormReport, ScalarField2D};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: [u8; 8] = *b"IVFIELD\0";
pub const FIELD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub kind: String,
    pub n: usize,
    pub length: f64,
    pub norms: NormReport,
    pub seed: Option<u64>,
    #[serde(default)]
    pub time: Option<f64>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write the container and its sidecar. Returns the sidecar that was written.
pub fn write_field(
    path: &Path,
    field: &ScalarField2D,
    kind: &str,
    seed: Option<u64>,
    time: Option<f64>,
) -> Result<FieldSidecar> {
    let grid = field.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    w.write_all(&(grid.n() as u64).to_le_bytes())?;
    w.write_all(&grid.length().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = FieldSidecar {
        kind: kind.to_string(),
        n: grid.n(),
        length: grid.length(),
        norms: norms(field)?,
        seed,
        time,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(sidecar)
}

/// Read a container written by [`write_field`]; the sidecar is optional.
pub fn read_field(path: &Path) -> Result<(ScalarField2D, Option<FieldSidecar>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 28 || bytes[..8] != FIELD_MAGIC {
        return Err(Error::Format(format!("{}: missing magic bytes", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let length = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let grid = Grid2D::new(n, length)?;
    let body = &bytes[28..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            8 * grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = ScalarField2D::new(grid, values)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        Some(serde_json::from_str(&fs::read_to_string(side)?)?)
    } else {
        None
    };
    Ok((field, sidecar))
}
