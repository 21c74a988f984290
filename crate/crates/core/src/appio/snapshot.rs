//! Binary field snapshots.
//!
//! Layout, all little-endian: magic `MHD2`, version `u32`, `nx` and `ny` as
//! `u64`, time as `f64`, field count `u32`, then per field a `u32` name
//! length and the name bytes, then the `f64` payloads row-major in declared
//! order. Payload sizes follow from the names: `rho` and `b` are `nx x ny`,
//! `ux` is `(nx+1) x ny`, `uy` is `nx x (ny+1)`.

use crate::field::FaceField;
use crate::state::State;
use ndarray::Array2;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MHD2";
pub const VERSION: u32 = 1;
const FIELDS: [&str; 4] = ["rho", "b", "ux", "uy"];

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed snapshot: {0}")]
    Format(String),
}

fn format_err(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Format(msg.into())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub nx: usize,
    pub ny: usize,
    pub time: f64,
    pub fields: Vec<String>,
}

fn field_shape(name: &str, nx: usize, ny: usize) -> Option<(usize, usize)> {
    match name {
        "rho" | "b" => Some((nx, ny)),
        "ux" => Some((nx + 1, ny)),
        "uy" => Some((nx, ny + 1)),
        _ => None,
    }
}

pub fn encode_snapshot(state: &State) -> Vec<u8> {
    let (nx, ny) = state.rho.dim();
    let mut out = Vec::with_capacity(64 + 8 * (state.rho.len() * 2 + state.u.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(nx as u64).to_le_bytes());
    out.extend_from_slice(&(ny as u64).to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    out.extend_from_slice(&(FIELDS.len() as u32).to_le_bytes());
    for name in FIELDS {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for arr in [&state.rho, &state.b, &state.u.ux, &state.u.uy] {
        for v in arr.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format_err(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode_header(r: &mut Reader) -> Result<SnapshotHeader, SnapshotError> {
    if r.take(4, "magic")? != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let nx = r.u64("nx")?;
    let ny = r.u64("ny")?;
    if nx == 0 || ny == 0 || nx > u32::MAX as u64 || ny > u32::MAX as u64 {
        return Err(format_err(format!("invalid dimensions {nx} x {ny}")));
    }
    let time = r.f64("time")?;
    let count = r.u32("field count")?;
    if count > 16 {
        return Err(format_err(format!("implausible field count {count}")));
    }
    let mut fields = Vec::new();
    for _ in 0..count {
        let len = r.u32("field name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "field name")?)
            .map_err(|_| format_err("field name is not UTF-8"))?
            .to_string();
        fields.push(name);
    }
    Ok(SnapshotHeader {
        version,
        nx: nx as usize,
        ny: ny as usize,
        time,
        fields,
    })
}

pub fn decode_header_bytes(bytes: &[u8]) -> Result<SnapshotHeader, SnapshotError> {
    decode_header(&mut Reader { bytes, pos: 0 })
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<State, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    let h = decode_header(&mut r)?;
    let mut arrays: Vec<(String, Array2<f64>)> = Vec::new();
    for name in &h.fields {
        let shape = field_shape(name, h.nx, h.ny).ok_or_else(|| format_err(format!("unknown field {name:?}")))?;
        let n = shape.0 * shape.1;
        let raw = r.take(n * 8, name)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push((name.clone(), Array2::from_shape_vec(shape, data).expect("shape")));
    }
    if r.pos != bytes.len() {
        return Err(format_err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut get = |name: &str| {
        arrays
            .iter()
            .position(|(n, _)| n == name)
            .map(|k| arrays.swap_remove(k).1)
            .ok_or_else(|| format_err(format!("missing field {name:?}")))
    };
    let rho = get("rho")?;
    let b = get("b")?;
    let ux = get("ux")?;
    let uy = get("uy")?;
    Ok(State {
        rho,
        b,
        u: FaceField { ux, uy },
        t: h.time,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> SnapshotError {
    SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_snapshot(state: &State, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
    let path = path.as_ref();
    fs::write(path, encode_snapshot(state)).map_err(|e| io_err(path, e))
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<State, SnapshotError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_snapshot(&bytes)
}

pub fn read_snapshot_header(path: impl AsRef<Path>) -> Result<SnapshotHeader, SnapshotError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_header_bytes(&bytes)
}
