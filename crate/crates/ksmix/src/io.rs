//! CSV time series, binary snapshots and the hashed output manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ksmix_core::diagnostics::DiagnosticsRecord;
use ksmix_core::{Grid, ScalarField};
use sha2::{Digest, Sha256};

pub const CSV_HEADER: &str = "t,mass,l2_dev,h1,h1_paper,hm1,linf_dev,min_val,pn_low,criterion_integral,dt_used";

const MAGIC: &[u8; 4] = b"KSMX";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn records_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::with_capacity(64 + records.len() * 260);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let row = [
            r.t,
            r.mass,
            r.l2_dev,
            r.h1,
            r.h1_paper,
            r.hm1,
            r.linf_dev,
            r.min_val,
            r.pn_low,
            r.criterion_integral,
            r.dt_used,
        ];
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Generic CSV with the same number format; `Cell::Empty` becomes an empty field.
pub fn table_csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(t) => t.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: u32,
    pub n: u32,
    pub t: f64,
    pub mean: f64,
    pub values: Vec<f64>,
}

pub fn encode_snapshot(field: &ScalarField, t: f64) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&field.mean().to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, IoError> {
    let bad = |m: &str| IoError::Snapshot(m.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing KSMX header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let (dim, n) = (u32_at(8), u32_at(12));
    let count = (n as usize)
        .checked_pow(dim)
        .ok_or_else(|| bad("grid size overflows"))?;
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(bad("payload length does not match n^dim"));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Snapshot {
        dim,
        n,
        t: f64_at(16),
        mean: f64_at(24),
        values,
    })
}

impl Snapshot {
    pub fn to_field(&self) -> Result<ScalarField, IoError> {
        let grid = Grid::new(self.dim as usize, self.n as usize).map_err(|e| IoError::Snapshot(e.to_string()))?;
        ScalarField::new(grid, self.values.clone()).map_err(|e| IoError::Snapshot(e.to_string()))
    }
}

pub fn write_snapshot(path: &Path, field: &ScalarField, t: f64) -> Result<(), IoError> {
    fs::write(path, encode_snapshot(field, t)).map_err(fs_err(path))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, IoError> {
    decode_snapshot(&fs::read(path).map_err(fs_err(path))?)
}

/// One named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: impl Into<String>, text: String) -> Self {
        Self {
            name: name.into(),
            bytes: text.into_bytes(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `<sha256>  <name>` per artifact, sorted by name.
pub fn manifest(artifacts: &[Artifact]) -> String {
    let mut lines: Vec<(String, String)> = artifacts
        .iter()
        .filter(|a| a.name != MANIFEST)
        .map(|a| (a.name.clone(), sha256_hex(&a.bytes)))
        .collect();
    lines.sort();
    lines.iter().map(|(name, h)| format!("{h}  {name}\n")).collect()
}

/// Writes every artifact plus the manifest into `dir`, overwriting previous outputs.
pub fn write_outputs(dir: &Path, artifacts: &[Artifact]) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(fs_err(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(fs_err(&path))?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest(artifacts)).map_err(fs_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_for_empty_series() {
        assert_eq!(records_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn snapshot_rejects_garbage() {
        assert!(decode_snapshot(b"KSMX").is_err());
        let g = Grid::new(2, 16).unwrap();
        let mut bytes = encode_snapshot(&ScalarField::constant(g, 1.0), 0.5);
        bytes.pop();
        assert!(decode_snapshot(&bytes).is_err());
    }
}
