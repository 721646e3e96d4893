//! Binary field snapshots.
//!
//! 32-byte header: magic "NLCH", version (u32 LE), nx (u32), ny (u32),
//! Lx (f64 LE), Ly (f64 LE), followed by row-major little-endian f64
//! values. Face-field components reuse the same container with their own
//! array dimensions.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::FieldError;
use crate::field::ScalarField;
use crate::grid::Grid2D;

pub const MAGIC: &[u8; 4] = b"NLCH";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected NLCH")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("truncated snapshot: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Raw array with grid metadata, the on-disk unit.
pub struct SnapshotArray {
    pub cols: u32,
    pub rows: u32,
    pub lx: f64,
    pub ly: f64,
    pub data: Vec<f64>,
}

pub fn write_array(path: &Path, arr: &SnapshotArray) -> Result<(), SnapshotError> {
    let mut buf = Vec::with_capacity(32 + arr.data.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&arr.cols.to_le_bytes());
    buf.extend_from_slice(&arr.rows.to_le_bytes());
    buf.extend_from_slice(&arr.lx.to_le_bytes());
    buf.extend_from_slice(&arr.ly.to_le_bytes());
    for v in &arr.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<SnapshotArray, SnapshotError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 || &bytes[0..4] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(SnapshotError::BadVersion(version));
    }
    let cols = u32_at(8);
    let rows = u32_at(12);
    let lx = f64_at(16);
    let ly = f64_at(24);
    let expected = cols as usize * rows as usize;
    let found = (bytes.len() - 32) / 8;
    if found < expected {
        return Err(SnapshotError::Truncated { expected, found });
    }
    let mut data = Vec::with_capacity(expected);
    for k in 0..expected {
        data.push(f64_at(32 + 8 * k));
    }
    Ok(SnapshotArray { cols, rows, lx, ly, data })
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<(), SnapshotError> {
    write_array(
        path,
        &SnapshotArray {
            cols: f.grid.nx as u32,
            rows: f.grid.ny as u32,
            lx: f.grid.lx,
            ly: f.grid.ly,
            data: f.data.clone(),
        },
    )
}

pub fn read_scalar(path: &Path) -> Result<ScalarField, SnapshotError> {
    let arr = read_array(path)?;
    let grid = Grid2D::new(arr.cols as usize, arr.rows as usize, arr.lx, arr.ly)?;
    Ok(ScalarField { grid, data: arr.data })
}

/// Dump a snapshot as CSV (i, j, x, y, value); the shortest round-trip
/// float formatting keeps values bit-exact through parse.
pub fn dump_csv(arr: &SnapshotArray, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "i,j,x,y,value")?;
    let hx = arr.lx / arr.cols as f64;
    let hy = arr.ly / arr.rows as f64;
    for j in 0..arr.rows as usize {
        for i in 0..arr.cols as usize {
            let v = arr.data[j * arr.cols as usize + i];
            writeln!(
                out,
                "{i},{j},{},{},{}",
                (i as f64 + 0.5) * hx,
                (j as f64 + 0.5) * hy,
                v
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_round_trip_is_bit_exact() {
        let g = Grid2D::new(8, 6, 1.0, 1.5).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (x * 37.1).sin() * (y * 11.3).cos() + 1e-17);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.bin");
        write_scalar(&path, &f).unwrap();
        let back = read_scalar(&path).unwrap();
        assert_eq!(back.grid, g);
        for (a, b) in f.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_dump_round_trips_values() {
        let g = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, y| 1.0 / (3.0 + x + y));
        let arr = SnapshotArray {
            cols: 4,
            rows: 4,
            lx: 1.0,
            ly: 1.0,
            data: f.data.clone(),
        };
        let mut buf = Vec::new();
        dump_csv(&arr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for (line, expected) in text.lines().skip(1).zip(&f.data) {
            let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert_eq!(v.to_bits(), expected.to_bits(), "line {line}");
        }
    }

    #[test]
    fn rejects_corrupt_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"JUNKxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(read_array(&path), Err(SnapshotError::BadMagic)));
    }
}
