//! Flat binary container for field snapshots plus JSON sidecars.
//!
//! Layout: magic `SQGF`, version, grid size, component count, flags, then the
//! coefficient array per component in row-major k-order as little-endian
//! f64 pairs.

use num_complex::Complex;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"SQGF";
const VERSION: u32 = 1;

const FLAG_MEAN_ZERO: u32 = 1;

pub fn write_field<T: Real>(f: &SpectralField<T>, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(16 + f.comps.len() * f.grid.len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.grid.n() as u64).to_le_bytes());
    buf.extend_from_slice(&(f.ncomp() as u32).to_le_bytes());
    let flags = if f.mean_zero { FLAG_MEAN_ZERO } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for c in &f.comps {
        for v in c.iter() {
            buf.extend_from_slice(&v.re.to_f64_lossy().to_le_bytes());
            buf.extend_from_slice(&v.im.to_f64_lossy().to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_field<T: Real>(path: &Path) -> Result<SpectralField<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[0..4] != MAGIC {
        return Err(CoreError::Format("not a field container".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CoreError::Format(format!("unsupported container version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let ncomp = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let flags = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let grid = Grid::new(n)?;
    let expected = 24 + ncomp * n * n * 16;
    if bytes.len() != expected {
        return Err(CoreError::Format(format!(
            "container holds {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut comps = Vec::with_capacity(ncomp);
    let mut off = 24;
    for _ in 0..ncomp {
        let mut c = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
            off += 16;
            c.push(Complex::new(T::of(re), T::of(im)));
        }
        comps.push(c);
    }
    Ok(SpectralField { grid, comps, mean_zero: flags & FLAG_MEAN_ZERO != 0 })
}

/// Write a JSON value with sorted keys (serde_json's map is ordered), no
/// timestamps, so identical runs produce identical bytes.
pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CoreError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip() {
        let g = Grid::new(16).unwrap();
        let mut f = SpectralField::<f64>::vector(g);
        f.comps[0][g.coeff_index(1, 2)] = Complex::new(0.25, -1.5);
        f.comps[1][g.coeff_index(-3, 0)] = Complex::new(1e-9, 2.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.sqgf");
        write_field(&f, &p).unwrap();
        let back = read_field::<f64>(&p).unwrap();
        assert_eq!(back.grid.n(), 16);
        assert_eq!(back.ncomp(), 2);
        for c in 0..2 {
            assert_eq!(back.comps[c], f.comps[c]);
        }
        assert_eq!(back.mean_zero, f.mean_zero);
    }
}
