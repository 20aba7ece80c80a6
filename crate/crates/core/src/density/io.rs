//! Flat binary and CSV layouts for grid densities.
//!
//! Binary layout, all little endian:
//!
//! ```text
//! n            u64
//! shape[n]     u64 each
//! box_lo[n]    f64 each
//! box_hi[n]    f64 each
//! values[..]   f64 each, row-major (last axis fastest)
//! ```
//!
//! Block structure is not part of the layout; reattach it with
//! [`GridDensity::with_blocks`].

use std::io::{Read, Write};

use super::{Axis, Grid, GridDensity, MAX_DIM};
use crate::error::{Error, Result};

pub fn write_binary<W: Write>(density: &GridDensity, mut w: W) -> Result<()> {
    let grid = density.grid();
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for a in grid.axes() {
        w.write_all(&(a.points as u64).to_le_bytes())?;
    }
    for a in grid.axes() {
        w.write_all(&a.lo.to_le_bytes())?;
    }
    for a in grid.axes() {
        w.write_all(&a.hi.to_le_bytes())?;
    }
    for v in density.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridDensity> {
    let n = read_u64(&mut r)? as usize;
    if n == 0 || n > MAX_DIM {
        return Err(Error::InvalidGrid(format!("header dimension {n}")));
    }
    let shape = (0..n)
        .map(|_| read_u64(&mut r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let lo = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let hi = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let axes = (0..n)
        .map(|i| Axis::new(lo[i], hi[i], shape[i]))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(axes)?;
    let len = grid.len();
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::InvalidGrid("trailing bytes after density values".into()));
    }
    GridDensity::from_normalized_values(grid, values, None)
}

/// One row per node: coordinates `x0..x{n-1}` then `value`.
pub fn write_csv<W: Write>(density: &GridDensity, mut w: W) -> Result<()> {
    let grid = density.grid();
    let n = grid.dim();
    let header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},value", header.join(","))?;
    for (i, v) in density.values().iter().enumerate() {
        let x = grid.coords(i);
        let coords: Vec<String> = x[..n].iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{}", coords.join(","), v)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianMeasure;

    #[test]
    fn header_layout() {
        let g = GaussianMeasure::scalar(0.0, 1.0).unwrap();
        let d = GridDensity::from_gaussian(&g, &Grid::cube(1, 7.0, 32).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_binary(&d, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 1 + 2 + 32));
        assert_eq!(u64::from_le_bytes(buf[0..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 32);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), -7.0);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 7.0);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn truncated_or_padded_input_is_rejected() {
        let g = GaussianMeasure::scalar(0.0, 1.0).unwrap();
        let d = GridDensity::from_gaussian(&g, &Grid::cube(1, 7.0, 32).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_binary(&d, &mut buf).unwrap();
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_rows() {
        let grid = Grid::cube(2, 1.0, 16).unwrap();
        let d = GridDensity::from_fn(grid, |_| 1.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1,value");
        assert_eq!(lines.len(), 1 + 256);
        assert!(lines[1].starts_with("-1,-1,"));
    }
}
