//! GF01 grid-field files.
//!
//! Layout (little-endian): magic `GF01`, `u32` ndim, then per axis
//! `f64 origin, f64 spacing, u64 count` (x first), then the values as `f64`
//! with x varying fastest. Complex stacks store `(re, im)` pairs in place of
//! each value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid3, ScalarField3};

pub const MAGIC: &[u8; 4] = b"GF01";

/// Raw contents of a GF01 file.
#[derive(Debug, Clone, PartialEq)]
pub struct GfData {
    pub axes: Vec<(f64, f64, u64)>,
    pub values: Vec<f64>,
}

impl GfData {
    fn nodes(&self) -> Result<usize> {
        self.axes.iter().try_fold(1usize, |acc, a| {
            usize::try_from(a.2).ok().and_then(|c| acc.checked_mul(c)).ok_or_else(|| {
                Error::Format("axis counts overflow".into())
            })
        })
    }
}

pub fn encode(data: &GfData, out: &mut impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(data.axes.len() as u32).to_le_bytes())?;
    for &(origin, spacing, count) in &data.axes {
        out.write_all(&origin.to_le_bytes())?;
        out.write_all(&spacing.to_le_bytes())?;
        out.write_all(&count.to_le_bytes())?;
    }
    for v in &data.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

/// Reads a file whose value count is `values_per_node` times the node count.
pub fn decode(input: &mut impl Read, values_per_node: usize) -> Result<GfData> {
    if &read_array::<4>(input)? != MAGIC {
        return Err(Error::Format("missing GF01 magic".into()));
    }
    let ndim = u32::from_le_bytes(read_array(input)?) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!("unsupported dimension count {ndim}")));
    }
    let mut axes = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let origin = f64::from_le_bytes(read_array(input)?);
        let spacing = f64::from_le_bytes(read_array(input)?);
        let count = u64::from_le_bytes(read_array(input)?);
        axes.push((origin, spacing, count));
    }
    let mut data = GfData { axes, values: Vec::new() };
    let total = data
        .nodes()?
        .checked_mul(values_per_node)
        .ok_or_else(|| Error::Format("value count overflows".into()))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * total {
        return Err(Error::Format(format!(
            "expected {total} values ({} bytes), found {} bytes",
            8 * total,
            bytes.len()
        )));
    }
    data.values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(data)
}

fn axes_of(grid: &Grid3) -> Vec<(f64, f64, u64)> {
    [grid.x, grid.y, grid.z].iter().map(|a| (a.origin(), a.spacing(), a.count() as u64)).collect()
}

fn grid_of(axes: &[(f64, f64, u64)]) -> Result<Grid3> {
    if axes.len() != 3 {
        return Err(Error::Format(format!("expected a 3-D field, found {} axes", axes.len())));
    }
    let axis = |a: &(f64, f64, u64)| {
        Axis::new(a.0, a.1, a.2 as usize).map_err(|e| Error::Format(format!("bad axis: {e}")))
    };
    Ok(Grid3::new(axis(&axes[0])?, axis(&axes[1])?, axis(&axes[2])?))
}

pub fn write_field(path: &Path, field: &ScalarField3) -> Result<()> {
    let data = GfData { axes: axes_of(field.grid()), values: field.values().iter().copied().collect() };
    let mut out = BufWriter::new(File::create(path)?);
    encode(&data, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField3> {
    let data = decode(&mut BufReader::new(File::open(path)?), 1)?;
    let grid = grid_of(&data.axes)?;
    ScalarField3::from_vec(grid, data.values)
}

/// Writes complex values on `grid`, laid out like a real field.
pub fn write_complex(path: &Path, grid: &Grid3, values: &Array3<Complex64>) -> Result<()> {
    let (nz, ny, nx) = grid.shape();
    if values.dim() != (nz, ny, nx) {
        return Err(Error::invalid(format!("complex array shape {:?} does not match grid", values.dim())));
    }
    let data = GfData {
        axes: axes_of(grid),
        values: values.iter().flat_map(|c| [c.re, c.im]).collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    encode(&data, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_complex(path: &Path) -> Result<(Grid3, Array3<Complex64>)> {
    let data = decode(&mut BufReader::new(File::open(path)?), 2)?;
    let grid = grid_of(&data.axes)?;
    let values: Vec<Complex64> = data.values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let array = Array3::from_shape_vec(grid.shape(), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok((grid, array))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample;

    fn grid() -> Grid3 {
        Grid3::new(
            Axis::new(-1.0, 0.5, 4).unwrap(),
            Axis::new(-2.0, 1.0, 3).unwrap(),
            Axis::new(1.0, 0.25, 2).unwrap(),
        )
    }

    #[test]
    fn header_layout_is_fixed() {
        let data = GfData { axes: vec![(1.5, 0.25, 2)], values: vec![3.0, -1.0] };
        let mut bytes = Vec::new();
        encode(&data, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"GF01");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1.5);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 0.25);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 3.0);
        assert_eq!(bytes.len(), 48);
        assert_eq!(decode(&mut bytes.as_slice(), 1).unwrap(), data);
    }

    #[test]
    fn x_varies_fastest() {
        let g = grid();
        let f = sample(&g, |x, y, z| x + 10.0 * y + 100.0 * z).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.gf");
        write_field(&path, &f).unwrap();
        let raw = decode(&mut File::open(&path).unwrap(), 1).unwrap();
        assert_eq!(raw.values[0], -1.0 - 20.0 + 100.0);
        assert_eq!(raw.values[1], -0.5 - 20.0 + 100.0);
        assert_eq!(raw.values[4], -1.0 - 10.0 + 100.0);
        let back = read_field(&path).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn complex_roundtrip() {
        let g = grid();
        let values = Array3::from_shape_fn(g.shape(), |(k, j, i)| Complex64::new(i as f64, (j + 10 * k) as f64));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.gf");
        write_complex(&path, &g, &values).unwrap();
        let (g2, v2) = read_complex(&path).unwrap();
        assert_eq!(g2, g);
        assert_eq!(v2, values);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let g = grid();
        let f = ScalarField3::zeros(g);
        let mut bytes = Vec::new();
        encode(&GfData { axes: axes_of(&g), values: f.values().iter().copied().collect() }, &mut bytes).unwrap();
        assert!(matches!(decode(&mut &bytes[..bytes.len() - 8], 1), Err(Error::Format(_))));
        assert!(matches!(decode(&mut &bytes[..10], 1), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&mut bad.as_slice(), 1), Err(Error::Format(_))));
        assert!(matches!(decode(&mut bytes.as_slice(), 2), Err(Error::Format(_))));
    }
}
