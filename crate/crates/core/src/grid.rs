//! Uniform axes, slab grids and real-valued fields on them.
//!
//! Fields are stored as `Array3` with shape `(nz, ny, nx)`, so that in memory
//! the x index runs fastest. This layout is also the on-disk order of GF01.

use ndarray::{Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly spaced coordinates `origin + i * spacing` for `0 <= i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    origin: f64,
    spacing: f64,
    count: usize,
    end: f64,
}

impl Axis {
    pub fn new(origin: f64, spacing: f64, count: usize) -> Result<Self> {
        if !origin.is_finite() || !spacing.is_finite() || spacing <= 0.0 {
            return Err(Error::invalid(format!(
                "axis needs finite origin and positive spacing, got origin={origin}, spacing={spacing}"
            )));
        }
        if count < 2 {
            return Err(Error::invalid(format!("axis count must be >= 2, got {count}")));
        }
        let end = origin + (count - 1) as f64 * spacing;
        Ok(Self { origin, spacing, count, end })
    }

    /// Closed sampling of `[lo, hi]`: both endpoints are nodes.
    pub fn closed(lo: f64, hi: f64, count: usize) -> Result<Self> {
        check_bounds(lo, hi)?;
        if count < 2 {
            return Err(Error::invalid(format!("axis count must be >= 2, got {count}")));
        }
        let mut axis = Self::new(lo, (hi - lo) / (count - 1) as f64, count)?;
        axis.end = hi;
        Ok(axis)
    }

    /// Periodic sampling of `[lo, hi)`: the right endpoint is excluded so the
    /// DFT over this axis approximates the continuous transform.
    pub fn periodic(lo: f64, hi: f64, count: usize) -> Result<Self> {
        check_bounds(lo, hi)?;
        if count < 2 {
            return Err(Error::invalid(format!("axis count must be >= 2, got {count}")));
        }
        Self::new(lo, (hi - lo) / count as f64, count)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.end
        } else {
            self.origin + i as f64 * self.spacing
        }
    }

    pub fn last(&self) -> f64 {
        self.coordinate(self.count - 1)
    }

    pub fn coordinates(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.coordinate(i))
    }

    /// Index of the node nearest to `t`, clamped into the axis.
    pub fn nearest(&self, t: f64) -> usize {
        let i = ((t - self.origin) / self.spacing).round();
        i.clamp(0.0, (self.count - 1) as f64) as usize
    }

    /// Same origin, spacing and count within a relative tolerance.
    pub fn matches(&self, other: &Axis) -> bool {
        let tol = 1e-12 * self.spacing.abs().max(self.origin.abs());
        self.count == other.count
            && (self.origin - other.origin).abs() <= tol
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
    }
}

/// `make_axis` with closed sampling.
pub fn make_axis(lo: f64, hi: f64, count: usize) -> Result<Axis> {
    Axis::closed(lo, hi, count)
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("non-finite axis bounds ({lo}, {hi})")));
    }
    if hi <= lo {
        return Err(Error::invalid(format!("axis needs hi > lo, got ({lo}, {hi})")));
    }
    Ok(())
}

/// A slab grid: x and y are the horizontal axes, z the vertical one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub x: Axis,
    pub y: Axis,
    pub z: Axis,
}

impl Grid3 {
    pub fn new(x: Axis, y: Axis, z: Axis) -> Self {
        Self { x, y, z }
    }

    /// Square periodic `[-r, r)^2` horizontal grid over a closed z-range.
    pub fn slab(r: f64, n: usize, z_lo: f64, z_hi: f64, nz: usize) -> Result<Self> {
        let xy = Axis::periodic(-r, r, n)?;
        Ok(Self::new(xy, xy, Axis::closed(z_lo, z_hi, nz)?))
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.z.count(), self.y.count(), self.x.count())
    }

    pub fn len(&self) -> usize {
        self.x.count() * self.y.count() * self.z.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_horizontal(&self, other: &Grid3) -> bool {
        self.x.matches(&other.x) && self.y.matches(&other.y)
    }

    pub fn with_z(&self, z: Axis) -> Self {
        Self::new(self.x, self.y, z)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.x.coordinate(i), self.y.coordinate(j), self.z.coordinate(k)]
    }
}

/// Real values on every node of a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    grid: Grid3,
    values: Array3<f64>,
}

impl ScalarField3 {
    pub fn zeros(grid: Grid3) -> Self {
        Self { grid, values: Array3::zeros(grid.shape()) }
    }

    pub fn from_array(grid: Grid3, values: Array3<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::invalid(format!(
                "field shape {:?} does not match grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("field contains non-finite value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Row-major values, x fastest.
    pub fn from_vec(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        let array = Array3::from_shape_vec(grid.shape(), values).map_err(|_| {
            Error::invalid(format!("{} values do not fill a grid of {} nodes", len, grid.len()))
        })?;
        Self::from_array(grid, array)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    /// Value at node `(i, j, k)` = `(x, y, z)` indices.
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[[k, j, i]]
    }

    /// The z = z_k slice, shape `(ny, nx)`.
    pub fn layer(&self, k: usize) -> Result<ArrayView2<'_, f64>> {
        let nz = self.grid.z.count();
        if k >= nz {
            return Err(Error::Index { index: k, len: nz });
        }
        Ok(self.values.index_axis(ndarray::Axis(0), k))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self + scale * other` on a shared grid.
    pub fn add_scaled(&self, scale: f64, other: &ScalarField3) -> Result<ScalarField3> {
        self.check_same_grid(other)?;
        let values = &self.values + &(&other.values * scale);
        Ok(Self { grid: self.grid, values })
    }

    pub fn scaled(&self, scale: f64) -> ScalarField3 {
        Self { grid: self.grid, values: &self.values * scale }
    }

    pub fn check_same_grid(&self, other: &ScalarField3) -> Result<()> {
        let (a, b) = (&self.grid, &other.grid);
        if a.same_horizontal(b) && a.z.matches(&b.z) {
            Ok(())
        } else {
            Err(Error::invalid("fields live on different grids"))
        }
    }
}

/// Samples `f(x, y, z)` at every node.
pub fn sample<F>(grid: &Grid3, f: F) -> Result<ScalarField3>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let (nz, ny, nx) = grid.shape();
    let mut values = Array3::zeros((nz, ny, nx));
    for k in 0..nz {
        let z = grid.z.coordinate(k);
        for j in 0..ny {
            let y = grid.y.coordinate(j);
            for i in 0..nx {
                let x = grid.x.coordinate(i);
                let v = f(x, y, z);
                if !v.is_finite() {
                    return Err(Error::Sampling { x, y, z, value: v });
                }
                values[[k, j, i]] = v;
            }
        }
    }
    Ok(ScalarField3 { grid: *grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_axis_examples() {
        let a = make_axis(-10.0, 10.0, 5).unwrap();
        assert_eq!(a.origin(), -10.0);
        assert_eq!(a.spacing(), 5.0);
        let b = make_axis(1.0, 2.0, 2).unwrap();
        assert_eq!((b.origin(), b.spacing()), (1.0, 1.0));
        let c = make_axis(-8.0, 8.0, 512).unwrap();
        assert_eq!(c.spacing(), 16.0 / 511.0);
        assert_eq!(c.last(), 8.0);
    }

    #[test]
    fn axis_rejects_bad_input() {
        assert!(make_axis(0.0, 1.0, 1).is_err());
        assert!(make_axis(1.0, 1.0, 4).is_err());
        assert!(make_axis(f64::NAN, 1.0, 4).is_err());
        assert!(make_axis(0.0, f64::INFINITY, 4).is_err());
    }

    #[test]
    fn periodic_axis_excludes_endpoint() {
        let a = Axis::periodic(-10.0, 10.0, 128).unwrap();
        assert_eq!(a.spacing(), 20.0 / 128.0);
        assert_eq!(a.coordinate(64), 0.0);
        assert!(a.last() < 10.0);
    }

    #[test]
    fn sample_layouts() {
        let ax = make_axis(-1.0, 1.0, 3).unwrap();
        let grid = Grid3::new(ax, ax, ax);
        let zero = sample(&grid, |_, _, _| 0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let fx = sample(&grid, |x, _, _| x).unwrap();
        for row in fx.values().lanes(ndarray::Axis(2)) {
            assert_eq!(row.to_vec(), vec![-1.0, 0.0, 1.0]);
        }
        // x fastest in the flat layout
        let flat: Vec<f64> = fx.values().iter().take(3).copied().collect();
        assert_eq!(flat, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn sample_reports_offending_node() {
        let ax = make_axis(-1.0, 1.0, 3).unwrap();
        let grid = Grid3::new(ax, ax, ax);
        let err = sample(&grid, |x, y, z| if x == 0.0 && y == 1.0 && z == -1.0 { f64::NAN } else { 1.0 })
            .unwrap_err();
        match err {
            Error::Sampling { x, y, z, .. } => assert_eq!((x, y, z), (0.0, 1.0, -1.0)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn layer_slices() {
        let xy = make_axis(-1.0, 1.0, 3).unwrap();
        let z = make_axis(1.0, 2.0, 3).unwrap();
        let grid = Grid3::new(xy, xy, z);
        let f = sample(&grid, |_, _, z| z).unwrap();
        assert!(f.layer(1).unwrap().iter().all(|&v| v == 1.5));
        assert!(matches!(f.layer(3), Err(Error::Index { index: 3, len: 3 })));

        let zero = ScalarField3::zeros(grid);
        assert!(zero.layer(0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_of_gaussian_matches_direct_2d_sampling() {
        let grid = Grid3::slab(3.0, 16, 0.0, 1.0, 5).unwrap();
        let g = |x: f64, y: f64, z: f64| (-(x * x) - 2.0 * y * y - z).exp();
        let f = sample(&grid, g).unwrap();
        let k = 3;
        let z = grid.z.coordinate(k);
        let layer = f.layer(k).unwrap();
        for j in 0..16 {
            for i in 0..16 {
                let direct = g(grid.x.coordinate(i), grid.y.coordinate(j), z);
                assert_eq!(layer[[j, i]], direct);
            }
        }
    }
}
