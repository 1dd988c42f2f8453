//! Scalar intensity grids in a common spatial frame.

use std::fmt;

use crate::error::{Error, Result};

/// Extents of a 2D or 3D voxel grid. The x axis varies fastest in storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    extents: [usize; 3],
    rank: usize,
}

impl GridDims {
    /// A 2D grid of `width x height` pixels.
    pub fn d2(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "grid extents must be positive");
        GridDims {
            extents: [width, height, 1],
            rank: 2,
        }
    }

    /// A 3D grid of `width x height x depth` voxels.
    pub fn d3(width: usize, height: usize, depth: usize) -> Self {
        assert!(
            width > 0 && height > 0 && depth > 0,
            "grid extents must be positive"
        );
        GridDims {
            extents: [width, height, depth],
            rank: 3,
        }
    }

    /// Builds dims from a slice of 2 or 3 positive extents.
    pub fn from_extents(extents: &[usize]) -> Result<Self> {
        let dims = match extents {
            [w, h] if *w > 0 && *h > 0 => GridDims::d2(*w, *h),
            [w, h, d] if *w > 0 && *h > 0 && *d > 0 => GridDims::d3(*w, *h, *d),
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "extents must be 2 or 3 positive integers, got {extents:?}"
                )))
            }
        };
        // Guard against declared extents whose product cannot be addressed.
        let product = dims
            .extents
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e));
        if product.is_none() {
            return Err(Error::InvalidGrid(format!(
                "voxel count of {dims} overflows"
            )));
        }
        Ok(dims)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_2d(&self) -> bool {
        self.rank == 2
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.rank]
    }

    pub fn width(&self) -> usize {
        self.extents[0]
    }

    pub fn height(&self) -> usize {
        self.extents[1]
    }

    /// Depth extent; 1 for 2D grids.
    pub fn depth(&self) -> usize {
        self.extents[2]
    }

    pub fn voxel_count(&self) -> usize {
        self.extents[0] * self.extents[1] * self.extents[2]
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.extents();
        write!(f, "{}", e[0])?;
        for x in &e[1..] {
            write!(f, "x{x}")?;
        }
        Ok(())
    }
}

/// A 2D/3D scalar intensity grid with per-axis physical spacing.
///
/// Values are stored row-major with x fastest, so [`flatten`] is simply a
/// view of the storage and [`RasterImage::from_values`] is its inverse.
///
/// [`flatten`]: RasterImage::flatten
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    dims: GridDims,
    spacing: [f64; 3],
    values: Vec<f64>,
}

impl RasterImage {
    /// Builds an image from a flat value vector (the inverse of `flatten`).
    ///
    /// `spacing` must have one positive finite entry per grid axis; pass
    /// `None` for unit spacing. All values must be finite and the count must
    /// equal `dims.voxel_count()`.
    pub fn from_values(dims: GridDims, spacing: Option<&[f64]>, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.voxel_count() {
            return Err(Error::ValueCount {
                expected: dims.voxel_count(),
                got: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: idx });
        }
        let spacing = normalize_spacing(dims, spacing)?;
        Ok(RasterImage {
            dims,
            spacing,
            values,
        })
    }

    /// An image filled with a single value.
    pub fn constant(dims: GridDims, spacing: Option<&[f64]>, value: f64) -> Result<Self> {
        RasterImage::from_values(dims, spacing, vec![value; dims.voxel_count()])
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dims.rank()]
    }

    pub(crate) fn set_spacing(&mut self, spacing: &[f64]) -> Result<()> {
        self.spacing = normalize_spacing(self.dims, Some(spacing))?;
        Ok(())
    }

    /// The image as a vector in R^n, row-major with x fastest.
    pub fn flatten(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims.width() && y < self.dims.height() && z < self.dims.depth());
        x + self.dims.width() * (y + self.dims.height() * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// Checks that `other` lives on the same grid (dims and spacing).
    pub fn check_same_grid(&self, other: &RasterImage) -> Result<()> {
        if self.dims != other.dims || self.spacing() != other.spacing() {
            return Err(Error::GridMismatch {
                expected: format!("{} @ {:?}", self.dims, self.spacing()),
                got: format!("{} @ {:?}", other.dims, other.spacing()),
            });
        }
        Ok(())
    }
}

fn normalize_spacing(dims: GridDims, spacing: Option<&[f64]>) -> Result<[f64; 3]> {
    let mut out = [1.0; 3];
    if let Some(sp) = spacing {
        if sp.len() != dims.rank() {
            return Err(Error::InvalidGrid(format!(
                "spacing has {} entries for a rank-{} grid",
                sp.len(),
                dims.rank()
            )));
        }
        for (i, &s) in sp.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidGrid(format!("spacing {s} is not positive")));
            }
            out[i] = s;
        }
    }
    Ok(out)
}
