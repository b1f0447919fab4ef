//! Dense 3-D scalar fields.
//!
//! A [`Volume`] stores `nx * ny * nz` values in x-fastest order, so voxel
//! `(x, y, z)` lives at `x + nx * (y + ny * z)`. Voxel spacing is unit in
//! every axis; anisotropy is expressed through per-axis filter widths.
//! Values are kept in 64-bit precision; the on-disk format is 32-bit.

mod io;
mod phantom;

pub use io::{export_pgm_slice, load_volume, save_volume, volume_paths, PgmWindow, VolumeHeader};
pub use phantom::{make_phantom, Phantom};

use crate::error::{JbfError, Result};

pub type Dims = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f64>,
}

impl Volume {
    /// Builds a volume, rejecting zero-sized axes, wrong lengths and non-finite values.
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(JbfError::LengthMismatch {
                dims,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(JbfError::NonFinite { index });
        }
        Ok(Volume { dims, data })
    }

    pub fn filled(dims: Dims, value: f64) -> Result<Self> {
        check_dims(dims)?;
        if !value.is_finite() {
            return Err(JbfError::NonFinite { index: 0 });
        }
        Ok(Volume {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data)
    }

    /// Wraps engine output. Callers guarantee length and finiteness.
    pub(crate) fn from_parts(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Volume { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Inverse of [`Volume::index`].
    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// Returns a copy with voxel `index` replaced. Used by finite-difference probes.
    pub fn with_voxel(&self, index: usize, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(JbfError::NonFinite { index });
        }
        let mut out = self.clone();
        out.data[index] = value;
        Ok(out)
    }

    /// Applies `f` voxel-wise. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation of the voxel values.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var =
            self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    pub fn ensure_same_dims(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(JbfError::DimMismatch {
                expected: self.dims,
                found: other.dims,
            });
        }
        Ok(())
    }
}

pub(crate) fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(JbfError::InvalidDims(dims));
    }
    Ok(())
}

/// Axis-aligned half-open box `[origin, origin + extent)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub origin: [usize; 3],
    pub extent: [usize; 3],
}

impl Roi {
    pub fn new(origin: [usize; 3], extent: [usize; 3]) -> Self {
        Roi { origin, extent }
    }

    /// The box covering all of `dims`.
    pub fn full(dims: Dims) -> Self {
        Roi {
            origin: [0; 3],
            extent: dims,
        }
    }

    pub fn check_within(&self, dims: Dims) -> Result<()> {
        let fits = (0..3).all(|a| {
            self.extent[a] > 0
                && self.origin[a]
                    .checked_add(self.extent[a])
                    .is_some_and(|end| end <= dims[a])
        });
        if fits {
            Ok(())
        } else {
            Err(JbfError::RoiOutOfBounds {
                origin: self.origin,
                extent: self.extent,
                dims,
            })
        }
    }
}

/// Copies the voxels inside `roi`.
pub fn crop(v: &Volume, roi: &Roi) -> Result<Volume> {
    roi.check_within(v.dims)?;
    let [x0, y0, z0] = roi.origin;
    let [dx, dy, dz] = roi.extent;
    let mut data = Vec::with_capacity(dx * dy * dz);
    for z in z0..z0 + dz {
        for y in y0..y0 + dy {
            let start = v.index(x0, y, z);
            data.extend_from_slice(&v.data[start..start + dx]);
        }
    }
    Ok(Volume::from_parts(roi.extent, data))
}
