//! Joint bilateral filter forward pass.
//!
//! For every voxel `k` the filter forms a weighted average of the input `x`
//! over a box window, where each neighbour `n` is weighted by a separable
//! spatial Gaussian on the grid offset and a range Gaussian on the guide
//! difference `z[k] - z[n]`:
//!
//! ```text
//! w[k]     = sum_n Gs(p_k - p_n) * Gr(z_k - z_n)
//! alpha[k] = sum_n Gs(p_k - p_n) * Gr(z_k - z_n) * x_n
//! y[k]     = alpha[k] / w[k]
//! ```
//!
//! Neighbours outside the volume are dropped and the remaining weights are
//! renormalized, so every output is a convex combination of its inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{JbfError, Result};
use crate::volume::{Dims, Volume};

/// Largest per-axis radius chosen by [`Window::for_params`].
pub const MAX_AUTO_RADIUS: usize = 7;

/// Trainable kernel widths of one filter layer. Spatial widths are in voxels,
/// the range width in intensity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub sigma_r: f64,
}

impl FilterParams {
    pub fn new(sigma_x: f64, sigma_y: f64, sigma_z: f64, sigma_r: f64) -> Self {
        FilterParams {
            sigma_x,
            sigma_y,
            sigma_z,
            sigma_r,
        }
    }

    /// Isotropic spatial width `s` with range width `r`.
    pub fn isotropic(s: f64, r: f64) -> Self {
        Self::new(s, s, s, r)
    }

    /// `[sigma_x, sigma_y, sigma_z, sigma_r]`
    pub fn to_array(self) -> [f64; 4] {
        [self.sigma_x, self.sigma_y, self.sigma_z, self.sigma_r]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn spatial(&self) -> [f64; 3] {
        [self.sigma_x, self.sigma_y, self.sigma_z]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["sigma_x", "sigma_y", "sigma_z", "sigma_r"]
            .iter()
            .zip(self.to_array())
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(JbfError::InvalidParam(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-axis half widths of the box neighbourhood. The window is fixed
/// independently of the sigmas so that perturbing a sigma never changes
/// which voxels take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub radii: [usize; 3],
}

impl Window {
    pub fn new(radii: [usize; 3]) -> Self {
        Window { radii }
    }

    /// `ceil(2 * sigma)` per axis, capped at [`MAX_AUTO_RADIUS`].
    pub fn for_params(params: &FilterParams) -> Self {
        let r = |s: f64| ((2.0 * s).ceil().max(0.0) as usize).min(MAX_AUTO_RADIUS);
        Window::new([r(params.sigma_x), r(params.sigma_y), r(params.sigma_z)])
    }

    /// Number of taps in the full (untruncated) window.
    pub fn taps(&self) -> usize {
        self.radii.iter().map(|r| 2 * r + 1).product()
    }
}

/// Intermediates of one forward pass, reused by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Normalizers `w[k]`. Always `>= 1` since the centre tap weighs 1.
    pub w: Volume,
    /// Unnormalized weighted sums `alpha[k]`.
    pub alpha: Volume,
    /// Filter output.
    pub y_hat: Volume,
}

#[inline]
pub fn gauss_range(c: f64, sigma_r: f64) -> f64 {
    (-(c * c) / (2.0 * sigma_r * sigma_r)).exp()
}

#[inline]
fn gauss_1d(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Separable spatial kernel at grid offset `d`.
pub fn gauss_spatial(d: [f64; 3], params: &FilterParams) -> f64 {
    gauss_1d(d[0], params.sigma_x) * gauss_1d(d[1], params.sigma_y) * gauss_1d(d[2], params.sigma_z)
}

/// Precomputed spatial weights over the window, indexed
/// `(dx + rx) + wx * ((dy + ry) + wy * (dz + rz))`.
pub(crate) struct SpatialTable {
    pub radii: [usize; 3],
    pub spans: [usize; 3],
    pub weights: Vec<f64>,
}

impl SpatialTable {
    pub fn new(params: &FilterParams, window: &Window) -> Self {
        let radii = window.radii;
        let spans = radii.map(|r| 2 * r + 1);
        let mut weights = Vec::with_capacity(window.taps());
        for dz in -(radii[2] as isize)..=radii[2] as isize {
            for dy in -(radii[1] as isize)..=radii[1] as isize {
                for dx in -(radii[0] as isize)..=radii[0] as isize {
                    weights.push(gauss_spatial([dx as f64, dy as f64, dz as f64], params));
                }
            }
        }
        SpatialTable {
            radii,
            spans,
            weights,
        }
    }

    #[inline]
    pub fn at(&self, d: [isize; 3]) -> f64 {
        let ix = (d[0] + self.radii[0] as isize) as usize;
        let iy = (d[1] + self.radii[1] as isize) as usize;
        let iz = (d[2] + self.radii[2] as isize) as usize;
        self.weights[ix + self.spans[0] * (iy + self.spans[1] * iz)]
    }
}

/// Visits the in-bounds window around voxel `k` in z-outer, y-middle,
/// x-inner order, passing the neighbour's flat index and its offset
/// `p_n - p_k`.
#[inline]
pub(crate) fn for_each_neighbor(
    dims: Dims,
    radii: [usize; 3],
    k: usize,
    mut f: impl FnMut(usize, [isize; 3]),
) {
    let [nx, ny, nz] = dims;
    let c = [k % nx, (k / nx) % ny, k / (nx * ny)];
    let lo = |a: usize| c[a].saturating_sub(radii[a]);
    let hi = |a: usize, n: usize| (c[a] + radii[a]).min(n - 1);
    for z in lo(2)..=hi(2, nz) {
        for y in lo(1)..=hi(1, ny) {
            let row = nx * (y + ny * z);
            for x in lo(0)..=hi(0, nx) {
                let d = [
                    x as isize - c[0] as isize,
                    y as isize - c[1] as isize,
                    z as isize - c[2] as isize,
                ];
                f(row + x, d);
            }
        }
    }
}

pub(crate) fn check_inputs(x: &Volume, z: &Volume, params: &FilterParams) -> Result<()> {
    x.ensure_same_dims(z)?;
    params.validate()
}

/// Evaluates the filter at every voxel, keeping `w` and `alpha` for backward.
///
/// Outputs are clamped to the min/max of the input over each neighbourhood.
/// Mathematically this is a no-op; it keeps the convex-combination bound
/// exact under rounding.
pub fn jbf_forward(
    x: &Volume,
    z: &Volume,
    params: &FilterParams,
    window: &Window,
) -> Result<ForwardCache> {
    check_inputs(x, z, params)?;
    let dims = x.dims();
    let table = SpatialTable::new(params, window);
    let xs = x.data();
    let zs = z.data();
    let sigma_r = params.sigma_r;

    let per_voxel: Vec<(f64, f64, f64)> = (0..x.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|k| {
            let zk = zs[k];
            let mut w = 0.0;
            let mut alpha = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for_each_neighbor(dims, window.radii, k, |n, d| {
                let g = table.at(d) * gauss_range(zk - zs[n], sigma_r);
                let xn = xs[n];
                w += g;
                alpha += g * xn;
                lo = lo.min(xn);
                hi = hi.max(xn);
            });
            (w, alpha, (alpha / w).clamp(lo, hi))
        })
        .collect();

    let mut w = Vec::with_capacity(per_voxel.len());
    let mut alpha = Vec::with_capacity(per_voxel.len());
    let mut y_hat = Vec::with_capacity(per_voxel.len());
    for (a, b, c) in per_voxel {
        w.push(a);
        alpha.push(b);
        y_hat.push(c);
    }
    Ok(ForwardCache {
        w: Volume::from_parts(dims, w),
        alpha: Volume::from_parts(dims, alpha),
        y_hat: Volume::from_parts(dims, y_hat),
    })
}

/// Truncated, renormalized Gaussian smoothing with per-axis widths.
/// A zero width on an axis with radius zero is allowed and leaves that axis untouched.
pub fn gaussian_smooth(x: &Volume, sigmas: [f64; 3], radii: [usize; 3]) -> Result<Volume> {
    for (s, r) in sigmas.iter().zip(radii) {
        if !s.is_finite() || *s < 0.0 || (*s == 0.0 && r > 0) {
            return Err(JbfError::InvalidParam(format!(
                "smoothing width {s} invalid for radius {r}"
            )));
        }
    }
    let axis_weights: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            let r = radii[a] as isize;
            (-r..=r)
                .map(|d| {
                    if d == 0 {
                        1.0
                    } else {
                        gauss_1d(d as f64, sigmas[a])
                    }
                })
                .collect()
        })
        .collect();
    let dims = x.dims();
    let xs = x.data();
    let out: Vec<f64> = (0..x.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|k| {
            let mut w = 0.0;
            let mut acc = 0.0;
            for_each_neighbor(dims, radii, k, |n, d| {
                let g = axis_weights[0][(d[0] + radii[0] as isize) as usize]
                    * axis_weights[1][(d[1] + radii[1] as isize) as usize]
                    * axis_weights[2][(d[2] + radii[2] as isize) as usize];
                w += g;
                acc += g * xs[n];
            });
            acc / w
        })
        .collect();
    Ok(Volume::from_parts(dims, out))
}
