//! Analytical gradients through one filter layer.
//!
//! With upstream gradient `g = dL/dy` and `c[k] = g[k] / w[k]`, every
//! derivative of `y[k] = alpha[k] / w[k]` collapses to the form
//! `c[k] * sum_n dG_kn * (x_n - y[k])`, which keeps the contributions of
//! a constant input exactly zero:
//!
//! * sigma:  `dG/dsigma = G * d^2 / sigma^3` on the matching factor, where
//!   `d` is the grid offset along that axis or the guide difference.
//! * input:  `dL/dx[i] = sum_{k in N(i)} c[k] * G_ki`.
//! * guide:  for `k != i` the pair `(k, i)` contributes
//!   `c[k] * G_ki * (z_k - z_i) / sigma_r^2 * (x_i - y[k])`; for `k == i`
//!   the whole neighbourhood of `i` contributes
//!   `c[i] * sum_n G_in * (z_n - z_i) / sigma_r^2 * (x_n - y[i])`.
//!
//! All three are gathers over the window around the output voxel. The
//! window is symmetric, so `i in N(k)` iff `k in N(i)`, and no voxel is
//! written by more than one task.

use rayon::prelude::*;

use crate::error::{JbfError, Result};
use crate::filter::{
    check_inputs, for_each_neighbor, gauss_range, FilterParams, ForwardCache, SpatialTable, Window,
};
use crate::volume::Volume;

/// Voxels per block in the fixed-order sigma reduction.
const REDUCE_BLOCK: usize = 1024;

/// Gradients of the loss with respect to everything one layer consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `[dL/dsigma_x, dL/dsigma_y, dL/dsigma_z, dL/dsigma_r]`
    pub d_sigma: [f64; 4],
    pub d_input: Volume,
    pub d_guide: Volume,
}

#[derive(Clone, Copy)]
struct Parts {
    sigma: bool,
    input: bool,
    guide: bool,
}

struct Gathered {
    d_sigma: [f64; 4],
    d_input: Option<Vec<f64>>,
    d_guide: Option<Vec<f64>>,
}

fn check_cache(x: &Volume, cache: &ForwardCache, dl_dy: &Volume) -> Result<()> {
    let dims = x.dims();
    for (name, v) in [
        ("w", &cache.w),
        ("alpha", &cache.alpha),
        ("y_hat", &cache.y_hat),
        ("dL/dy", dl_dy),
    ] {
        if v.dims() != dims {
            return Err(JbfError::Inconsistent(format!(
                "{name} has dims {:?}, layer input has {dims:?}",
                v.dims()
            )));
        }
    }
    Ok(())
}

fn gather(
    x: Option<&Volume>,
    z: &Volume,
    params: &FilterParams,
    window: &Window,
    cache: &ForwardCache,
    dl_dy: &Volume,
    parts: Parts,
) -> Gathered {
    let dims = z.dims();
    let n = z.len();
    let table = SpatialTable::new(params, window);
    let zs = z.data();
    let ys = cache.y_hat.data();
    let coef: Vec<f64> = dl_dy
        .data()
        .par_iter()
        .zip(cache.w.data().par_iter())
        .map(|(g, w)| g / w)
        .collect();
    let xs = x.map(Volume::data);

    let [sx, sy, sz, sr] = params.to_array();
    let inv_cube = [
        1.0 / (sx * sx * sx),
        1.0 / (sy * sy * sy),
        1.0 / (sz * sz * sz),
        1.0 / (sr * sr * sr),
    ];
    let inv_r2 = 1.0 / (sr * sr);

    let per_voxel: Vec<([f64; 4], f64, f64)> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let zi = zs[i];
            let yi = ys[i];
            let ci = coef[i];
            let xi = xs.map_or(0.0, |xs| xs[i]);
            let mut sig = [0.0; 4];
            let mut d_in = 0.0;
            let mut d_gd = 0.0;
            for_each_neighbor(dims, window.radii, i, |nb, d| {
                let dz = zs[nb] - zi;
                let g = table.at(d) * gauss_range(dz, params.sigma_r);
                if parts.input {
                    d_in += coef[nb] * g;
                }
                if let Some(xs) = xs {
                    let xn = xs[nb];
                    if parts.sigma {
                        let t = ci * g * (xn - yi);
                        sig[0] += t * (d[0] * d[0]) as f64 * inv_cube[0];
                        sig[1] += t * (d[1] * d[1]) as f64 * inv_cube[1];
                        sig[2] += t * (d[2] * d[2]) as f64 * inv_cube[2];
                        sig[3] += t * (dz * dz) * inv_cube[3];
                    }
                    if parts.guide {
                        let neighbor_centred = coef[nb] * (xi - ys[nb]);
                        let self_centred = ci * (xn - yi);
                        d_gd += g * dz * inv_r2 * (neighbor_centred + self_centred);
                    }
                }
            });
            (sig, d_in, d_gd)
        })
        .collect();

    let d_sigma = if parts.sigma {
        let blocks: Vec<[f64; 4]> = per_voxel
            .par_chunks(REDUCE_BLOCK)
            .map(|chunk| {
                chunk.iter().fold([0.0; 4], |mut acc, (s, _, _)| {
                    for a in 0..4 {
                        acc[a] += s[a];
                    }
                    acc
                })
            })
            .collect();
        blocks.iter().fold([0.0; 4], |mut acc, b| {
            for a in 0..4 {
                acc[a] += b[a];
            }
            acc
        })
    } else {
        [0.0; 4]
    };
    Gathered {
        d_sigma,
        d_input: parts.input.then(|| per_voxel.iter().map(|p| p.1).collect()),
        d_guide: parts.guide.then(|| per_voxel.iter().map(|p| p.2).collect()),
    }
}

/// `dL/dsigma` for `[sigma_x, sigma_y, sigma_z, sigma_r]`.
pub fn grad_sigma(
    x: &Volume,
    z: &Volume,
    params: &FilterParams,
    window: &Window,
    cache: &ForwardCache,
    dl_dy: &Volume,
) -> Result<[f64; 4]> {
    check_inputs(x, z, params)?;
    check_cache(x, cache, dl_dy)?;
    let parts = Parts {
        sigma: true,
        input: false,
        guide: false,
    };
    Ok(gather(Some(x), z, params, window, cache, dl_dy, parts).d_sigma)
}

/// `dL/dx`. Does not need the layer input itself, only the guide and the cache.
pub fn grad_input(
    z: &Volume,
    params: &FilterParams,
    window: &Window,
    cache: &ForwardCache,
    dl_dy: &Volume,
) -> Result<Volume> {
    params.validate()?;
    check_cache(z, cache, dl_dy)?;
    let parts = Parts {
        sigma: false,
        input: true,
        guide: false,
    };
    let g = gather(None, z, params, window, cache, dl_dy, parts);
    Ok(Volume::from_parts(z.dims(), g.d_input.unwrap_or_default()))
}

/// `dL/dz`, accumulating the neighbour (`k != i`) and centre (`k == i`) cases.
pub fn grad_guide(
    x: &Volume,
    z: &Volume,
    params: &FilterParams,
    window: &Window,
    cache: &ForwardCache,
    dl_dy: &Volume,
) -> Result<Volume> {
    check_inputs(x, z, params)?;
    check_cache(x, cache, dl_dy)?;
    let parts = Parts {
        sigma: false,
        input: false,
        guide: true,
    };
    let g = gather(Some(x), z, params, window, cache, dl_dy, parts);
    Ok(Volume::from_parts(z.dims(), g.d_guide.unwrap_or_default()))
}

/// All three gradients in a single pass over the windows.
pub fn backward(
    x: &Volume,
    z: &Volume,
    params: &FilterParams,
    window: &Window,
    cache: &ForwardCache,
    dl_dy: &Volume,
) -> Result<GradientBundle> {
    check_inputs(x, z, params)?;
    check_cache(x, cache, dl_dy)?;
    let parts = Parts {
        sigma: true,
        input: true,
        guide: true,
    };
    let g = gather(Some(x), z, params, window, cache, dl_dy, parts);
    let dims = x.dims();
    Ok(GradientBundle {
        d_sigma: g.d_sigma,
        d_input: Volume::from_parts(dims, g.d_input.unwrap_or_default()),
        d_guide: Volume::from_parts(dims, g.d_guide.unwrap_or_default()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::jbf_forward;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: [usize; 3], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Volume {
        Volume::from_fn(dims, |_, _, _| rng.random_range(lo..hi)).unwrap()
    }

    fn setup(seed: u64) -> (Volume, Volume, Volume, FilterParams, Window) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [5, 5, 3];
        let x = random(dims, &mut rng, -150.0, 500.0);
        let z = random(dims, &mut rng, -150.0, 500.0);
        let g = random(dims, &mut rng, -1.0, 1.0);
        (
            x,
            z,
            g,
            FilterParams::new(1.2, 0.8, 1.0, 90.0),
            Window::new([2, 2, 1]),
        )
    }

    #[test]
    fn fused_matches_separate_passes_bitwise() {
        let (x, z, g, p, w) = setup(11);
        let cache = jbf_forward(&x, &z, &p, &w).unwrap();
        let bundle = backward(&x, &z, &p, &w, &cache, &g).unwrap();
        assert_eq!(
            bundle.d_sigma,
            grad_sigma(&x, &z, &p, &w, &cache, &g).unwrap()
        );
        assert_eq!(bundle.d_input, grad_input(&z, &p, &w, &cache, &g).unwrap());
        assert_eq!(
            bundle.d_guide,
            grad_guide(&x, &z, &p, &w, &cache, &g).unwrap()
        );
    }

    #[test]
    fn radius_zero_bundle() {
        let (x, z, g, p, _) = setup(2);
        let w = Window::new([0; 3]);
        let cache = jbf_forward(&x, &z, &p, &w).unwrap();
        let b = backward(&x, &z, &p, &w, &cache, &g).unwrap();
        assert_eq!(b.d_sigma, [0.0; 4]);
        assert_eq!(b.d_input, g);
        assert!(b.d_guide.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_bundle() {
        let (x, z, _, p, w) = setup(3);
        let g = Volume::zeros(x.dims()).unwrap();
        let cache = jbf_forward(&x, &z, &p, &w).unwrap();
        let b = backward(&x, &z, &p, &w, &cache, &g).unwrap();
        assert_eq!(b.d_sigma, [0.0; 4]);
        assert!(b.d_input.data().iter().all(|&v| v == 0.0));
        assert!(b.d_guide.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_input_has_zero_sigma_gradient() {
        let (_, z, g, p, w) = setup(4);
        let x = Volume::filled(z.dims(), 37.25).unwrap();
        let cache = jbf_forward(&x, &z, &p, &w).unwrap();
        assert_eq!(grad_sigma(&x, &z, &p, &w, &cache, &g).unwrap(), [0.0; 4]);
    }

    #[test]
    fn constant_guide_has_zero_guide_gradient() {
        let (x, _, g, p, w) = setup(5);
        let z = Volume::filled(x.dims(), -12.0).unwrap();
        let cache = jbf_forward(&x, &z, &p, &w).unwrap();
        let d = grad_guide(&x, &z, &p, &w, &cache, &g).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigma_z_inert_without_z_radius() {
        let (x, z, g, p, _) = setup(6);
        let w = Window::new([2, 2, 0]);
        let cache = jbf_forward(&x, &z, &p, &w).unwrap();
        let d = grad_sigma(&x, &z, &p, &w, &cache, &g).unwrap();
        assert_eq!(d[2], 0.0);
        assert!(d[0] != 0.0 && d[3] != 0.0);
    }

    #[test]
    fn stale_cache_rejected() {
        let (x, z, g, p, w) = setup(7);
        let small = Volume::zeros([2, 2, 2]).unwrap();
        let cache = jbf_forward(&small, &small, &p, &w).unwrap();
        assert!(matches!(
            backward(&x, &z, &p, &w, &cache, &g),
            Err(JbfError::Inconsistent(_))
        ));
    }
}
