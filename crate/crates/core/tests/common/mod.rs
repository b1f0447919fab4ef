//! Independent reference routines and fixtures shared by the integration tests.
//! These deliberately avoid the engine's tables, neighbor iterator and
//! reduction order.
#![allow(dead_code)]

use jbf::{FilterParams, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LO: f64 = -150.0;
pub const HI: f64 = 500.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(rng: &mut impl Rng, dims: [usize; 3], lo: f64, hi: f64) -> Volume {
    let data = (0..dims.iter().product::<usize>())
        .map(|_| rng.random_range(lo..hi))
        .collect();
    Volume::new(dims, data).unwrap()
}

/// Integer-valued volume, so that adding an integer offset is exact.
pub fn integer_volume(rng: &mut impl Rng, dims: [usize; 3], lo: i64, hi: i64) -> Volume {
    let data = (0..dims.iter().product::<usize>())
        .map(|_| rng.random_range(lo..hi) as f64)
        .collect();
    Volume::new(dims, data).unwrap()
}

pub fn random_dims(rng: &mut impl Rng, max: [usize; 3]) -> [usize; 3] {
    [
        rng.random_range(1..=max[0]),
        rng.random_range(1..=max[1]),
        rng.random_range(1..=max[2]),
    ]
}

pub fn random_radii(rng: &mut impl Rng, max: [usize; 3]) -> [usize; 3] {
    [
        rng.random_range(0..=max[0]),
        rng.random_range(0..=max[1]),
        rng.random_range(0..=max[2]),
    ]
}

pub fn random_params(rng: &mut impl Rng) -> FilterParams {
    FilterParams::new(
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
        rng.random_range(5.0..200.0),
    )
}

fn at(v: &Volume, x: usize, y: usize, z: usize) -> f64 {
    let [nx, ny, _] = v.dims();
    v.data()[x + nx * (y + ny * z)]
}

/// Straight-loop joint bilateral filter: every term computed from scratch.
pub fn naive_jbf(x: &Volume, z: &Volume, p: &FilterParams, radii: [usize; 3]) -> Vec<f64> {
    let [nx, ny, nz] = x.dims();
    let [rx, ry, rz] = radii.map(|r| r as i64);
    let mut out = Vec::with_capacity(x.len());
    for kz in 0..nz as i64 {
        for ky in 0..ny as i64 {
            for kx in 0..nx as i64 {
                let zk = at(z, kx as usize, ky as usize, kz as usize);
                let mut w = 0.0;
                let mut alpha = 0.0;
                for dz in -rz..=rz {
                    for dy in -ry..=ry {
                        for dx in -rx..=rx {
                            let (px, py, pz) = (kx + dx, ky + dy, kz + dz);
                            if px < 0
                                || py < 0
                                || pz < 0
                                || px >= nx as i64
                                || py >= ny as i64
                                || pz >= nz as i64
                            {
                                continue;
                            }
                            let (px, py, pz) = (px as usize, py as usize, pz as usize);
                            let gs = (-((dx * dx) as f64) / (2.0 * p.sigma_x * p.sigma_x)).exp()
                                * (-((dy * dy) as f64) / (2.0 * p.sigma_y * p.sigma_y)).exp()
                                * (-((dz * dz) as f64) / (2.0 * p.sigma_z * p.sigma_z)).exp();
                            let c = zk - at(z, px, py, pz);
                            let gr = (-(c * c) / (2.0 * p.sigma_r * p.sigma_r)).exp();
                            w += gs * gr;
                            alpha += gs * gr * at(x, px, py, pz);
                        }
                    }
                }
                out.push(alpha / w);
            }
        }
    }
    out
}

/// Classical bilateral filter by scanning the whole volume for each output
/// voxel and keeping the points inside the box window.
pub fn brute_bilateral(x: &Volume, p: &FilterParams, radii: [usize; 3]) -> Vec<f64> {
    let [nx, ny, nz] = x.dims();
    let coords: Vec<(usize, usize, usize)> = (0..nz)
        .flat_map(|z| (0..ny).flat_map(move |y| (0..nx).map(move |x| (x, y, z))))
        .collect();
    coords
        .iter()
        .map(|&(kx, ky, kz)| {
            let vk = at(x, kx, ky, kz);
            let mut num = 0.0;
            let mut den = 0.0;
            for &(qx, qy, qz) in &coords {
                let d = [
                    qx as f64 - kx as f64,
                    qy as f64 - ky as f64,
                    qz as f64 - kz as f64,
                ];
                if d[0].abs() > radii[0] as f64
                    || d[1].abs() > radii[1] as f64
                    || d[2].abs() > radii[2] as f64
                {
                    continue;
                }
                let vq = at(x, qx, qy, qz);
                let e = d[0] * d[0] / (2.0 * p.sigma_x.powi(2))
                    + d[1] * d[1] / (2.0 * p.sigma_y.powi(2))
                    + d[2] * d[2] / (2.0 * p.sigma_z.powi(2))
                    + (vk - vq).powi(2) / (2.0 * p.sigma_r.powi(2));
                let g = (-e).exp();
                num += g * vq;
                den += g;
            }
            num / den
        })
        .collect()
}

/// Direct truncated Gaussian convolution with boundary renormalization.
pub fn gaussian_blur(x: &Volume, sigmas: [f64; 3], radii: [usize; 3]) -> Vec<f64> {
    let [nx, ny, nz] = x.dims();
    let mut out = vec![0.0; x.len()];
    for kz in 0..nz {
        for ky in 0..ny {
            for kx in 0..nx {
                let (mut num, mut den) = (0.0, 0.0);
                for qz in kz.saturating_sub(radii[2])..(kz + radii[2] + 1).min(nz) {
                    for qy in ky.saturating_sub(radii[1])..(ky + radii[1] + 1).min(ny) {
                        for qx in kx.saturating_sub(radii[0])..(kx + radii[0] + 1).min(nx) {
                            let d = [
                                qx as f64 - kx as f64,
                                qy as f64 - ky as f64,
                                qz as f64 - kz as f64,
                            ];
                            let mut e = 0.0;
                            for a in 0..3 {
                                if d[a] != 0.0 {
                                    e += d[a] * d[a] / (2.0 * sigmas[a] * sigmas[a]);
                                }
                            }
                            let g = (-e).exp();
                            num += g * at(x, qx, qy, qz);
                            den += g;
                        }
                    }
                }
                out[kx + nx * (ky + ny * kz)] = num / den;
            }
        }
    }
    out
}

pub fn rmse_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).powi(2);
    }
    (s / a.len() as f64).sqrt()
}

/// Slice-wise Gaussian-window SSIM over pixels whose window fits, with
/// two-pass (centred) local moments.
pub fn ssim_oracle(a: &Volume, b: &Volume, range: f64, radius: usize) -> f64 {
    let [nx, ny, nz] = a.dims();
    let r = radius as i64;
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push(((dx, dy), (-((dx * dx + dy * dy) as f64) / 4.5).exp()));
        }
    }
    let norm: f64 = kernel.iter().map(|(_, w)| w).sum();
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut slices = Vec::new();
    for z in 0..nz {
        let mut vals = Vec::new();
        for y in radius..ny - radius {
            for x in radius..nx - radius {
                let sample = |v: &Volume, dx: i64, dy: i64| {
                    at(v, (x as i64 + dx) as usize, (y as i64 + dy) as usize, z)
                };
                let mean = |v: &Volume| {
                    kernel
                        .iter()
                        .map(|&((dx, dy), w)| w / norm * sample(v, dx, dy))
                        .sum::<f64>()
                };
                let (ma, mb) = (mean(a), mean(b));
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for &((dx, dy), w) in &kernel {
                    let (ea, eb) = (sample(a, dx, dy) - ma, sample(b, dx, dy) - mb);
                    va += w / norm * ea * ea;
                    vb += w / norm * eb * eb;
                    cov += w / norm * ea * eb;
                }
                vals.push(
                    (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2)),
                );
            }
        }
        slices.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    slices.iter().sum::<f64>() / nz as f64
}

/// Signed-rank statistic and two-sided p-value by enumerating all `2^n` sign
/// patterns of the ranked magnitudes.
pub fn wilcoxon_enumeration(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let below = d.iter().filter(|v| v.abs() < d[i].abs()).count();
        let equal = d.iter().filter(|v| v.abs() == d[i].abs()).count();
        ranks[i] = below as f64 + (equal as f64 + 1.0) / 2.0;
    }
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let w = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for mask in 0u64..1 << n {
        let s: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if s.min(total - s) <= w + 1e-9 {
            hits += 1;
        }
    }
    (w, hits as f64 / (1u64 << n) as f64)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs() / q.abs().max(1e-300))
        .fold(0.0, f64::max)
}

/// Swaps the x and y axes.
pub fn transpose_xy(v: &Volume) -> Volume {
    let [nx, ny, nz] = v.dims();
    Volume::from_fn([ny, nx, nz], |x, y, z| at(v, y, x, z)).unwrap()
}

/// Shifts content by `s` voxels along x, filling the vacated columns with `fill`.
pub fn shift_x(v: &Volume, s: usize, fill: f64) -> Volume {
    Volume::from_fn(
        v.dims(),
        |x, y, z| if x >= s { at(v, x - s, y, z) } else { fill },
    )
    .unwrap()
}
