//! RMSE, PSNR and SSIM between two volumes.

use serde::{Serialize, Serializer};

use crate::error::{JbfError, Result};
use crate::volume::Volume;

/// Width of the Gaussian SSIM window.
pub const SSIM_SIGMA: f64 = 1.5;
/// Default SSIM window radius (11x11 window).
pub const SSIM_RADIUS: usize = 5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rmse: f64,
    /// `f64::INFINITY` when the volumes are identical; serialized as `"inf"`.
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    pub n_voxels: usize,
}

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "name,rmse,psnr,ssim,n_voxels";

    pub fn csv_row(&self, name: &str) -> String {
        let psnr = if self.psnr.is_finite() {
            self.psnr.to_string()
        } else {
            "inf".to_string()
        };
        format!(
            "{name},{},{psnr},{},{}",
            self.rmse, self.ssim, self.n_voxels
        )
    }
}

pub fn rmse(a: &Volume, b: &Volume) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical volumes.
pub fn psnr(a: &Volume, b: &Volume, data_range: f64) -> Result<f64> {
    check_range(data_range)?;
    let e = rmse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * data_range.log10() - 20.0 * e.log10())
}

fn check_range(data_range: f64) -> Result<()> {
    if data_range.is_finite() && data_range > 0.0 {
        Ok(())
    } else {
        Err(JbfError::InvalidParam(format!(
            "data range must be positive, got {data_range}"
        )))
    }
}

/// Mean SSIM over every axial slice.
///
/// Local statistics use a normalized Gaussian window (sigma 1.5) of the
/// given radius. Only pixels whose full window fits inside the slice are
/// scored; slice means are averaged with equal weight.
pub fn ssim(a: &Volume, b: &Volume, data_range: f64, window_radius: usize) -> Result<f64> {
    a.ensure_same_dims(b)?;
    check_range(data_range)?;
    let [nx, ny, nz] = a.dims();
    let span = 2 * window_radius + 1;
    if span > nx || span > ny {
        return Err(JbfError::InvalidParam(format!(
            "SSIM window {span}x{span} larger than slice {nx}x{ny}"
        )));
    }
    let kernel = ssim_kernel(window_radius);
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let r = window_radius;

    let mut total = 0.0;
    for z in 0..nz {
        let mut slice_sum = 0.0;
        let mut count = 0usize;
        for y in r..ny - r {
            for x in r..nx - r {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (wy, row) in kernel.chunks_exact(span).enumerate() {
                    for (wx, &w) in row.iter().enumerate() {
                        let i = a.index(x + wx - r, y + wy - r, z);
                        let (va, vb) = (a.data()[i], b.data()[i]);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * (va * va);
                        sbb += w * (vb * vb);
                        sab += w * (va * vb);
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                let cov = sab - ma * mb;
                slice_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
        total += slice_sum / count as f64;
    }
    Ok(total / nz as f64)
}

fn ssim_kernel(radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .flat_map(|dy| {
            (-r..=r).map(move |dx| {
                (-((dx * dx + dy * dy) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
            })
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// All three metrics of `pred` against `target`. `data_range` defaults to
/// the target's `max - min`; the SSIM window shrinks to fit small slices.
pub fn evaluate(pred: &Volume, target: &Volume, data_range: Option<f64>) -> Result<MetricsReport> {
    pred.ensure_same_dims(target)?;
    let range = data_range.unwrap_or_else(|| target.max() - target.min());
    let [nx, ny, _] = target.dims();
    let radius = SSIM_RADIUS.min((nx.min(ny) - 1) / 2);
    Ok(MetricsReport {
        rmse: rmse(pred, target)?,
        psnr: psnr(pred, target, range)?,
        ssim: ssim(pred, target, range, radius)?,
        n_voxels: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Volume {
        Volume::from_fn([12, 12, 2], |x, y, z| {
            (x * x) as f64 + 3.0 * y as f64 - 7.0 * z as f64
        })
        .unwrap()
    }

    #[test]
    fn rmse_closed_forms() {
        let a = ramp();
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &a.map(|v| v + 1.0).unwrap()).unwrap(), 1.0);
        assert!(rmse(&a, &Volume::zeros([1, 1, 1]).unwrap()).is_err());
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Volume::zeros([4, 4, 1]).unwrap();
        let b = Volume::filled([4, 4, 1], 10.0).unwrap();
        assert!(psnr(&a, &b, 10.0).unwrap().abs() < 1e-12);
        let half = Volume::filled([4, 4, 1], 5.0).unwrap();
        let gain = psnr(&a, &half, 10.0).unwrap() - psnr(&a, &b, 10.0).unwrap();
        assert!((gain - 6.020_599_913_279_624).abs() < 1e-12);
        assert_eq!(psnr(&a, &a, 10.0).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = ramp();
        assert_eq!(ssim(&a, &a, 200.0, 3).unwrap(), 1.0);
        let inverted = a.map(|v| 150.0 - v).unwrap();
        assert!(ssim(&a, &inverted, 200.0, 3).unwrap() < 1.0);
        assert!(ssim(&a, &a, 200.0, 6).is_err());
    }

    #[test]
    fn report_serialization() {
        let a = ramp();
        let r = evaluate(&a, &a, None).unwrap();
        let json = serde_json::to_value(r).unwrap();
        assert_eq!(json["psnr"], "inf");
        assert_eq!(json["rmse"], 0.0);
        assert_eq!(json["ssim"], 1.0);
        assert_eq!(json["n_voxels"], 288);
        assert_eq!(r.csv_row("a"), "a,0,inf,1,288");
    }
}
