//! Filters a noisy phantom with a single joint bilateral filter, guided by
//! the noisy input itself, by a first-pass estimate and by the clean truth.
//!
//! cargo run --release --example forward_denoise

use jbf::{evaluate, jbf_forward, make_phantom, FilterParams, Window};

fn main() -> jbf::Result<()> {
    let ph = make_phantom([96, 96, 8], 11, 20.0)?;
    let params = FilterParams::new(1.2, 1.2, 0.8, 55.0);
    let window = Window::for_params(&params);
    println!("window radii {:?} ({} taps)", window.radii, window.taps());

    let noisy = evaluate(&ph.noisy, &ph.clean, Some(650.0))?;
    println!(
        "noisy            rmse {:7.3}  psnr {:6.2}  ssim {:.4}",
        noisy.rmse, noisy.psnr, noisy.ssim
    );

    let self_guided = jbf_forward(&ph.noisy, &ph.noisy, &params, &window)?;
    let m = evaluate(&self_guided.y_hat, &ph.clean, Some(650.0))?;
    println!(
        "self-guided      rmse {:7.3}  psnr {:6.2}  ssim {:.4}",
        m.rmse, m.psnr, m.ssim
    );

    // Any cleaner estimate can stand in for the guide, e.g. the first pass.
    let guided = jbf_forward(&ph.noisy, &self_guided.y_hat, &params, &window)?;
    let m = evaluate(&guided.y_hat, &ph.clean, Some(650.0))?;
    println!(
        "first-pass guide rmse {:7.3}  psnr {:6.2}  ssim {:.4}",
        m.rmse, m.psnr, m.ssim
    );

    let ideal = jbf_forward(&ph.noisy, &ph.clean, &params, &window)?;
    let m = evaluate(&ideal.y_hat, &ph.clean, Some(650.0))?;
    println!(
        "clean guide      rmse {:7.3}  psnr {:6.2}  ssim {:.4}",
        m.rmse, m.psnr, m.ssim
    );

    // The normalizer is the total kernel mass each voxel saw.
    println!(
        "normalizer range [{:.3}, {:.3}]",
        guided.w.min(),
        guided.w.max()
    );
    Ok(())
}
