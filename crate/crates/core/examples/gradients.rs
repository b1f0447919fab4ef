//! Analytical gradients of one filter layer: the four kernel widths, the
//! input and the guide, for an MSE loss against a clean target.
//!
//! cargo run --release --example gradients

use jbf::{backward, jbf_forward, make_phantom, mse_loss, FilterParams, Window};

fn loss_at(x: &jbf::Volume, target: &jbf::Volume, p: &FilterParams, w: &Window) -> f64 {
    let y = jbf_forward(x, x, p, w).unwrap().y_hat;
    mse_loss(&y, target).unwrap().0
}

fn main() -> jbf::Result<()> {
    let ph = make_phantom([32, 32, 4], 5, 20.0)?;
    let params = FilterParams::new(1.0, 1.0, 1.0, 60.0);
    let window = Window::new([2, 2, 1]);
    let x = &ph.noisy;

    let cache = jbf_forward(x, x, &params, &window)?;
    let (loss, dl_dy) = mse_loss(&cache.y_hat, &ph.clean)?;
    let grads = backward(x, x, &params, &window, &cache, &dl_dy)?;
    println!("loss {loss:.4}");

    let names = ["sigma_x", "sigma_y", "sigma_z", "sigma_r"];
    let base = params.to_array();
    for (i, name) in names.iter().enumerate() {
        let h = 1e-4 * base[i];
        let mut plus = base;
        let mut minus = base;
        plus[i] += h;
        minus[i] -= h;
        let fd = (loss_at(x, &ph.clean, &FilterParams::from_array(plus), &window)
            - loss_at(x, &ph.clean, &FilterParams::from_array(minus), &window))
            / (2.0 * h);
        println!(
            "dL/d{name:<8} analytic {:+.6e}  central difference {fd:+.6e}",
            grads.d_sigma[i]
        );
    }

    // Input and guide gradients are whole volumes; in self-guided use they add up.
    let norm = |v: &jbf::Volume| v.data().iter().map(|g| g * g).sum::<f64>().sqrt();
    println!(
        "|dL/dx| {:.4e}  |dL/dz| {:.4e}",
        norm(&grads.d_input),
        norm(&grads.d_guide)
    );
    Ok(())
}
