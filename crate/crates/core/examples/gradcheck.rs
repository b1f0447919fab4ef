//! Finite-difference verification of every analytical gradient, for a
//! single layer and for a three-layer stack.
//!
//! cargo run --release --example gradcheck

use jbf::{gradcheck, FilterParams, GradCheckConfig, Window};

fn main() -> jbf::Result<()> {
    let single = GradCheckConfig::default();
    println!("{}", gradcheck(&single)?);

    let stacked = GradCheckConfig {
        dims: [6, 5, 2],
        window: Window::new([2, 2, 1]),
        layers: vec![
            FilterParams::new(1.2, 0.8, 1.0, 30.0),
            FilterParams::new(0.7, 1.5, 0.9, 80.0),
            FilterParams::new(2.0, 1.1, 0.6, 12.0),
        ],
        seed: 3,
        ..Default::default()
    };
    println!("{}", gradcheck(&stacked)?);

    // Input used as its own guide: both paths are checked together.
    let coupled = GradCheckConfig {
        coupled_self_guide: true,
        ..Default::default()
    };
    let report = gradcheck(&coupled)?;
    println!("{report}");
    println!("largest relative error {:.3e}", report.max_rel_error());
    Ok(())
}
