//! Scores two denoisers on a set of regions of interest and asks whether the
//! per-region RMSE difference is significant.
//!
//! cargo run --release --example metrics_and_wilcoxon

use jbf::{
    crop, evaluate, jbf_forward, make_phantom, wilcoxon_signed_rank, FilterParams, MetricsReport,
    Roi, Window,
};

fn main() -> jbf::Result<()> {
    let ph = make_phantom([96, 96, 6], 21, 25.0)?;
    let window = Window::new([2, 2, 1]);
    let weak = jbf_forward(
        &ph.noisy,
        &ph.noisy,
        &FilterParams::new(0.6, 0.6, 0.6, 20.0),
        &window,
    )?
    .y_hat;
    let strong = jbf_forward(
        &ph.noisy,
        &ph.noisy,
        &FilterParams::new(1.2, 1.2, 0.8, 60.0),
        &window,
    )?
    .y_hat;

    println!("{}", MetricsReport::CSV_HEADER);
    let mut diffs = Vec::new();
    for i in 0..12 {
        let roi = Roi::new([(i % 4) * 20 + 4, (i / 4) * 28 + 4, 1], [16, 16, 4]);
        let a = evaluate(&crop(&weak, &roi)?, &crop(&ph.clean, &roi)?, Some(650.0))?;
        let b = evaluate(&crop(&strong, &roi)?, &crop(&ph.clean, &roi)?, Some(650.0))?;
        println!("{}", a.csv_row(&format!("weak_roi{i}")));
        println!("{}", b.csv_row(&format!("strong_roi{i}")));
        diffs.push(a.rmse - b.rmse);
    }

    let test = wilcoxon_signed_rank(&diffs)?;
    println!(
        "wilcoxon n={} W={} p={:.5} ({})",
        test.n,
        test.statistic,
        test.p_value,
        if test.exact {
            "exact"
        } else {
            "normal approximation"
        }
    );
    Ok(())
}
