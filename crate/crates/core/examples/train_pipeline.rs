//! Trains the kernel widths of a three-layer stack on a noisy/clean phantom
//! pair and evaluates on a phantom it has not seen.
//!
//! cargo run --release --example train_pipeline -- [epochs]

use jbf::optim::{default_initial_params, write_loss_csv};
use jbf::{
    evaluate, make_phantom, pipeline_forward, resolve_guide, train, GuideMode, PipelineState,
    TrainConfig, TrainSample, Window,
};

fn main() -> jbf::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(50);
    let samples: Vec<TrainSample> = (1..=2)
        .map(|seed| {
            make_phantom([64, 64, 8], seed, 20.0).map(|p| TrainSample::new(p.noisy, p.clean))
        })
        .collect::<jbf::Result<_>>()?;

    let targets: Vec<_> = samples.iter().map(|s| &s.target).collect();
    let init = default_initial_params(&targets);
    let state = PipelineState::uniform(3, init, Window::for_params(&init), GuideMode::SelfGuided);
    let cfg = TrainConfig {
        epochs,
        seed: 7,
        ..Default::default()
    };
    let out = train(&samples, &state, &cfg)?;
    for (epoch, loss) in out.history.iter().enumerate().step_by(10) {
        println!("epoch {:3}  mean mse {loss:.3}", epoch + 1);
    }
    for (i, p) in out.state.layers.iter().enumerate() {
        println!("layer {}: {:?}", i + 1, p.to_array());
    }

    let test = make_phantom([64, 64, 8], 99, 20.0)?;
    let guide = resolve_guide(&test.noisy, &out.state, None)?;
    let pred = pipeline_forward(&test.noisy, &guide, &out.state)?;
    let before = evaluate(&test.noisy, &test.clean, Some(650.0))?;
    let after = evaluate(pred.prediction(), &test.clean, Some(650.0))?;
    println!(
        "held-out rmse {:.3} -> {:.3}, ssim {:.4} -> {:.4}",
        before.rmse, after.rmse, before.ssim, after.ssim
    );

    let dir = std::env::temp_dir().join("jbf-train-example");
    std::fs::create_dir_all(&dir).map_err(|e| jbf::JbfError::Io {
        path: dir.clone(),
        source: e,
    })?;
    out.state.save(dir.join("params.json"))?;
    write_loss_csv(&out.history, dir.join("loss.csv"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
