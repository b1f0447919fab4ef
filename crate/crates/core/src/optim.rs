//! Adam training of the pipeline's kernel widths.
//!
//! Range and spatial widths are updated by two independent Adam instances
//! with their own learning rates, one step per training pair, followed by
//! a projection onto `sigma >= sigma_min`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{JbfError, Result};
use crate::filter::FilterParams;
use crate::fsio::write_atomic;
use crate::pipeline::{
    mse_loss, pipeline_backward, pipeline_forward, resolve_guide, PipelineState,
};
use crate::volume::Volume;

pub const DEFAULT_LR_RANGE: f64 = 1e-2;
pub const DEFAULT_LR_SPATIAL: f64 = 5e-4;
pub const DEFAULT_SIGMA_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates of a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamState {
    pub m: f64,
    pub v: f64,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(hyper: AdamHyper) -> Self {
        AdamState {
            m: 0.0,
            v: 0.0,
            t: 0,
            hyper,
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(AdamHyper::default())
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(param: f64, grad: f64, state: AdamState, lr: f64) -> Result<(f64, AdamState)> {
    if !grad.is_finite() {
        return Err(JbfError::InvalidParam(format!(
            "non-finite gradient {grad}"
        )));
    }
    let AdamHyper { beta1, beta2, eps } = state.hyper;
    let t = state.t + 1;
    let m = beta1 * state.m + (1.0 - beta1) * grad;
    let v = beta2 * state.v + (1.0 - beta2) * grad * grad;
    let m_hat = m / (1.0 - beta1.powi(t as i32));
    let v_hat = v / (1.0 - beta2.powi(t as i32));
    let next = param - lr * m_hat / (v_hat.sqrt() + eps);
    Ok((
        next,
        AdamState {
            m,
            v,
            t,
            hyper: state.hyper,
        },
    ))
}

/// Clamps every width to at least `sigma_min`.
pub fn project_sigmas(params: FilterParams, sigma_min: f64) -> FilterParams {
    FilterParams::from_array(params.to_array().map(|s| s.max(sigma_min)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_range: f64,
    pub lr_spatial: f64,
    pub epochs: usize,
    /// Seeds the per-epoch shuffle of the training pairs.
    pub seed: u64,
    pub sigma_min: f64,
    pub hyper: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_range: DEFAULT_LR_RANGE,
            lr_spatial: DEFAULT_LR_SPATIAL,
            epochs: 200,
            seed: 0,
            sigma_min: DEFAULT_SIGMA_MIN,
            hyper: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr_range", self.lr_range),
            ("lr_spatial", self.lr_spatial),
            ("sigma_min", self.sigma_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(JbfError::InvalidParam(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub noisy: Volume,
    pub target: Volume,
    /// Required when the pipeline's guide mode is `File`.
    pub guide: Option<Volume>,
}

impl TrainSample {
    pub fn new(noisy: Volume, target: Volume) -> Self {
        TrainSample {
            noisy,
            target,
            guide: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: PipelineState,
    /// Mean training MSE of each epoch, measured before each step.
    pub history: Vec<f64>,
}

/// Initial widths: one voxel spatially, a tenth of the targets' intensity
/// range for the range kernel.
pub fn default_initial_params(targets: &[&Volume]) -> FilterParams {
    let lo = targets
        .iter()
        .map(|t| t.min())
        .fold(f64::INFINITY, f64::min);
    let hi = targets
        .iter()
        .map(|t| t.max())
        .fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    FilterParams::isotropic(1.0, 0.1 * range)
}

pub fn train(
    samples: &[TrainSample],
    state: &PipelineState,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    state.validate()?;
    cfg.validate()?;
    if samples.is_empty() {
        return Err(JbfError::InvalidParam(
            "training needs at least one pair".into(),
        ));
    }
    for s in samples {
        s.noisy.ensure_same_dims(&s.target)?;
    }

    let mut state = state.clone();
    let layers = state.layers.len();
    let mut range_opt = vec![AdamState::new(cfg.hyper); layers];
    let mut spatial_opt = vec![[AdamState::new(cfg.hyper); 3]; layers];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let sample = &samples[i];
            let guide = resolve_guide(&sample.noisy, &state, sample.guide.as_ref())?;
            let tape = pipeline_forward(&sample.noisy, &guide, &state)?;
            let (loss, dl_dpred) = mse_loss(tape.prediction(), &sample.target)?;
            if !loss.is_finite() {
                return Err(JbfError::Diverged { epoch });
            }
            total += loss;
            let grads = pipeline_backward(&tape, &guide, &state, &dl_dpred)?;
            for (layer, d) in grads.d_sigma.iter().enumerate() {
                if d.iter().any(|g| !g.is_finite()) {
                    return Err(JbfError::Diverged { epoch });
                }
                let mut p = state.layers[layer].to_array();
                for axis in 0..3 {
                    let (next, st) =
                        adam_step(p[axis], d[axis], spatial_opt[layer][axis], cfg.lr_spatial)?;
                    p[axis] = next;
                    spatial_opt[layer][axis] = st;
                }
                let (next, st) = adam_step(p[3], d[3], range_opt[layer], cfg.lr_range)?;
                p[3] = next;
                range_opt[layer] = st;
                state.layers[layer] = project_sigmas(FilterParams::from_array(p), cfg.sigma_min);
            }
        }
        history.push(total / samples.len() as f64);
    }
    Ok(TrainOutcome { state, history })
}

/// Writes `epoch,mean_train_mse` rows, epochs counted from 1.
pub fn write_loss_csv(history: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("epoch,mean_train_mse\n");
    for (i, loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Window;
    use crate::pipeline::GuideMode;

    #[test]
    fn zero_gradient_leaves_param() {
        let (p, st) = adam_step(2.5, 0.0, AdamState::default(), 0.1).unwrap();
        assert_eq!(p, 2.5);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let (p, _) = adam_step(0.0, 1.0, AdamState::default(), 1e-2).unwrap();
        let expected = -1e-2 / (1.0 + 1e-8);
        assert!((p - expected).abs() < 1e-17, "{p} vs {expected}");
    }

    #[test]
    fn constant_gradient_moves_lr_per_step() {
        // Reference loop written without the library's step function.
        let lr = 1e-2;
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut reference) = (0.0, 0.0, 0.0);
        for t in 1..=100 {
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            reference -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut p = 0.0;
        let mut st = AdamState::default();
        for _ in 0..100 {
            (p, st) = adam_step(p, 1.0, st, lr).unwrap();
        }
        assert!((p - reference).abs() < 1e-12);
        assert!(((-p) - 100.0 * lr).abs() <= 0.01 * 100.0 * lr);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        assert!(adam_step(1.0, f64::NAN, AdamState::default(), 0.1).is_err());
    }

    #[test]
    fn projection() {
        let p = FilterParams::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(project_sigmas(p, 1e-3), p);
        let q = project_sigmas(FilterParams::new(1.0, 2.0, 3.0, -0.5), 1e-3);
        assert_eq!(q.sigma_r, 1e-3);
        assert_eq!(project_sigmas(q, 1e-3), q);
    }

    fn tiny_sample() -> TrainSample {
        let noisy = Volume::from_fn([6, 5, 2], |x, y, z| {
            ((x * 13 + y * 7 + z * 3) % 11) as f64 * 10.0
        })
        .unwrap();
        let target = noisy.map(|v| (v / 20.0).floor() * 20.0).unwrap();
        TrainSample::new(noisy, target)
    }

    fn tiny_state(radii: [usize; 3]) -> PipelineState {
        PipelineState::uniform(
            3,
            FilterParams::isotropic(1.0, 10.0),
            Window::new(radii),
            GuideMode::SelfGuided,
        )
    }

    #[test]
    fn zero_epochs() {
        let st = tiny_state([1, 1, 1]);
        let out = train(
            &[tiny_sample()],
            &st,
            &TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.state, st);
        assert!(out.history.is_empty());
    }

    #[test]
    fn identity_pair_with_zero_radii_is_fixed_point() {
        let s = tiny_sample();
        let pair = TrainSample::new(s.noisy.clone(), s.noisy.clone());
        let st = tiny_state([0, 0, 0]);
        let out = train(
            &[pair],
            &st,
            &TrainConfig {
                epochs: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.state, st);
        assert_eq!(out.history, vec![0.0; 5]);
    }

    #[test]
    fn sigmas_respect_floor() {
        let st = PipelineState::uniform(
            1,
            FilterParams::new(0.02, 0.02, 0.02, 0.011),
            Window::new([1, 1, 1]),
            GuideMode::SelfGuided,
        );
        let cfg = TrainConfig {
            epochs: 6,
            lr_range: 5.0,
            lr_spatial: 5.0,
            sigma_min: 0.01,
            ..Default::default()
        };
        let out = train(&[tiny_sample()], &st, &cfg).unwrap();
        assert!(out
            .state
            .layers
            .iter()
            .all(|p| p.to_array().iter().all(|&s| s >= 0.01)));
    }

    #[test]
    fn deterministic() {
        let samples = [tiny_sample(), tiny_sample()];
        let cfg = TrainConfig {
            epochs: 3,
            seed: 7,
            ..Default::default()
        };
        let a = train(&samples, &tiny_state([1, 1, 1]), &cfg).unwrap();
        let b = train(&samples, &tiny_state([1, 1, 1]), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            lr_range: 0.0,
            ..Default::default()
        };
        assert!(train(&[tiny_sample()], &tiny_state([1, 1, 1]), &cfg).is_err());
        assert!(train(&[], &tiny_state([1, 1, 1]), &TrainConfig::default()).is_err());
    }

    #[test]
    fn loss_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&[2.5, 1.25], &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(path).unwrap(),
            "epoch,mean_train_mse\n1,2.5\n2,1.25\n"
        );
    }
}
