//! Compares the analytical pipeline gradients against central differences
//! of the end-to-end MSE loss on a seeded random instance.
//!
//! Each probe uses the fourth-order central stencil
//! `(8 (L(+h) - L(-h)) - (L(+2h) - L(-2h))) / 12h`, with loss differences
//! formed from the two predictions directly (see `loss_difference`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::filter::{FilterParams, Window};
use crate::pipeline::{
    mse_loss, pipeline_backward, pipeline_forward, GuideMode, PipelineGrads, PipelineState,
};
use crate::volume::{Dims, Volume};

/// Relative finite-difference step: `h = STEP_SCALE * scale`, where the scale
/// is the sigma itself or the intensity standard deviation of the perturbed volume.
pub const STEP_SCALE: f64 = 1e-4;
/// Added to `|numeric|` in the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-12;
/// Intensity range of the random instances.
pub const INTENSITY_RANGE: (f64, f64) = (-150.0, 500.0);
/// Width of the random guide's value band, in units of the smallest range sigma.
pub const GUIDE_CONTRAST: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub dims: Dims,
    pub window: Window,
    /// One entry per layer.
    pub layers: Vec<FilterParams>,
    pub seed: u64,
    pub tolerance: f64,
    /// When set, the guide is the input itself and the check compares
    /// `d_input + d_guide` against perturbations of the shared volume.
    pub coupled_self_guide: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            dims: [5, 5, 3],
            window: Window::new([2, 2, 1]),
            layers: vec![FilterParams::new(1.2, 0.8, 1.0, 30.0)],
            seed: 0,
            tolerance: 1e-5,
            coupled_self_guide: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityError {
    pub name: String,
    pub components: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Component with the largest relative error, with both gradient values.
    pub worst_component: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub quantities: Vec<QuantityError>,
    pub tolerance: f64,
    pub loss: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.quantities
            .iter()
            .map(|q| q.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityError> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "loss = {:.6e}, tolerance = {:e}",
            self.loss, self.tolerance
        )?;
        for q in &self.quantities {
            writeln!(
                f,
                "  {:<16} n={:<5} max_rel={:.3e} max_abs={:.3e} step={:.3e}",
                q.name, q.components, q.max_rel_error, q.max_abs_error, q.step
            )?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

struct Instance {
    x: Volume,
    guide: Volume,
    target: Volume,
    state: PipelineState,
}

impl Instance {
    fn new(cfg: &GradCheckConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (lo, hi) = INTENSITY_RANGE;
        let mode = if cfg.coupled_self_guide {
            GuideMode::SelfGuided
        } else {
            GuideMode::File
        };
        let state = PipelineState {
            layers: cfg.layers.clone(),
            window: cfg.window,
            guide_mode: mode,
        };
        state.validate()?;

        // Guide values stay within GUIDE_CONTRAST range widths of a base level
        // so every range weight is resolvable by finite differences.
        let sigma_r = cfg
            .layers
            .iter()
            .map(|p| p.sigma_r)
            .fold(f64::INFINITY, f64::min);
        let spread = (GUIDE_CONTRAST * sigma_r).min(hi - lo);
        let base = if spread < hi - lo {
            rng.random_range(lo..hi - spread)
        } else {
            lo
        };
        let guide = Volume::from_fn(cfg.dims, |_, _, _| base + rng.random_range(0.0..spread))?;
        let x = if cfg.coupled_self_guide {
            guide.clone()
        } else {
            Volume::from_fn(cfg.dims, |_, _, _| rng.random_range(lo..hi))?
        };
        let target = Volume::from_fn(cfg.dims, |_, _, _| rng.random_range(lo..hi))?;
        Ok(Instance {
            x,
            guide,
            target,
            state,
        })
    }

    fn predict(&self, x: &Volume, guide: &Volume, state: &PipelineState) -> Result<Volume> {
        Ok(pipeline_forward(x, guide, state)?.prediction().clone())
    }

    /// `L(plus) - L(minus)` for the MSE loss, evaluated as
    /// `sum (p+ - p-) (p+ + p- - 2t) / N`. Algebraically identical to
    /// subtracting the two losses, but voxels the probe did not reach cancel
    /// exactly instead of leaving rounding noise of the loss's magnitude.
    fn loss_difference(&self, plus: &Volume, minus: &Volume) -> f64 {
        let t = self.target.data();
        let sum: f64 = plus
            .data()
            .iter()
            .zip(minus.data())
            .zip(t)
            .map(|((p, m), t)| (p - m) * ((p - t) + (m - t)))
            .sum();
        sum / t.len() as f64
    }
}

#[derive(Clone, Copy)]
enum Probe {
    Sigma { layer: usize, param: usize },
    Input(usize),
    Guide(usize),
    Coupled(usize),
}

fn central_difference(inst: &Instance, probe: Probe, h: f64) -> Result<f64> {
    let eval = |sign: f64| -> Result<Volume> {
        match probe {
            Probe::Sigma { layer, param } => {
                let mut state = inst.state.clone();
                let mut a = state.layers[layer].to_array();
                a[param] += sign * h;
                state.layers[layer] = FilterParams::from_array(a);
                inst.predict(&inst.x, &inst.guide, &state)
            }
            Probe::Input(i) => {
                let x = inst.x.with_voxel(i, inst.x.data()[i] + sign * h)?;
                inst.predict(&x, &inst.guide, &inst.state)
            }
            Probe::Guide(i) => {
                let g = inst.guide.with_voxel(i, inst.guide.data()[i] + sign * h)?;
                inst.predict(&inst.x, &g, &inst.state)
            }
            Probe::Coupled(i) => {
                let x = inst.x.with_voxel(i, inst.x.data()[i] + sign * h)?;
                inst.predict(&x, &x, &inst.state)
            }
        }
    };
    let near = inst.loss_difference(&eval(1.0)?, &eval(-1.0)?);
    let far = inst.loss_difference(&eval(2.0)?, &eval(-2.0)?);
    Ok((8.0 * near - far) / (12.0 * h))
}

fn compare(name: String, analytic: &[f64], numeric: &[f64], step: f64) -> QuantityError {
    let mut q = QuantityError {
        name,
        components: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_component: 0,
        worst_analytic: analytic.first().copied().unwrap_or(0.0),
        worst_numeric: numeric.first().copied().unwrap_or(0.0),
        step,
    };
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / (n.abs() + REL_FLOOR);
        q.max_abs_error = q.max_abs_error.max(abs);
        if rel > q.max_rel_error {
            q.max_rel_error = rel;
            q.worst_component = i;
            q.worst_analytic = *a;
            q.worst_numeric = *n;
        }
    }
    q
}

fn probe_all(inst: &Instance, probes: Vec<(Probe, f64)>) -> Result<Vec<f64>> {
    probes
        .into_par_iter()
        .map(|(p, h)| central_difference(inst, p, h))
        .collect()
}

/// Runs the check on a fresh seeded instance.
pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    gradcheck_with(cfg, |_| {})
}

/// As [`gradcheck`], but lets the caller alter the analytical gradients
/// before comparison. Used to confirm the checker actually detects errors.
pub fn gradcheck_with(
    cfg: &GradCheckConfig,
    tamper: impl FnOnce(&mut PipelineGrads),
) -> Result<GradCheckReport> {
    let inst = Instance::new(cfg)?;
    let tape = pipeline_forward(&inst.x, &inst.guide, &inst.state)?;
    let (loss, dl_dpred) = mse_loss(tape.prediction(), &inst.target)?;
    let mut grads = pipeline_backward(&tape, &inst.guide, &inst.state, &dl_dpred)?;
    tamper(&mut grads);

    let mut quantities = Vec::new();
    let n = inst.x.len();
    for (layer, params) in inst.state.layers.iter().enumerate() {
        let sigmas = params.to_array();
        let probes = (0..4)
            .map(|param| (Probe::Sigma { layer, param }, STEP_SCALE * sigmas[param]))
            .collect();
        let numeric = probe_all(&inst, probes)?;
        quantities.push(compare(
            format!("d_sigma[{layer}]"),
            &grads.d_sigma[layer],
            &numeric,
            STEP_SCALE * sigmas[3],
        ));
    }

    let h_x = STEP_SCALE * inst.x.std();
    if cfg.coupled_self_guide {
        let numeric = probe_all(&inst, (0..n).map(|i| (Probe::Coupled(i), h_x)).collect())?;
        let total: Vec<f64> = grads
            .d_input
            .data()
            .iter()
            .zip(grads.d_guide.data())
            .map(|(a, b)| a + b)
            .collect();
        quantities.push(compare("d_input+d_guide".into(), &total, &numeric, h_x));
    } else {
        let numeric = probe_all(&inst, (0..n).map(|i| (Probe::Input(i), h_x)).collect())?;
        quantities.push(compare(
            "d_input".into(),
            grads.d_input.data(),
            &numeric,
            h_x,
        ));
        let h_z = STEP_SCALE * inst.guide.std();
        let numeric = probe_all(&inst, (0..n).map(|i| (Probe::Guide(i), h_z)).collect())?;
        quantities.push(compare(
            "d_guide".into(),
            grads.d_guide.data(),
            &numeric,
            h_z,
        ));
    }

    let passed = quantities.iter().all(|q| q.max_rel_error < cfg.tolerance);
    Ok(GradCheckReport {
        quantities,
        tolerance: cfg.tolerance,
        loss,
        passed,
    })
}
