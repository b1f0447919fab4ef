//! Stacked filter layers sharing one guidance volume, with MSE loss and
//! reverse-mode backpropagation through the stack.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{JbfError, Result};
use crate::filter::{gaussian_smooth, FilterParams, ForwardCache, Window};
use crate::fsio::write_atomic;
use crate::layer::JbfLayer;
use crate::volume::Volume;

pub const DEFAULT_LAYERS: usize = 3;

/// Where the guidance volume comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuideMode {
    /// The noisy input guides itself (classical bilateral filtering).
    SelfGuided,
    /// A separately supplied volume, e.g. the output of another denoiser.
    File,
    /// The input smoothed by a truncated Gaussian of this width.
    Gauss(f64),
}

impl GuideMode {
    pub fn name(&self) -> &'static str {
        match self {
            GuideMode::SelfGuided => "self",
            GuideMode::File => "file",
            GuideMode::Gauss(_) => "gauss",
        }
    }

    pub fn parse(name: &str, gauss_sigma: Option<f64>) -> Result<Self> {
        match (name, gauss_sigma) {
            ("self", _) => Ok(GuideMode::SelfGuided),
            ("file", _) => Ok(GuideMode::File),
            ("gauss", Some(s)) => Ok(GuideMode::Gauss(s)),
            ("gauss", None) => Err(JbfError::InvalidParam(
                "guide mode gauss needs gauss_sigma".into(),
            )),
            (other, _) => Err(JbfError::InvalidParam(format!(
                "unknown guide mode {other:?}"
            ))),
        }
    }
}

/// Trainable configuration of the whole stack.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub layers: Vec<FilterParams>,
    pub window: Window,
    pub guide_mode: GuideMode,
}

impl PipelineState {
    /// `count` layers, all starting from `params`.
    pub fn uniform(
        count: usize,
        params: FilterParams,
        window: Window,
        guide_mode: GuideMode,
    ) -> Self {
        PipelineState {
            layers: vec![params; count],
            window,
            guide_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(JbfError::InvalidParam(
                "pipeline needs at least one layer".into(),
            ));
        }
        for p in &self.layers {
            p.validate()?;
        }
        if let GuideMode::Gauss(s) = self.guide_mode {
            if !(s.is_finite() && s >= 0.0) {
                return Err(JbfError::InvalidParam(format!(
                    "gauss_sigma must be >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn layer(&self, index: usize) -> JbfLayer {
        JbfLayer::new(self.layers[index], self.window)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)?;
        let state = PipelineState::try_from(file)?;
        state.validate()?;
        Ok(state)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| JbfError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowRepr {
    radii: [usize; 3],
}

/// On-disk parameter file layout.
#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    window: WindowRepr,
    guide_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gauss_sigma: Option<f64>,
    layers: Vec<FilterParams>,
}

impl From<&PipelineState> for ParamsFile {
    fn from(s: &PipelineState) -> Self {
        ParamsFile {
            window: WindowRepr {
                radii: s.window.radii,
            },
            guide_mode: s.guide_mode.name().to_string(),
            gauss_sigma: match s.guide_mode {
                GuideMode::Gauss(g) => Some(g),
                _ => None,
            },
            layers: s.layers.clone(),
        }
    }
}

impl TryFrom<ParamsFile> for PipelineState {
    type Error = JbfError;

    fn try_from(f: ParamsFile) -> Result<Self> {
        Ok(PipelineState {
            layers: f.layers,
            window: Window::new(f.window.radii),
            guide_mode: GuideMode::parse(&f.guide_mode, f.gauss_sigma)?,
        })
    }
}

/// Picks the guidance volume for input `x`.
pub fn resolve_guide(
    x: &Volume,
    state: &PipelineState,
    guide_file: Option<&Volume>,
) -> Result<Volume> {
    match (state.guide_mode, guide_file) {
        (GuideMode::File, Some(g)) => {
            x.ensure_same_dims(g)?;
            Ok(g.clone())
        }
        (GuideMode::File, None) => Err(JbfError::Guide(
            "guide mode is file but no guide volume was given".into(),
        )),
        (_, Some(_)) => Err(JbfError::Guide(format!(
            "a guide volume was given but guide mode is {}",
            state.guide_mode.name()
        ))),
        (GuideMode::SelfGuided, None) => Ok(x.clone()),
        (GuideMode::Gauss(s), None) => {
            let r = (2.0 * s).ceil() as usize;
            gaussian_smooth(x, [s; 3], [r; 3])
        }
    }
}

/// Reverse-mode record of one pipeline evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTape {
    /// Input of each layer; `inputs[0]` is the pipeline input.
    pub inputs: Vec<Volume>,
    pub caches: Vec<ForwardCache>,
}

impl PipelineTape {
    pub fn prediction(&self) -> &Volume {
        &self
            .caches
            .last()
            .expect("tape has at least one layer")
            .y_hat
    }
}

pub fn pipeline_forward(x: &Volume, guide: &Volume, state: &PipelineState) -> Result<PipelineTape> {
    state.validate()?;
    x.ensure_same_dims(guide)?;
    let mut inputs = Vec::with_capacity(state.layers.len());
    let mut caches: Vec<ForwardCache> = Vec::with_capacity(state.layers.len());
    for index in 0..state.layers.len() {
        let input = caches.last().map_or_else(|| x.clone(), |c| c.y_hat.clone());
        let cache = state.layer(index).forward(&input, guide)?;
        inputs.push(input);
        caches.push(cache);
    }
    Ok(PipelineTape { inputs, caches })
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Volume, target: &Volume) -> Result<(f64, Volume)> {
    pred.ensure_same_dims(target)?;
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, Volume::from_parts(pred.dims(), grad)))
}

/// Gradients of the loss with respect to every layer's sigmas, the shared
/// guide and the pipeline input.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineGrads {
    pub d_sigma: Vec<[f64; 4]>,
    /// Sum of every layer's guide gradient.
    pub d_guide: Volume,
    pub d_input: Volume,
}

pub fn pipeline_backward(
    tape: &PipelineTape,
    guide: &Volume,
    state: &PipelineState,
    dl_dpred: &Volume,
) -> Result<PipelineGrads> {
    let layers = state.layers.len();
    if tape.caches.len() != layers || tape.inputs.len() != layers {
        return Err(JbfError::Inconsistent(format!(
            "tape has {} layers, state has {layers}",
            tape.caches.len()
        )));
    }
    let mut d_sigma = vec![[0.0; 4]; layers];
    let mut d_guide = vec![0.0; guide.len()];
    let mut running = dl_dpred.clone();
    for index in (0..layers).rev() {
        let bundle = state.layer(index).backward(
            &tape.inputs[index],
            guide,
            &tape.caches[index],
            &running,
        )?;
        d_sigma[index] = bundle.d_sigma;
        for (acc, g) in d_guide.iter_mut().zip(bundle.d_guide.data()) {
            *acc += g;
        }
        running = bundle.d_input;
    }
    Ok(PipelineGrads {
        d_sigma,
        d_guide: Volume::from_parts(guide.dims(), d_guide),
        d_input: running,
    })
}
