//! Differentiable joint bilateral filtering.
//!
//! The crate provides an exact joint bilateral filter over 3-D volumes, its
//! analytical gradients with respect to the four kernel widths, the input
//! and the guidance volume, a stack of such layers sharing one guide, an
//! Adam training loop for the widths, image-quality metrics, a Wilcoxon
//! signed-rank test and a finite-difference gradient checker.
//!
//! ```no_run
//! use jbf::{jbf_forward, make_phantom, FilterParams, Window};
//!
//! let phantom = make_phantom([64, 64, 4], 7, 20.0)?;
//! let params = FilterParams::isotropic(1.0, 60.0);
//! let cache = jbf_forward(&phantom.noisy, &phantom.noisy, &params, &Window::new([2, 2, 1]))?;
//! println!("filtered mean {}", cache.y_hat.mean());
//! # Ok::<(), jbf::JbfError>(())
//! ```

pub mod backward;
pub mod cli;
pub mod error;
pub mod eval;
pub mod filter;
mod fsio;
pub mod layer;
pub mod optim;
pub mod pipeline;
pub mod volume;

pub use backward::{backward, grad_guide, grad_input, grad_sigma, GradientBundle};
pub use error::{JbfError, Result};
pub use eval::gradcheck::{gradcheck, GradCheckConfig, GradCheckReport, QuantityError};
pub use eval::metrics::{evaluate, psnr, rmse, ssim, MetricsReport};
pub use eval::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
pub use filter::{
    gauss_range, gauss_spatial, gaussian_smooth, jbf_forward, FilterParams, ForwardCache, Window,
};
pub use layer::JbfLayer;
pub use optim::{
    adam_step, project_sigmas, train, AdamHyper, AdamState, TrainConfig, TrainOutcome, TrainSample,
};
pub use pipeline::{
    mse_loss, pipeline_backward, pipeline_forward, resolve_guide, GuideMode, PipelineGrads,
    PipelineState, PipelineTape,
};
pub use volume::{crop, load_volume, make_phantom, save_volume, Phantom, Roi, Volume};
