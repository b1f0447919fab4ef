//! Evaluation: image-quality metrics, paired significance testing and the
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod metrics;
pub mod wilcoxon;
