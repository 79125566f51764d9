//! Stem noise energy features for no-reference image quality assessment.
//!
//! Each image is locally contrast normalized, cut into non-overlapping 2×2
//! blocks, and every block is modelled as a third-order autoregressive
//! process whose parameters come from the Yule-Walker equations. The energy
//! of the driving ("stem") noise of every block forms an energy map whose
//! first and second order statistics track blur and white-noise degradation.
//!
//! The crate is organised as a pipeline:
//!
//! * [`imageio`] decodes rasters into [`LuminanceImage`]s and writes 8-bit outputs.
//! * [`normalization`] applies the local mean/contrast normalization.
//! * [`ar`] estimates block autocorrelations, solves the Yule-Walker system
//!   with Levinson-Durbin and evaluates the stem noise energy.
//! * [`features`] reduces energy maps to statistics, histograms, renders and
//!   segmentations.
//! * [`distortions`] synthesises white noise, blur and blockiness.
//! * [`evaluation`] correlates features with subjective scores.
//!
//! Per-block and per-image work runs on rayon when the `parallel` feature is
//! enabled (the default); [`Execution::Sequential`] forces a single thread.

pub mod ar;
pub mod distortions;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod grid;
pub mod imageio;
pub mod normalization;
pub mod pipeline;

pub use ar::{AcfEstimate, AcfMode, ArParams, BlockLayout, BlockSequence, EnergyMap};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::Grid;
pub use imageio::{GrayOutputImage, LuminanceImage};
pub use normalization::{NormalizationConfig, NormalizedImage, WindowWeights};
pub use pipeline::{analyze, Analysis, PipelineConfig};
