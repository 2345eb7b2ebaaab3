//! Layout-conditioned large-scene synthesis over a pluggable latent denoiser.
//!
//! The crate is organised bottom-up:
//!
//! - [`layout`]: hierarchical keypoint-box scene layouts, dataset alignment
//!   helpers, and layout-quality metrics.
//! - [`view`]: window planning over the latent canvas, crop/embed/stitch
//!   operators, and per-window condition extraction.
//! - [`diffusion`]: noise schedule, forward process, deterministic reverse
//!   step, and the windowed joint denoising loop.
//! - [`attention`]: segment-aware modulation of attention scores.
//! - [`pyramid`]: coarse-to-fine refinement with pixel perturbation.
//! - [`wire`]: the binary protocol spoken with external denoiser services.
//! - [`run`]: end-to-end generation runs and reproducibility manifests.

pub mod attention;
pub mod cli;
pub mod diffusion;
pub mod error;
pub mod layout;
pub mod pyramid;
pub mod render;
pub mod run;
pub mod tensor;
pub mod view;
pub mod wire;

pub use error::{Error, Result};
pub use tensor::{LatentTensor, Mask};
