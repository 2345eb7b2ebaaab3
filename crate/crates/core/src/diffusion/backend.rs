//! Noise-prediction backends.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::LatentTensor;
use crate::view::ViewCondition;

/// What a backend accepts and how it may be scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub name: String,
    pub accepts_conditions: bool,
    pub deterministic: bool,
    /// `None` when calls for distinct windows may run concurrently without limit.
    pub max_concurrency: Option<usize>,
    #[serde(default)]
    pub condition_kinds: Vec<String>,
}

/// Step being denoised: sampler index, step count, and its signal level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub t: usize,
    pub total: usize,
    pub alpha_bar: f64,
}

/// Predicts the noise component of `x_t`. Given identical inputs the output
/// must be identical.
pub trait Denoiser: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    fn predict_epsilon(&self, x_t: &LatentTensor, step: &StepContext, cond: &ViewCondition) -> Result<LatentTensor>;
}

/// Gaussian data prior `x0 ~ N(mean, std^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub std: f64,
}

impl Default for GaussianPrior {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

/// Exact posterior noise prediction under a Gaussian prior.
///
/// With `a = alpha_bar`, `E[x0 | x_t] = (sqrt(a) s^2 x_t + (1 - a) m) / (a s^2 + 1 - a)`
/// and `eps = (x_t - sqrt(a) E[x0 | x_t]) / sqrt(1 - a)`. At `a = 1` the noise
/// is identically zero.
pub fn analytic_gaussian_epsilon(x_t: &LatentTensor, alpha_bar: f64, prior: GaussianPrior) -> LatentTensor {
    assert!(prior.std > 0.0, "prior std must be positive");
    if alpha_bar >= 1.0 {
        return LatentTensor::zeros(x_t.height(), x_t.width(), x_t.channels());
    }
    let var = prior.std * prior.std;
    let sa = alpha_bar.sqrt();
    let denom = alpha_bar * var + 1.0 - alpha_bar;
    let s1 = (1.0 - alpha_bar).sqrt();
    x_t.map(|x| {
        let x0 = (sa * var * x + (1.0 - alpha_bar) * prior.mean) / denom;
        (x - sa * x0) / s1
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticGaussian {
    pub prior: GaussianPrior,
}

impl AnalyticGaussian {
    pub fn new(mean: f64, std: f64) -> Self {
        Self {
            prior: GaussianPrior { mean, std },
        }
    }
}

impl Denoiser for AnalyticGaussian {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: "analytic".into(),
            accepts_conditions: false,
            deterministic: true,
            max_concurrency: None,
            condition_kinds: vec![],
        }
    }

    fn predict_epsilon(&self, x_t: &LatentTensor, step: &StepContext, _cond: &ViewCondition) -> Result<LatentTensor> {
        Ok(analytic_gaussian_epsilon(x_t, step.alpha_bar, self.prior))
    }
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: "zero".into(),
            accepts_conditions: false,
            deterministic: true,
            max_concurrency: None,
            condition_kinds: vec![],
        }
    }

    fn predict_epsilon(&self, x_t: &LatentTensor, _step: &StepContext, _cond: &ViewCondition) -> Result<LatentTensor> {
        Ok(LatentTensor::zeros(x_t.height(), x_t.width(), x_t.channels()))
    }
}

/// The reference mock rule shared with the external mock service:
/// `eps = tanh(x) * sqrt(1 - alpha_bar)`, evaluated on the `f32`-rounded input
/// and rounded back to `f32`, so in-process and over-the-wire runs agree bit
/// for bit.
pub fn mock_epsilon(x_t: &LatentTensor, alpha_bar: f64) -> LatentTensor {
    let scale = (1.0 - alpha_bar).sqrt();
    x_t.map(|v| ((v as f32 as f64).tanh() * scale) as f32 as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockDenoiser;

impl Denoiser for MockDenoiser {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: "mock".into(),
            accepts_conditions: false,
            deterministic: true,
            max_concurrency: None,
            condition_kinds: vec![],
        }
    }

    fn predict_epsilon(&self, x_t: &LatentTensor, step: &StepContext, _cond: &ViewCondition) -> Result<LatentTensor> {
        Ok(mock_epsilon(x_t, step.alpha_bar))
    }
}
