//! Noise schedule, forward process, reverse step, and windowed joint sampling
//! over pluggable noise-prediction backends.

mod backend;
mod external;
mod rng;
mod sampler;
mod schedule;
mod vcjd;

pub use backend::{
    analytic_gaussian_epsilon, mock_epsilon, AnalyticGaussian, Capabilities, Denoiser, GaussianPrior, MockDenoiser,
    StepContext, ZeroDenoiser,
};
pub use external::{Endpoint, ExternalDenoiser};
pub use rng::{Purpose, RngStream};
pub use sampler::{denoise_step, forward_noise, reverse_sample, SamplerConfig};
pub use schedule::{NoiseSchedule, ScheduleConfig};
pub use vcjd::{vcjd, vcjd_step, vcjd_step_stitched, view_conditions, JointContext};
