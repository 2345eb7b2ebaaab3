use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Denoiser, NoiseSchedule, RngStream, StepContext};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;
use crate::view::ViewCondition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// 0 gives the deterministic update; 1 matches ancestral sampling variance.
    pub eta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { eta: 0.0 }
    }
}

/// `z_t = sqrt(a_t) z0 + sqrt(1 - a_t) eps`, with `eps` drawn from `stream`.
pub fn forward_noise(z0: &LatentTensor, t: usize, sched: &NoiseSchedule, stream: &RngStream) -> Result<LatentTensor> {
    let a = sched.alpha_bar(t)?;
    if t == 0 {
        return Ok(z0.clone());
    }
    let (h, w, d) = z0.dims();
    let eps = stream.normal(h, w, d);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let data = z0
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .map(|(x, e)| sa * x + sn * e)
        .collect();
    LatentTensor::from_vec(h, w, d, data)
}

/// One reverse step `t -> t - 1`.
///
/// The backend predicts `eps`; the clean estimate is
/// `x0 = (x_t - sqrt(1 - a_t) eps) / sqrt(a_t)` and the update is
/// `x_{t-1} = sqrt(a_{t-1}) x0 + sqrt(1 - a_{t-1} - sigma^2) eps + sigma z` with
/// `sigma = eta sqrt((1 - a_{t-1}) / (1 - a_t)) sqrt(1 - a_t / a_{t-1})`.
pub fn denoise_step(
    x_t: &LatentTensor,
    t: usize,
    cond: &ViewCondition,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    sampler: &SamplerConfig,
    stream: &RngStream,
) -> Result<LatentTensor> {
    if t == 0 {
        return Err(Error::StepOutOfRange { t, max: sched.steps() });
    }
    let a = sched.alpha_bar(t)?;
    let a_prev = sched.alpha_bar(t - 1)?;
    let ctx = StepContext {
        t,
        total: sched.steps(),
        alpha_bar: a,
    };
    let eps = backend.predict_epsilon(x_t, &ctx, cond)?;
    if eps.dims() != x_t.dims() {
        return Err(Error::backend(format!(
            "backend returned {:?} for a {:?} input",
            eps.dims(),
            x_t.dims()
        )));
    }
    if let Some(pos) = eps.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::backend(format!("non-finite prediction at flat index {pos}")));
    }

    let sigma = if sampler.eta > 0.0 {
        sampler.eta * ((1.0 - a_prev) / (1.0 - a)).sqrt() * (1.0 - a / a_prev).sqrt()
    } else {
        0.0
    };
    let (sa, s1) = (a.sqrt(), (1.0 - a).sqrt());
    let sa_prev = a_prev.sqrt();
    let dir = (1.0 - a_prev - sigma * sigma).max(0.0).sqrt();

    let mut out: Vec<f64> = x_t
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .map(|(x, e)| {
            let x0 = (x - s1 * e) / sa;
            sa_prev * x0 + dir * e
        })
        .collect();
    if sigma > 0.0 {
        let mut rng = stream.rng();
        for v in &mut out {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    let (h, w, d) = x_t.dims();
    LatentTensor::from_vec(h, w, d, out)
}

/// Plain single-view reverse run from step `t_start` down to 0.
pub fn reverse_sample(
    x_start: &LatentTensor,
    t_start: usize,
    cond: &ViewCondition,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    sampler: &SamplerConfig,
    stream: &RngStream,
) -> Result<LatentTensor> {
    if t_start > sched.steps() {
        return Err(Error::StepOutOfRange {
            t: t_start,
            max: sched.steps(),
        });
    }
    let mut x = x_start.clone();
    for t in (1..=t_start).rev() {
        x = denoise_step(&x, t, cond, backend, sched, sampler, &stream.step(t as u32))?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{AnalyticGaussian, Purpose, ZeroDenoiser};
    use crate::view::{Dims, Window};

    fn blank(h: usize, w: usize) -> ViewCondition {
        ViewCondition::blank(Window::full(Dims::new(h, w)))
    }

    #[test]
    fn forward_at_zero_is_identity() {
        let s = NoiseSchedule::linear(20).unwrap();
        let z = LatentTensor::from_fn(4, 4, 2, |r, c, k| (r * 3 + c + k) as f64);
        let out = forward_noise(&z, 0, &s, &RngStream::new(1, Purpose::ForwardNoise)).unwrap();
        assert_eq!(out, z);
        assert!(matches!(
            forward_noise(&z, 21, &s, &RngStream::new(1, Purpose::ForwardNoise)),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn forward_is_seed_deterministic() {
        let s = NoiseSchedule::linear(20).unwrap();
        let z = LatentTensor::zeros(8, 8, 1);
        let st = RngStream::new(42, Purpose::ForwardNoise);
        assert_eq!(forward_noise(&z, 10, &s, &st).unwrap(), forward_noise(&z, 10, &s, &st).unwrap());
    }

    #[test]
    fn forward_moments_at_the_last_step() {
        // z0 = 0: z_T = sqrt(1 - a_T) eps, so mean 0 and variance 1 - a_T.
        let s = NoiseSchedule::linear(50).unwrap();
        let a = s.alpha_bar(50).unwrap();
        let z = LatentTensor::zeros(100, 1000, 1);
        let out = forward_noise(&z, 50, &s, &RngStream::new(9, Purpose::ForwardNoise)).unwrap();
        let n = out.len() as f64;
        let var = 1.0 - a;
        let mean_se = (var / n).sqrt();
        // variance of the sample variance of a Gaussian is 2 var^2 / (n - 1)
        let var_se = (2.0 * var * var / (n - 1.0)).sqrt();
        assert!(out.mean().abs() < 3.0 * mean_se, "{}", out.mean());
        assert!((out.variance() - var).abs() < 3.0 * var_se, "{}", out.variance());
    }

    #[test]
    fn hand_evaluated_step() {
        // x = 1, a_t = 0.5, a_{t-1} = 0.8, standard prior:
        // eps = sqrt(0.5), x0 = (1 - sqrt(0.5) sqrt(0.5)) / sqrt(0.5) = sqrt(0.5)
        // x' = sqrt(0.8) sqrt(0.5) + sqrt(0.2) sqrt(0.5)
        let s = NoiseSchedule::from_alpha_bar(vec![1.0, 0.8, 0.5]).unwrap();
        let x = LatentTensor::filled(1, 1, 1, 1.0);
        let out = denoise_step(
            &x,
            2,
            &blank(1, 1),
            &AnalyticGaussian::default(),
            &s,
            &SamplerConfig::default(),
            &RngStream::new(0, Purpose::Sampler),
        )
        .unwrap();
        let want = 0.8f64.sqrt() * 0.5f64.sqrt() + 0.2f64.sqrt() * 0.5f64.sqrt();
        assert!((out.get(0, 0, 0) - want).abs() < 1e-12);
        assert!((want - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn zero_backend_rescales() {
        let s = NoiseSchedule::from_alpha_bar(vec![1.0, 0.8, 0.5]).unwrap();
        let x = LatentTensor::from_fn(2, 3, 1, |r, c, _| r as f64 - c as f64);
        let out = denoise_step(
            &x,
            2,
            &blank(2, 3),
            &ZeroDenoiser,
            &s,
            &SamplerConfig::default(),
            &RngStream::new(0, Purpose::Sampler),
        )
        .unwrap();
        let ratio = (0.8f64 / 0.5).sqrt();
        assert!(out.max_abs_diff(&x.map(|v| v * ratio)) < 1e-12);
    }

    #[test]
    fn step_is_repeatable_and_rejects_zero() {
        let s = NoiseSchedule::linear(10).unwrap();
        let x = LatentTensor::from_fn(3, 3, 1, |r, c, _| (r + c) as f64 * 0.1);
        let st = RngStream::new(5, Purpose::Sampler);
        let b = AnalyticGaussian::new(1.0, 0.5);
        let cfg = SamplerConfig { eta: 0.7 };
        let one = denoise_step(&x, 4, &blank(3, 3), &b, &s, &cfg, &st).unwrap();
        let two = denoise_step(&x, 4, &blank(3, 3), &b, &s, &cfg, &st).unwrap();
        assert_eq!(one, two);
        assert!(matches!(
            denoise_step(&x, 0, &blank(3, 3), &b, &s, &cfg, &st),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    struct WrongShape;
    impl Denoiser for WrongShape {
        fn capabilities(&self) -> crate::diffusion::Capabilities {
            ZeroDenoiser.capabilities()
        }
        fn predict_epsilon(&self, _: &LatentTensor, _: &StepContext, _: &ViewCondition) -> Result<LatentTensor> {
            Ok(LatentTensor::zeros(1, 1, 1))
        }
    }

    #[test]
    fn shape_violations_are_backend_errors() {
        let s = NoiseSchedule::linear(10).unwrap();
        let x = LatentTensor::zeros(2, 2, 1);
        let err = denoise_step(
            &x,
            3,
            &blank(2, 2),
            &WrongShape,
            &s,
            &SamplerConfig::default(),
            &RngStream::new(0, Purpose::Sampler),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Backend { .. }));
    }
}
