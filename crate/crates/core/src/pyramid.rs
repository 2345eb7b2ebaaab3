//! Coarse-to-fine refinement: upscale, perturb, re-noise, and jointly denoise
//! again at the larger size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{forward_noise, vcjd, Denoiser, JointContext, NoiseSchedule, Purpose, RngStream};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;
use crate::view::{ConditionSet, Dims, Window, WindowPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    #[default]
    Bilinear,
    Lanczos,
}

impl std::str::FromStr for InterpMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(Self::Bilinear),
            "lanczos" => Ok(Self::Lanczos),
            _ => Err(Error::Config(format!("unknown interpolation {s:?}"))),
        }
    }
}

/// How source indices outside the tensor are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Clamp,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    /// Number of upscaling phases after the base run.
    pub phases: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub d: usize,
    /// Normalized start time of the base run.
    pub t0: f64,
    /// Normalized start time of each refinement phase; one entry per phase.
    pub refine_tp: Vec<f64>,
    #[serde(default)]
    pub method: InterpMethod,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self::with_phases(3)
    }
}

impl PyramidConfig {
    pub fn with_phases(phases: usize) -> Self {
        Self {
            phases,
            alpha: 2.0,
            gamma: 0.05,
            d: 1,
            t0: 1.0,
            refine_tp: vec![0.5; phases],
            method: InterpMethod::Bilinear,
            boundary: Boundary::Clamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.refine_tp.len() != self.phases {
            return Err(Error::Config(format!(
                "{} refinement times for {} phases",
                self.refine_tp.len(),
                self.phases
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::Config(format!("scale factor {} must exceed 1", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("perturbation probability {} outside [0, 1]", self.gamma)));
        }
        if !(self.t0 > 0.0 && self.t0 <= 1.0) || self.refine_tp.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("normalized start times must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Canvas size of every phase, base first; each step rounds `dims * alpha`.
    pub fn phase_dims(&self, base: Dims) -> Vec<Dims> {
        let mut out = vec![base];
        for _ in 0..self.phases {
            out.push(scaled_dims(*out.last().unwrap(), self.alpha));
        }
        out
    }
}

pub fn scaled_dims(dims: Dims, alpha: f64) -> Dims {
    let s = |n: usize| (n as f64 * alpha).round() as usize;
    Dims::new(s(dims.height), s(dims.width))
}

fn lanczos3(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.abs() >= 3.0 {
        return 0.0;
    }
    let px = std::f64::consts::PI * x;
    3.0 * px.sin() * (px / 3.0).sin() / (px * px)
}

fn resolve(i: i64, n: usize, boundary: Boundary) -> usize {
    let n = n as i64;
    match boundary {
        Boundary::Clamp => i.clamp(0, n - 1) as usize,
        Boundary::Periodic => i.rem_euclid(n) as usize,
    }
}

/// Taps for each output index along one axis, half-pixel aligned.
fn axis_taps(n_in: usize, n_out: usize, method: InterpMethod, boundary: Boundary) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let x = (o as f64 + 0.5) * scale - 0.5;
            let base = x.floor();
            let taps: Vec<(i64, f64)> = match method {
                InterpMethod::Bilinear => {
                    let f = x - base;
                    vec![(base as i64, 1.0 - f), (base as i64 + 1, f)]
                }
                InterpMethod::Lanczos => (-2..=3)
                    .map(|k| {
                        let i = base as i64 + k;
                        (i, lanczos3(x - i as f64))
                    })
                    .collect(),
            };
            let total: f64 = taps.iter().map(|(_, w)| w).sum();
            taps.into_iter()
                .filter(|(_, w)| *w != 0.0)
                .map(|(i, w)| (resolve(i, n_in, boundary), w / total))
                .collect()
        })
        .collect()
}

/// Separable resampling to `round(dims * alpha)`; channels are independent.
pub fn interpolate(z: &LatentTensor, alpha: f64, method: InterpMethod, boundary: Boundary) -> Result<LatentTensor> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!("scale factor {alpha} must be positive")));
    }
    let (h, w, d) = z.dims();
    let out = scaled_dims(Dims::new(h, w), alpha);
    if out.height == 0 || out.width == 0 {
        return Err(Error::DimMismatch(format!("{h}x{w} scaled by {alpha} is empty")));
    }
    let col_taps = axis_taps(w, out.width, method, boundary);
    let row_taps = axis_taps(h, out.height, method, boundary);
    let mut wide = LatentTensor::zeros(h, out.width, d);
    for r in 0..h {
        for (c, taps) in col_taps.iter().enumerate() {
            for ch in 0..d {
                let v = taps.iter().map(|&(i, wt)| wt * z.get(r, i, ch)).sum();
                wide.set(r, c, ch, v);
            }
        }
    }
    let mut tall = LatentTensor::zeros(out.height, out.width, d);
    for (r, taps) in row_taps.iter().enumerate() {
        for c in 0..out.width {
            for ch in 0..d {
                let v = taps.iter().map(|&(i, wt)| wt * wide.get(i, c, ch)).sum();
                tall.set(r, c, ch, v);
            }
        }
    }
    Ok(tall)
}

/// One replaced pixel: output position and the low-resolution source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbedPixel {
    pub row: usize,
    pub col: usize,
    pub src_row: usize,
    pub src_col: usize,
}

/// Like [`pixel_perturb`], also reporting which pixels were replaced.
///
/// Pixels are visited row-major; each draws `prob ~ U[0, 1)` and, when
/// `prob < gamma`, offsets `u, v ~ U{-d..=d}`. A replaced pixel takes every
/// channel of `z_low[clamp(round(h / alpha) + u), clamp(round(w / alpha) + v)]`.
pub fn pixel_perturb_traced(
    z_low: &LatentTensor,
    z_interp: &LatentTensor,
    alpha: f64,
    gamma: f64,
    d: usize,
    stream: &RngStream,
) -> Result<(LatentTensor, Vec<PerturbedPixel>)> {
    let (lh, lw, ch) = z_low.dims();
    let want = scaled_dims(Dims::new(lh, lw), alpha);
    if (z_interp.height(), z_interp.width(), z_interp.channels()) != (want.height, want.width, ch) {
        return Err(Error::DimMismatch(format!(
            "interpolated tensor is {}x{}x{}, expected {}x{}x{ch}",
            z_interp.height(),
            z_interp.width(),
            z_interp.channels(),
            want.height,
            want.width
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("perturbation probability {gamma} outside [0, 1]")));
    }
    let mut out = z_interp.clone();
    let mut trace = Vec::new();
    let mut rng = stream.rng();
    let d = d as i64;
    for row in 0..want.height {
        for col in 0..want.width {
            let prob: f64 = rng.random();
            if prob < gamma {
                let u = rng.random_range(-d..=d);
                let v = rng.random_range(-d..=d);
                let src_row = ((row as f64 / alpha).round() as i64 + u).clamp(0, lh as i64 - 1) as usize;
                let src_col = ((col as f64 / alpha).round() as i64 + v).clamp(0, lw as i64 - 1) as usize;
                out.pixel_mut(row, col).copy_from_slice(z_low.pixel(src_row, src_col));
                trace.push(PerturbedPixel {
                    row,
                    col,
                    src_row,
                    src_col,
                });
            }
        }
    }
    Ok((out, trace))
}

/// Replace each pixel of the upscaled tensor, with probability `gamma`, by a
/// nearby pixel of the low-resolution tensor.
pub fn pixel_perturb(
    z_low: &LatentTensor,
    z_interp: &LatentTensor,
    alpha: f64,
    gamma: f64,
    d: usize,
    stream: &RngStream,
) -> Result<LatentTensor> {
    pixel_perturb_traced(z_low, z_interp, alpha, gamma, d, stream).map(|(t, _)| t)
}

/// What one phase ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub dims: Dims,
    pub t_start: usize,
    pub windows: Vec<Window>,
    pub perturbed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidOutput {
    pub latent: LatentTensor,
    pub phases: Vec<PhaseRecord>,
}

/// Builders for per-phase conditions and window plans at a given canvas size.
pub struct PhaseInputs<'a> {
    pub conditions: &'a (dyn Fn(Dims) -> Result<ConditionSet> + Sync),
    pub plan: &'a (dyn Fn(Dims) -> Result<WindowPlan> + Sync),
}

/// Base joint run from pure noise, then per phase: interpolate, perturb,
/// forward-noise to the phase start time, and joint-denoise back to 0.
pub fn pppi(
    base: Dims,
    channels: usize,
    cfg: &PyramidConfig,
    inputs: &PhaseInputs<'_>,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    ctx: &JointContext,
) -> Result<PyramidOutput> {
    cfg.validate()?;
    if channels == 0 || base.area() == 0 {
        return Err(Error::Config(format!("empty base latent {base}x{channels}")));
    }
    let seed = ctx.master_seed;
    let mut records = Vec::with_capacity(cfg.phases + 1);

    let plan = (inputs.plan)(base)?;
    let conds = (inputs.conditions)(base)?;
    let t0 = sched.index_of(cfg.t0);
    let noise = RngStream::new(seed, Purpose::InitialNoise).normal(base.height, base.width, channels);
    let phase_ctx = |p: usize| JointContext { phase: p as u32, ..*ctx };
    let mut z = vcjd(&noise, &conds, t0, &plan, backend, sched, &phase_ctx(0))?;
    records.push(PhaseRecord {
        phase: 0,
        dims: base,
        t_start: t0,
        windows: plan.windows().to_vec(),
        perturbed: 0,
    });

    for p in 1..=cfg.phases {
        let up = interpolate(&z, cfg.alpha, cfg.method, cfg.boundary)?;
        let stream = RngStream::new(seed, Purpose::Perturb).phase(p as u32);
        let (perturbed, trace) = pixel_perturb_traced(&z, &up, cfg.alpha, cfg.gamma, cfg.d, &stream)?;
        let dims = Dims::new(perturbed.height(), perturbed.width());
        let t_p = sched.index_of(cfg.refine_tp[p - 1]);
        let noisy = forward_noise(
            &perturbed,
            t_p,
            sched,
            &RngStream::new(seed, Purpose::ForwardNoise).phase(p as u32),
        )?;
        let plan = (inputs.plan)(dims)?;
        let conds = (inputs.conditions)(dims)?;
        z = vcjd(&noisy, &conds, t_p, &plan, backend, sched, &phase_ctx(p))?;
        records.push(PhaseRecord {
            phase: p,
            dims,
            t_start: t_p,
            windows: plan.windows().to_vec(),
            perturbed: trace.len(),
        });
    }
    Ok(PyramidOutput { latent: z, phases: records })
}
