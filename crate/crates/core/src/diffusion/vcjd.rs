//! Windowed joint denoising: every window is denoised under its own
//! condition, the results are averaged on the canvas, and the averaged canvas
//! is cropped back into the windows for the next step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{denoise_step, Denoiser, NoiseSchedule, Purpose, RngStream, SamplerConfig};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;
use crate::view::{crop, crop_condition, stitch, ConditionSet, ViewCondition, WindowPlan};

/// Seed and sampler settings shared by every step of one joint run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointContext {
    pub master_seed: u64,
    pub phase: u32,
    pub sampler: SamplerConfig,
}

impl JointContext {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            phase: 0,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn sampler_stream(&self) -> RngStream {
        RngStream::new(self.master_seed, Purpose::Sampler).phase(self.phase)
    }
}

fn denoise_all(
    views: &[LatentTensor],
    t: usize,
    conditions: &[ViewCondition],
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    ctx: &JointContext,
) -> Result<Vec<LatentTensor>> {
    let stream = ctx.sampler_stream().step(t as u32);
    let one = |i: usize| {
        denoise_step(
            &views[i],
            t,
            &conditions[i],
            backend,
            sched,
            &ctx.sampler,
            &stream.window(i as u32),
        )
        .map_err(|e| e.at_window(i))
    };
    match backend.capabilities().max_concurrency {
        Some(1) => (0..views.len()).map(one).collect(),
        Some(k) if k > 1 => {
            let mut out = Vec::with_capacity(views.len());
            for chunk in (0..views.len()).collect::<Vec<_>>().chunks(k) {
                let part: Result<Vec<_>> = chunk.par_iter().map(|&i| one(i)).collect();
                out.extend(part?);
            }
            Ok(out)
        }
        _ => (0..views.len()).into_par_iter().map(one).collect(),
    }
}

fn check_alignment(plan: &WindowPlan, views: &[LatentTensor], conditions: &[ViewCondition]) -> Result<()> {
    if views.len() != plan.len() || conditions.len() != plan.len() {
        return Err(Error::DimMismatch(format!(
            "{} windows, {} views, {} conditions",
            plan.len(),
            views.len(),
            conditions.len()
        )));
    }
    Ok(())
}

/// Denoise each view, stitch on the canvas, and return the stitched canvas
/// together with the re-cropped views.
pub fn vcjd_step_stitched(
    plan: &WindowPlan,
    views: &[LatentTensor],
    t: usize,
    conditions: &[ViewCondition],
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    ctx: &JointContext,
) -> Result<(LatentTensor, Vec<LatentTensor>)> {
    check_alignment(plan, views, conditions)?;
    let denoised = denoise_all(views, t, conditions, backend, sched, ctx)?;
    let canvas = stitch(denoised.iter().zip(plan.windows()), plan.canvas())?;
    let next = plan
        .windows()
        .iter()
        .map(|w| crop(&canvas, w))
        .collect::<Result<Vec<_>>>()?;
    Ok((canvas, next))
}

/// One joint step `t -> t - 1`; views and conditions are index-aligned with
/// the plan's windows.
pub fn vcjd_step(
    plan: &WindowPlan,
    views: &[LatentTensor],
    t: usize,
    conditions: &[ViewCondition],
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    ctx: &JointContext,
) -> Result<Vec<LatentTensor>> {
    vcjd_step_stitched(plan, views, t, conditions, backend, sched, ctx).map(|(_, v)| v)
}

/// Crop the canvas conditions into per-window conditions.
pub fn view_conditions(plan: &WindowPlan, conditions: &ConditionSet) -> Result<Vec<ViewCondition>> {
    if conditions.canvas() != plan.canvas() {
        return Err(Error::DimMismatch(format!(
            "conditions are {}, plan canvas is {}",
            conditions.canvas(),
            plan.canvas()
        )));
    }
    plan.windows().iter().map(|w| crop_condition(conditions, w)).collect()
}

/// Joint reverse run from `t_start` down to 0 over every window of `plan`.
/// Returns the final stitched canvas; `t_start = 0` returns `z_start`.
pub fn vcjd(
    z_start: &LatentTensor,
    conditions: &ConditionSet,
    t_start: usize,
    plan: &WindowPlan,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    ctx: &JointContext,
) -> Result<LatentTensor> {
    if t_start > sched.steps() {
        return Err(Error::StepOutOfRange {
            t: t_start,
            max: sched.steps(),
        });
    }
    if (z_start.height(), z_start.width()) != (plan.canvas().height, plan.canvas().width) {
        return Err(Error::DimMismatch(format!(
            "latent {}x{} on a {} plan",
            z_start.height(),
            z_start.width(),
            plan.canvas()
        )));
    }
    let conds = view_conditions(plan, conditions)?;
    let mut views = plan
        .windows()
        .iter()
        .map(|w| crop(z_start, w))
        .collect::<Result<Vec<_>>>()?;
    let mut canvas = z_start.clone();
    for t in (1..=t_start).rev() {
        let (c, v) = vcjd_step_stitched(plan, &views, t, &conds, backend, sched, ctx)?;
        canvas = c;
        views = v;
    }
    Ok(canvas)
}
