use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative signal levels `alpha_bar[t]` for sampler steps `t = 0..=T`,
/// with `alpha_bar[0] = 1` and strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

/// Linear-beta training schedule subsampled to a number of sampler steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            train_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            steps: 50,
        }
    }
}

impl NoiseSchedule {
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::Config("alpha_bar must start at 1 and hold at least two levels".into()));
        }
        let decreasing = alpha_bar.windows(2).all(|w| w[1] < w[0]);
        let positive = alpha_bar.iter().all(|&a| a > 0.0);
        if !(decreasing && positive) {
            return Err(Error::Config("alpha_bar must be strictly decreasing and positive".into()));
        }
        Ok(Self { alpha_bar })
    }

    /// Sampler step `k` maps to training step `round(k * train_steps / steps)`.
    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        if cfg.steps == 0 || cfg.steps > cfg.train_steps {
            return Err(Error::Config(format!(
                "sampler steps must lie in 1..={}, got {}",
                cfg.train_steps, cfg.steps
            )));
        }
        if !(0.0 < cfg.beta_start && cfg.beta_start <= cfg.beta_end && cfg.beta_end < 1.0) {
            return Err(Error::Config("betas must satisfy 0 < start <= end < 1".into()));
        }
        let n = cfg.train_steps;
        let mut train = Vec::with_capacity(n + 1);
        train.push(1.0f64);
        let mut acc = 1.0f64;
        for s in 1..=n {
            let frac = if n == 1 { 0.0 } else { (s - 1) as f64 / (n - 1) as f64 };
            let beta = cfg.beta_start + frac * (cfg.beta_end - cfg.beta_start);
            acc *= 1.0 - beta;
            train.push(acc);
        }
        let alpha_bar = (0..=cfg.steps)
            .map(|k| {
                let idx = ((k * n) as f64 / cfg.steps as f64).round() as usize;
                train[idx]
            })
            .collect();
        Self::from_alpha_bar(alpha_bar)
    }

    pub fn linear(steps: usize) -> Result<Self> {
        Self::from_config(&ScheduleConfig {
            steps,
            ..Default::default()
        })
    }

    /// Number of sampler steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(Error::StepOutOfRange {
            t,
            max: self.steps(),
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Index of a normalized timestep in `[0, 1]`: `round(t * T)`.
    pub fn index_of(&self, normalized: f64) -> usize {
        (normalized.clamp(0.0, 1.0) * self.steps() as f64).round() as usize
    }
}
