//! Reproducible noise streams keyed by `(purpose, phase, step, window)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tensor::LatentTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    InitialNoise,
    ForwardNoise,
    Sampler,
    Perturb,
}

impl Purpose {
    fn tag(self) -> u8 {
        match self {
            Purpose::InitialNoise => 1,
            Purpose::ForwardNoise => 2,
            Purpose::Sampler => 3,
            Purpose::Perturb => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub purpose: Purpose,
    pub phase: u32,
    pub step: u32,
    pub window: u32,
}

impl RngStream {
    pub fn new(master_seed: u64, purpose: Purpose) -> Self {
        Self {
            master_seed,
            purpose,
            phase: 0,
            step: 0,
            window: 0,
        }
    }

    pub fn phase(self, phase: u32) -> Self {
        Self { phase, ..self }
    }

    pub fn step(self, step: u32) -> Self {
        Self { step, ..self }
    }

    pub fn window(self, window: u32) -> Self {
        Self { window, ..self }
    }

    /// ChaCha8 generator seeded from a SHA-256 of the full derivation path.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"dts.rng.v1");
        h.update(self.master_seed.to_le_bytes());
        h.update([self.purpose.tag()]);
        h.update(self.phase.to_le_bytes());
        h.update(self.step.to_le_bytes());
        h.update(self.window.to_le_bytes());
        let seed: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(seed)
    }

    /// Standard-normal tensor drawn in storage order.
    pub fn normal(&self, height: usize, width: usize, channels: usize) -> LatentTensor {
        let mut rng = self.rng();
        let mut t = LatentTensor::zeros(height, width, channels);
        for v in t.as_mut_slice() {
            *v = StandardNormal.sample(&mut rng);
        }
        t
    }
}
