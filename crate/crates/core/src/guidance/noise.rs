use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffusion::Latent;
use crate::scalar::Real;

/// Which consumer a noise draw belongs to. Part of the stream key so that
/// different operators never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseOp {
    Init = 0,
    Pcgd = 1,
    Rlr = 2,
    Refine = 3,
}

/// Counter-based Gaussian noise: each `(t, k, step, op)` key maps to its own
/// ChaCha8 stream, so draws are reproducible regardless of call order or
/// thread scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn key(&self, t: usize, k: usize, step: usize, op: NoiseOp) -> u64 {
        [t as u64, k as u64, step as u64, op as u64].iter().fold(splitmix(self.seed), |h, &v| splitmix(h ^ v))
    }

    /// Standard normal latent of the given shape; `step` is left at 0.
    pub fn draw<S: Real>(&self, t: usize, k: usize, step: usize, op: NoiseOp, shape: [usize; 3]) -> Latent<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key(t, k, step, op));
        let n = shape[0] * shape[1] * shape[2];
        let data = (0..n).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        Latent { channels: shape[0], height: shape[1], width: shape[2], data, step: 0 }
    }
}
