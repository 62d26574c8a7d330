//! Synthetic BF16 weights with a fixed seed, for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bf16::Bf16Word;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightDistribution {
    /// Zero-mean normal.
    Gaussian { sigma: f32 },
    /// 90% N(0, sigma) and 10% N(0, 8 sigma).
    HeavyTailed { sigma: f32 },
}

impl WeightDistribution {
    pub fn sample(&self, count: usize, seed: u64) -> Vec<u16> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            WeightDistribution::Gaussian { sigma } => {
                let normal = Normal::new(0.0f32, sigma).expect("sigma must be finite and positive");
                (0..count)
                    .map(|_| Bf16Word::from_f32(normal.sample(&mut rng)).0)
                    .collect()
            }
            WeightDistribution::HeavyTailed { sigma } => {
                let core = Normal::new(0.0f32, sigma).expect("sigma must be finite and positive");
                let tail = Normal::new(0.0f32, 8.0 * sigma).unwrap();
                (0..count)
                    .map(|_| {
                        let x = if rng.random_bool(0.1) {
                            tail.sample(&mut rng)
                        } else {
                            core.sample(&mut rng)
                        };
                        Bf16Word::from_f32(x).0
                    })
                    .collect()
            }
        }
    }
}

pub fn gaussian(count: usize, sigma: f32, seed: u64) -> Vec<u16> {
    WeightDistribution::Gaussian { sigma }.sample(count, seed)
}
