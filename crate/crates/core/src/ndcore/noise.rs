use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Real, Tensor};

/// Identifies one draw of the noise source: the global seed, a purpose tag
/// naming what the noise is for, and a step counter. Equal keys always give
/// equal noise; the stream does not depend on how much noise was drawn
/// before.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub tag: u64,
    pub step: u64,
}

impl NoiseKey {
    pub const fn new(seed: u64, tag: u64, step: u64) -> Self {
        Self { seed, tag, step }
    }

    /// ChaCha8 stream positioned at this key.
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.tag << 48) ^ (self.step & 0x0000_FFFF_FFFF_FFFF));
        rng
    }
}

/// `[rows, cols]` tensor of independent standard-normal draws.
pub fn gaussian_noise<T: Real>(rows: usize, cols: usize, key: NoiseKey) -> Tensor<T> {
    let mut rng = key.rng();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("rows, cols >= 1")
}
