//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a stream identified by a
//! `(master_seed, stream_index)` pair, so results never depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

/// Concrete generator used for all streams.
pub type StreamRng = ChaCha8Rng;

/// Opens the stream `(master_seed, stream_index)`.
pub fn stream(master_seed: u64, stream_index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_index);
    rng
}

/// Source of the noise consumed by privacy channels.
///
/// Implemented for every [`rand::Rng`] and for [`ZeroNoise`], which lets
/// tests observe the deterministic part of a release.
pub trait NoiseSource {
    /// Draw from the standard Laplace law (scale 1).
    fn standard_laplace(&mut self) -> f64;
    /// Draw uniformly from `[0, 1)`.
    fn unit_uniform(&mut self) -> f64;
}

impl<R: RngCore + ?Sized> NoiseSource for R {
    #[inline]
    fn standard_laplace(&mut self) -> f64 {
        let e: f64 = self.sample(Exp1);
        if self.next_u32() & 1 == 0 {
            e
        } else {
            -e
        }
    }

    #[inline]
    fn unit_uniform(&mut self) -> f64 {
        self.random::<f64>()
    }
}

/// Noise source that always returns zero Laplace noise and uniform draws of 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_laplace(&mut self) -> f64 {
        0.0
    }

    fn unit_uniform(&mut self) -> f64 {
        0.0
    }
}
