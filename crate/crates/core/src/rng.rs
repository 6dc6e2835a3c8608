//! Seeded random streams.
//!
//! Every consumer of randomness (data order, parameter init, latent
//! sampling, attack noise) draws from its own ChaCha stream so that changing
//! how much one consumer draws never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Shape, Tensor};

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const LATENT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const ATTACK_PICK: u64 = 5;
}

pub fn seeded(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix a running counter (epoch, batch, image index) into a seed.
pub fn derive(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: Shape, std: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let v: f32 = rng.sample(StandardNormal);
        v * std
    })
}

pub fn uniform_tensor<R: Rng + ?Sized>(rng: &mut R, shape: Shape, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}
