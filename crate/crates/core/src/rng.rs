//! Deterministic per-frame random streams.
//!
//! Every frame gets a ChaCha generator seeded from `(master_seed, frame)`;
//! each random purpose uses its own stream id, so turning an impairment on
//! or off never shifts the draws of another purpose. This keeps sweeps on
//! common random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Bits = 1,
    Channel = 2,
    Csi = 3,
    TxPhaseNoise = 4,
    RxPhaseNoise = 5,
    Noise = 6,
    Misc = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn frame_rng(master_seed: u64, frame: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(frame)));
    rng.set_stream(stream as u64);
    rng
}

/// One draw of CN(0, var).
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

pub fn complex_normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> Vec<C64> {
    (0..len).map(|_| complex_normal(rng, var)).collect()
}
