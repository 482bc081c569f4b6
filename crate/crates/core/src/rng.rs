//! Reproducible per-step randomness and exact fair-coin binomials.
//!
//! Every step of every trial draws from its own ChaCha8 stream: the trial
//! seed keys the generator and the step index selects the stream. A step's
//! draw is therefore a function of `(seed, step, configuration)` alone and
//! does not depend on how many numbers earlier steps consumed.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used for one synchronous step of one trial.
#[derive(Clone, Debug)]
pub struct StepRng {
    seed: u64,
    step: u64,
    inner: ChaCha8Rng,
}

impl StepRng {
    pub fn new(seed: u64, step: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(step);
        StepRng { seed, step, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

impl RngCore for StepRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws Binomial(`trials`, 1/2) exactly by counting set bits in `trials`
/// uniformly random bits.
pub fn binomial_half<R: RngCore + ?Sized>(trials: u64, rng: &mut R) -> u64 {
    let mut remaining = trials;
    let mut successes = 0u64;
    while remaining >= 64 {
        successes += u64::from(rng.next_u64().count_ones());
        remaining -= 64;
    }
    if remaining > 0 {
        let mask = (1u64 << remaining) - 1;
        successes += u64::from((rng.next_u64() & mask).count_ones());
    }
    successes
}

/// SplitMix64 finalizer. A bijection on `u64`, used to derive trial seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
