//! Reproducible random stream for synthetic markets.
//!
//! The generator is xoshiro256** seeded through SplitMix64
//! (`Xoshiro256StarStar::seed_from_u64`). Uniforms take the top 53 bits of
//! each output: `(x >> 11) * 2^-53`, giving values in `[0, 1)`. Normals use
//! the cosine branch of Box-Muller on two consecutive uniforms,
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; the sine branch is discarded so that
//! every normal consumes exactly two outputs.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub struct MarketRng(Xoshiro256StarStar);

impl MarketRng {
    pub fn new(seed: u64) -> Self {
        MarketRng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
