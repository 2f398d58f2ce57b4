//! Portable seeded random source.
//!
//! Uniforms come from splitmix64: the top 53 bits of each output scaled to
//! `[0, 1)`. Normals use the Box–Muller transform evaluated in `f64` and
//! rounded to `f32`; each pair of normals consumes exactly two uniforms
//! `(u1, u2)` and yields `r·cos θ, r·sin θ` with `r = √(−2 ln(1 − u1))` and
//! `θ = 2π·u2`. An odd request discards the second normal of the last pair.

use crate::tensor::Tensor;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicRng {
    state: u64,
}

impl DeterministicRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next_normal_pair(&mut self) -> (f64, f64) {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (radius * theta.cos(), radius * theta.sin())
    }

    /// `n` standard-normal draws. Panics if `n == 0`.
    pub fn normal_vector(&mut self, n: usize) -> Tensor {
        assert!(n >= 1, "normal_vector needs n >= 1");
        let mut out = Vec::with_capacity(n + 1);
        while out.len() < n {
            let (z0, z1) = self.next_normal_pair();
            out.push(z0 as f32);
            out.push(z1 as f32);
        }
        out.truncate(n);
        Tensor::from_vec(out)
    }
}

/// Convenience for a fresh stream: `n` normals from `seed`.
pub fn normal_vector(seed: u64, n: usize) -> Tensor {
    DeterministicRng::new(seed).normal_vector(n)
}
