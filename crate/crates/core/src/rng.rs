//! Deterministic random streams.
//!
//! Simulation and graph construction draw per-agent, per-step noise from
//! streams keyed by `(seed, step, agent, purpose)` so that parallel
//! construction order cannot change results. Training code, which is
//! sequential at the optimizer level, uses a single [`master`] stream.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// What a derived stream is used for; keeps independent draws independent.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Purpose {
    FramePerturb = 1,
    TrajectorySample = 2,
    LatentNoise = 3,
    SpawnInit = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// Stream for one agent at one step. Identical regardless of the order in
/// which agents are processed.
pub fn agent_stream(seed: u64, step: i64, agent: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, step as u64, agent, purpose as u64]))
}

/// Sequential stream for single-threaded phases (training loop, CLI).
pub fn master(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed))
}

/// Derive an independent sub-seed from a master seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut parts = vec![seed];
    parts.extend(label.bytes().map(u64::from));
    mix(&parts)
}

pub trait RngExt {
    /// Uniform draw in `[0, 1)`.
    fn uniform(&mut self) -> f64;
    /// Uniform draw in `[lo, hi)`.
    fn uniform_in(&mut self, lo: f64, hi: f64) -> f64;
    /// Standard normal via Box-Muller; bit-reproducible across platforms.
    fn std_normal(&mut self) -> f64;
    /// Uniform integer in `[0, n)`.
    fn index(&mut self, n: usize) -> usize;
}

impl<R: RngCore> RngExt for R {
    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn std_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() on empty range");
        // Modulo bias is ~n / 2^64, irrelevant for desk-scale n.
        (self.next_u64() % n as u64) as usize
    }
}
