//! Reproducible per-run random streams.
//!
//! A batch derives one stream per run index from a single master seed. The
//! ChaCha block cipher keyed by the master seed provides 2^64 independent
//! streams, so runs can execute in any order or in parallel and still
//! consume exactly the numbers they would sequentially.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Source of uniform variates in the half-open interval (0, 1]; the
/// simulator turns them into exponential thresholds via -ln(U).
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

/// A derived, reproducible stream: `derive_rng(seed, i)` and
/// `derive_rng(seed, j)` are statistically independent for `i != j`.
pub struct RunRng {
    inner: ChaCha12Rng,
}

pub fn derive_rng(master_seed: u64, run_index: u64) -> RunRng {
    let mut inner = ChaCha12Rng::seed_from_u64(master_seed);
    inner.set_stream(run_index);
    RunRng { inner }
}

impl UniformSource for RunRng {
    fn next_uniform(&mut self) -> f64 {
        // 53 uniform bits mapped to (0, 1]; never returns 0, so -ln(U) is
        // always finite.
        let bits = self.inner.next_u64() >> 11;
        (bits + 1) as f64 * (1.0 / 9007199254740992.0)
    }
}

/// Replays a fixed list of uniforms, cycling; for oracle tests that force
/// specific firing thresholds.
pub struct ForcedUniforms {
    values: Vec<f64>,
    pos: usize,
}

impl ForcedUniforms {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty());
        assert!(values.iter().all(|u| *u > 0.0 && *u <= 1.0));
        ForcedUniforms { values, pos: 0 }
    }
}

impl UniformSource for ForcedUniforms {
    fn next_uniform(&mut self) -> f64 {
        let u = self.values[self.pos % self.values.len()];
        self.pos += 1;
        u
    }
}
