//! Counter-based Gaussian streams.
//!
//! Every draw is addressed by `(seed, stream_id, draw index)`: the ChaCha
//! key comes from the seed, the stream id selects the ChaCha stream and the
//! draw index fixes the word position. A draw of `d` normals always consumes
//! `2 ⌈d/2⌉` 64-bit words, so any draw can be regenerated in isolation and
//! results do not depend on how work is split between threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }
}

pub struct GaussianStream {
    rng: ChaCha8Rng,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

impl GaussianStream {
    /// Stream positioned at the start of draw `draw_index` for draws of
    /// `dim` normals.
    pub fn at_draw(spec: RngSpec, draw_index: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(spec.stream_id);
        rng.set_word_pos(draw_index as u128 * Self::words_per_draw(dim));
        Self { rng }
    }

    /// 32-bit words consumed by one draw of `dim` normals.
    pub fn words_per_draw(dim: usize) -> u128 {
        // One normal pair consumes two u64s, i.e. four 32-bit words.
        4 * dim.div_ceil(2) as u128
    }

    /// Fill `out` with independent standard normals (Box–Muller). An odd
    /// length discards the second member of the last pair so the stream
    /// position stays aligned.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.pair();
            pair[0] = a;
            if pair.len() > 1 {
                pair[1] = b;
            }
        }
    }

    fn pair(&mut self) -> (f64, f64) {
        let u1 = ((self.rng.next_u64() >> 11) as f64 + 1.0) * TWO_POW_M53;
        let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53;
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (radius * c, radius * s)
    }
}
