//! Per-path random streams.
//!
//! Every path owns a ChaCha8 stream selected by `(node, path)`, so adding paths or nodes
//! never reshuffles existing ones and serial and parallel runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct PathRng(ChaCha8Rng);

impl PathRng {
    pub fn new(seed: u64, node: u64, path: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream((node << 32) | (path & 0xffff_ffff));
        PathRng(r)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// Brownian increment over a step split into `2^level` fine increments of variance `h / 2^level`.
    ///
    /// A run at step `h` and level `r + 1` sees exactly the sums of the increments that a run
    /// at step `h / 2` and level `r` draws from the same stream.
    pub fn increment(&mut self, out: &mut [f64], h: f64, level: u32) {
        let m = 1usize << level;
        let s = (h / m as f64).sqrt();
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..m {
            for o in out.iter_mut() {
                *o += s * self.normal();
            }
        }
    }
}
