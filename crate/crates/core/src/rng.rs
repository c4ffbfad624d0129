//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, index)`, so Monte-Carlo loops
//! can be split across any number of workers without changing a single
//! sample. This is the determinism contract the statistics module and the
//! CLI rely on.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless, splittable generator keyed by a seed. The `index` argument
/// is the counter; equal `(seed, index)` pairs always produce equal draws.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> CounterRng {
        CounterRng { seed }
    }

    /// Raw 64-bit draw for the given counter.
    pub fn bits(&self, index: u64) -> u64 {
        mix(mix(self.seed ^ 0xA076_1D64_78BD_642F) ^ index)
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    pub fn uniform(&self, index: u64) -> f64 {
        (self.bits(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Derive an independent stream, e.g. one per sample.
    pub fn substream(&self, stream: u64) -> CounterRng {
        CounterRng {
            seed: mix(self.seed ^ stream.wrapping_mul(0xD605_BBB5_8C8A_BC2D)),
        }
    }
}
