//! Deterministic seeded random streams.
//!
//! Every stochastic routine derives its generator from `(seed, domain,
//! stream)`: the domain tag separates unrelated operations sharing a user
//! seed, and the stream index gives each work batch its own substream. Work
//! is split into fixed-size batches with one substream per batch and reduced
//! in batch order, so results are byte-identical regardless of worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Batch size for parallel Monte Carlo accumulation.
pub const MC_BATCH: u64 = 16_384;

/// Domain tags for stream separation.
pub mod domain {
    pub const MC_MIXED: u64 = 1;
    pub const Z_PANEL: u64 = 2;
    pub const S_IMPORTANCE: u64 = 3;
    pub const CONVEX_ORDER: u64 = 4;
    pub const ELLIPTICAL: u64 = 5;
    pub const SWEEP: u64 = 6;
    pub const PSI_MC: u64 = 7;
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha12 generator keyed by `(seed, domain)` on substream `stream`.
pub fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha12Rng {
    let mut state = seed ^ domain.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Standard normal draws.
pub fn normal_vec(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// A fixed panel of standard normal draws used for common-random-number
/// estimates: row = draw, column = coordinate.
#[derive(Clone, Debug)]
pub struct ZPanel {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl ZPanel {
    pub fn draw(seed: u64, domain: u64, rows: usize, cols: usize) -> Self {
        let mut rng = stream_rng(seed, domain, 0);
        let data = normal_vec(&mut rng, rows * cols);
        ZPanel { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Mean, standard error, and count of `g` evaluated on `n` seeded standard
/// normal draws of dimension `dim`. Deterministic per `(seed, domain)` and
/// independent of the rayon worker count. Returns non-finite standard error
/// if the empirical second moment overflows.
pub fn batched_normal_mc<G>(seed: u64, domain: u64, n: u64, dim: usize, g: G) -> (f64, f64)
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    assert!(n > 0);
    let n_batches = n.div_ceil(MC_BATCH);
    let partials: Vec<(f64, f64)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, domain, b + 1);
            let count = if (b + 1) * MC_BATCH <= n { MC_BATCH } else { n - b * MC_BATCH };
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut x = vec![0.0f64; dim];
            for _ in 0..count {
                for xi in x.iter_mut() {
                    *xi = StandardNormal.sample(&mut rng);
                }
                let v = g(&x);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / nf).sqrt())
}
