//! Seeded, stream-indexed random number generation.
//!
//! Every stream is a ChaCha8 keystream keyed by the 64-bit seed and selected by a
//! 64-bit stream id, so two streams with different ids never share output blocks.
//! Child streams are derived by mixing the parent id with a label.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mathcore::linalg::Vector;

/// Well-known labels for streams derived from an experiment seed.
pub mod streams {
    pub const SETUP: u64 = 0x5e70;
    pub const INIT: u64 = 0x1417;
    pub const DATA: u64 = 0xda7a;
    pub const COINS: u64 = 0xc014;
    pub const THEORY: u64 = 0x7e0e;
    pub const TRIAL: u64 = 0x7a1a;
    pub const VERIFY: u64 = 0xe41f;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream. Depends only on (seed, parent id, label), never on
    /// how far this stream has been advanced.
    pub fn derive(&self, label: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(label.wrapping_add(0x632b_e59b_d9b4_e019)));
        RngStream::with_stream(self.seed, id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn fill_std_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.std_normal();
        }
    }
}

pub fn sample_std_gaussian_vector(rng: &mut RngStream, n: usize) -> Result<Vector> {
    if n == 0 {
        return Err(Error::InvalidDimension("gaussian vector needs n >= 1".into()));
    }
    let mut data = vec![0.0; n];
    rng.fill_std_normal(&mut data);
    Ok(Vector::from_vec(data))
}
