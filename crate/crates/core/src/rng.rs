//! Deterministic, splittable random streams.
//!
//! Every random quantity in a simulation is drawn from a [`Stream`] whose key
//! is a pure function of a root seed and a path of 64-bit labels. Streams
//! never share state, so episodes can run on any thread in any order and
//! still reproduce bit-for-bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const ROOT_SALT: u64 = 0x243f_6a88_85a3_08d3;
const LABEL_SALT: u64 = 0x1319_8a2e_0370_7344;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn root_key(root_seed: u64) -> u64 {
    mix64(root_seed ^ ROOT_SALT)
}

fn child_key(parent: u64, label: u64) -> u64 {
    mix64(parent.wrapping_add(GOLDEN_GAMMA) ^ mix64(label ^ LABEL_SALT))
}

/// Root seed plus an ordered path of labels, e.g. `[experiment, episode, purpose]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeedSpec {
    pub root_seed: u64,
    pub stream_path: Vec<u64>,
}

impl SeedSpec {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            stream_path: Vec::new(),
        }
    }

    pub fn with_path(root_seed: u64, path: &[u64]) -> Self {
        Self {
            root_seed,
            stream_path: path.to_vec(),
        }
    }

    /// Returns a new spec with `label` appended to the path.
    pub fn child(&self, label: u64) -> Self {
        let mut stream_path = self.stream_path.clone();
        stream_path.push(label);
        Self {
            root_seed: self.root_seed,
            stream_path,
        }
    }

    /// The 64-bit key identifying this stream.
    pub fn key(&self) -> u64 {
        self.stream_path
            .iter()
            .fold(root_key(self.root_seed), |k, &label| child_key(k, label))
    }

    pub fn stream(&self) -> Stream {
        derive_stream(self)
    }
}

/// Builds the generator for `spec`. Pure: equal specs give equal streams.
pub fn derive_stream(spec: &SeedSpec) -> Stream {
    Stream::from_key(spec.key())
}

/// A single-owner random stream backed by ChaCha8.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    inner: ChaCha8Rng,
}

impl Stream {
    fn from_key(key: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut state = key;
        for chunk in seed.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        Self {
            key,
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Derives an independent child stream. `derive(p).split(a)` equals
    /// `derive(p ++ [a])`, independent of how much of `self` was consumed.
    pub fn split(&self, label: u64) -> Stream {
        Stream::from_key(child_key(self.key, label))
    }

    pub fn next_word(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open_low(&mut self) -> f64 {
        ((self.next_word() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..len`. `len` must be nonzero.
    pub fn index(&mut self, len: usize) -> usize {
        // Multiply-shift; the bias is below 2^-32 for every len used here.
        ((self.next_word() as u128 * len as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller, consuming exactly two words per draw.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Free-function form of [`Stream::standard_normal`].
pub fn standard_normal(stream: &mut Stream) -> f64 {
    stream.standard_normal()
}
