//! Counter-based random streams.
//!
//! Every value is a pure function of `(seed, stream, frame, index, counter)`.
//! A pixel's noise therefore does not depend on which thread produced it or
//! in which order pixels were visited, and any frame of a stack can be
//! regenerated on its own.
//!
//! The generator is SplitMix64 keyed by a hash of the stream coordinates.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent noise sources inside one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    /// One stream per pixel for the depth (ranging) error.
    Axial,
    /// One stream per image row for horizontal edge jitter.
    LateralX,
    /// One stream per image column for vertical edge jitter.
    LateralY,
    /// Free for callers that need their own reproducible streams.
    User(u32),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Axial => 1,
            Stream::LateralX => 2,
            Stream::LateralY => 3,
            Stream::User(k) => 0x1_0000_0000 | u64::from(k),
        }
    }
}

/// A SplitMix64 stream addressed by `(seed, stream, frame, index)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: Stream, frame: u64, index: u64) -> Self {
        let mut key = mix64(seed ^ 0x243f_6a88_85a3_08d3);
        key = mix64(key.wrapping_add(GAMMA) ^ stream.tag());
        key = mix64(key.wrapping_add(GAMMA) ^ frame);
        key = mix64(key.wrapping_add(GAMMA) ^ index);
        Self { key, counter: 0 }
    }

    /// Plain seeded stream, for callers that only need one.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, Stream::User(0), 0, 0)
    }

    /// One draw from the standard normal distribution.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
