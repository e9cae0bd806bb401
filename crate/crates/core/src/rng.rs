//! Seed plumbing. Every random draw in a run descends from one root seed
//! through a named sub-stream, so any single component can be replayed
//! without disturbing the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env,
    Agent,
    EstimatorInit,
    OracleNoise,
    Eval,
    Generator,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Env => 0x656e_7600,
            Stream::Agent => 0x6167_6e74,
            Stream::EstimatorInit => 0x6573_7469,
            Stream::OracleNoise => 0x6f72_636c,
            Stream::Eval => 0x6576_616c,
            Stream::Generator => 0x6765_6e72,
        }
    }
}

/// splitmix64 finalizer, used to decorrelate derived seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(root ^ stream.tag()).wrapping_add(index))
}

pub fn stream(root: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(derive_seed(root, stream, 0))
}

pub fn indexed_stream(root: u64, which: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(root, which, index))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// FNV-1a over 64-bit words. Used to fingerprint random streams.
#[derive(Debug, Clone, Copy)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }
}

impl Digest {
    pub fn push(&mut self, word: u64) {
        for byte in word.to_le_bytes() {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}
