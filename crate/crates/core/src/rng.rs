//! Keyed random streams.
//!
//! Every draw is addressed by `(seed, path index, stream)`. The key is mixed
//! into a ChaCha key and the stream id selects the ChaCha nonce, so streams
//! are independent of the order in which paths are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent sub-streams of one noise path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    Wiener = 1,
    JumpTimes = 2,
    Marks = 3,
    /// Used by the regularity estimators.
    Sampling = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub path: u64,
}

impl StreamKey {
    pub fn new(seed: u64, path: u64) -> Self {
        StreamKey { seed, path }
    }

    pub fn rng(&self, stream: StreamId) -> ChaCha12Rng {
        let mut state = self.seed ^ 0x6a09_e667_f3bc_c908;
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            if i == 2 {
                state ^= self.path.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            }
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(stream as u64);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_key_same_stream() {
        let k = StreamKey::new(7, 3);
        let a: Vec<u64> = (0..4).map(|_| k.rng(StreamId::Wiener).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn streams_and_paths_differ() {
        let k = StreamKey::new(7, 3);
        let w = k.rng(StreamId::Wiener).next_u64();
        assert_ne!(w, k.rng(StreamId::Marks).next_u64());
        assert_ne!(w, StreamKey::new(7, 4).rng(StreamId::Wiener).next_u64());
        assert_ne!(w, StreamKey::new(8, 3).rng(StreamId::Wiener).next_u64());
    }
}
