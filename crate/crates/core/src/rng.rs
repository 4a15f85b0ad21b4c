//! Counter-keyed random streams.
//!
//! Every random quantity in the crate is drawn from a stream identified by a
//! master seed plus a short tuple of integer tags (trial index, matrix entry,
//! arm, ...). Streams are independent of the order in which they are created,
//! so sampling can be split over any number of workers without changing a
//! single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream RNG type.
pub type StreamRng = ChaCha8Rng;

/// Domain tags that keep different consumers of one master seed apart.
pub mod tag {
    pub const ENTRY: u64 = 0x454e_5452;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const PAIRS: u64 = 0x5041_4952;
    pub const SWEEP: u64 = 0x5357_4550;
    pub const ARM: u64 = 0x4152_4d00;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a 64-bit key from a master seed and a tag tuple.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6261_6e64_6c61_6221);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Opens the stream keyed by `(master, tags)`.
pub fn stream(master: u64, tags: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    let mut h = derive_seed(master, tags);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&h.to_le_bytes());
        h = splitmix64(h);
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).collect();
        let mut r1 = stream(7, &[1, 2]);
        let mut r2 = stream(7, &[1, 2]);
        let mut r3 = stream(7, &[2, 1]);
        let x1: Vec<u64> = a.iter().map(|_| r1.random()).collect();
        let x2: Vec<u64> = a.iter().map(|_| r2.random()).collect();
        let x3: Vec<u64> = a.iter().map(|_| r3.random()).collect();
        assert_eq!(x1, x2);
        assert_ne!(x1, x3);
    }

    #[test]
    fn seed_derivation_depends_on_every_tag() {
        let base = derive_seed(1, &[3, 4, 5]);
        assert_ne!(base, derive_seed(2, &[3, 4, 5]));
        assert_ne!(base, derive_seed(1, &[3, 4, 6]));
        assert_ne!(base, derive_seed(1, &[3, 4]));
    }
}
