//! Counter-based splittable random streams.
//!
//! Every draw is a pure function of `(key, counter)`, where the key is derived
//! from a seed and a chain of stream identifiers. Two generators built from the
//! same `(seed, stream)` produce identical sequences regardless of what other
//! streams were consumed in between, which is what coupled SGDA runs rely on.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng {
    key: [u64; 2],
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let k0 = mix64(seed ^ 0x5851_f42d_4c95_7f2d);
        let k1 = mix64(k0 ^ mix64(stream.wrapping_add(GOLDEN)));
        Self {
            key: [k0, k1],
            counter: 0,
        }
    }

    /// Generator positioned at `step` of the `(seed, stream)` sequence.
    pub fn at(seed: u64, stream: u64, step: u64) -> Self {
        let mut rng = Self::new(seed, stream);
        rng.counter = step;
        rng
    }

    /// Independent child stream; the parent's position is irrelevant.
    pub fn split(&self, child: u64) -> Self {
        let k0 = mix64(self.key[0] ^ mix64(child ^ 0xd1b5_4a32_d192_ed03));
        let k1 = mix64(self.key[1].wrapping_add(mix64(child.wrapping_mul(GOLDEN))));
        Self {
            key: [k0, k1],
            counter: 0,
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    fn block(&self, counter: u64) -> u64 {
        mix64(mix64(counter ^ self.key[0]).wrapping_add(self.key[1]))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index drawn from a discrete distribution given by `probs` (inverse CDF).
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Uniform index in `0..n` (Lemire's widening multiply with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let out = self.block(self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Well-known stream identifiers.
pub mod streams {
    pub const MDP: u64 = 1;
    pub const DATASET: u64 = 2;
    pub const INDICES: u64 = 3;
    pub const NEIGHBOR: u64 = 4;
    pub const PROBES: u64 = 5;
    pub const INIT: u64 = 6;
}
