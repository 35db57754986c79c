//! Counter-based random numbers.
//!
//! A draw is a pure function of `(seed, day, draw)`; nothing is carried
//! between calls. Rollout `r` of an evaluation uses seed `base_seed + r`, so
//! rollouts can run on any thread in any order and two policies evaluated with
//! the same seeds see the same demand on the same day.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const DAY_KEY: u64 = 0xd1b5_4a32_d192_ed03;
const DRAW_KEY: u64 = 0xaef1_7502_108e_f2d9;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn counter_u64(seed: u64, day: u64, draw: u64) -> u64 {
    let k = mix64(seed.wrapping_add(GOLDEN));
    let k = mix64(k ^ day.wrapping_add(1).wrapping_mul(DAY_KEY));
    mix64(k ^ draw.wrapping_add(1).wrapping_mul(DRAW_KEY))
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn counter_uniform(seed: u64, day: u64, draw: u64) -> f64 {
    (counter_u64(seed, day, draw) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random numbers for one simulated day. Draw slots are assigned by the
/// caller so that a given quantity always uses the same slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DayStream {
    pub seed: u64,
    pub day: u64,
}

impl DayStream {
    pub fn new(seed: u64, day: u64) -> Self {
        DayStream { seed, day }
    }

    #[inline]
    pub fn uniform(&self, draw: u64) -> f64 {
        counter_uniform(self.seed, self.day, draw)
    }
}
