//! xoshiro256** seeded through splitmix64.
//!
//! Every random quantity in the crate (initial weights, noise targets,
//! epoch shuffles) is drawn from this generator, so a 64-bit seed pins a
//! whole training run. The conversions below are part of the contract and
//! must not change:
//!
//! * `next_f32`: top 24 bits of `next_u64`, scaled by 2^-24.
//! * `next_f64`: top 53 bits of `next_u64`, scaled by 2^-53.
//! * `below(n)`: `(next_u64 * n) >> 64` in 128-bit arithmetic.
//! * `shuffle`: Fisher-Yates from the last index down, `j = below(i + 1)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 step: advances `state` and returns the mixed output.
pub fn splitmix64_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output of a splitmix64 generator whose state is `x`, i.e. the first draw.
pub fn splitmix64(x: u64) -> u64 {
    let mut state = x;
    splitmix64_next(&mut state)
}

/// Child seed for stream `index` of `seed`:
/// `splitmix64(seed ^ (index + 1) * 0x9E3779B97F4A7C15)`.
///
/// Used for per-class and per-sweep-point generators so that results do not
/// depend on the order in which independent units of work are executed.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64_next(&mut sm),
            splitmix64_next(&mut sm),
            splitmix64_next(&mut sm),
            splitmix64_next(&mut sm),
        ];
        Self { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform on [0, 1).
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform on [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Integer in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
