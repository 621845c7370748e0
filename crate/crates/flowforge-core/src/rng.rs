//! Deterministic, platform-independent random numbers.
//!
//! Everything random in this crate flows through SplitMix64: a tiny,
//! well-studied generator whose output is a pure function of 64-bit integer
//! arithmetic, so identical seeds produce identical bytes on every platform
//! and at every optimization level. Per-sample work uses *streams* derived
//! by hashing `(seed, stream_index)`, which makes parallel generation
//! order-independent: each sample's draws never depend on how many workers
//! ran or in what order they finished.

/// Golden-ratio increment of the SplitMix64 reference implementation.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective 64-bit hash with strong avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for an independent stream, derived by hashing the global seed and a
/// stream index. Hashing both sides before combining keeps structured
/// inputs (seed 0, consecutive indices) from producing correlated streams.
#[inline]
pub fn stream_seed(seed: u64, stream_index: u64) -> u64 {
    mix64(mix64(seed).wrapping_add(mix64(stream_index)))
}

/// Stateless per-index uniform draw in `[0, 1)`, used where each element of
/// a grid needs its own independent decision without sequencing a generator
/// across the grid (e.g. per-pixel dropout). Pure function of its inputs.
#[inline]
pub fn indexed_u01(seed: u64, index: u64) -> f64 {
    u64_to_unit(mix64(mix64(seed) ^ index))
}

/// Map 64 random bits to a double in `[0, 1)` using the top 53 bits.
#[inline]
fn u64_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for the stream identified by `(seed, stream_index)`.
    pub fn for_stream(seed: u64, stream_index: u64) -> Self {
        Self::new(stream_seed(seed, stream_index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform double in `[0, 1)`.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        u64_to_unit(self.next_u64())
    }

    /// Uniform double in `[min, max)`; degenerate intervals return `min`.
    #[inline]
    pub fn uniform(&mut self, min: f64, max: f64) -> f64 {
        min + self.next_unit() * (max - min)
    }

    /// Fair coin from the top bit.
    #[inline]
    pub fn next_bool(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// Uniform index in `[0, n)` via 128-bit multiply (no modulo bias worth
    /// worrying about at these ranges; n is a file count, not a keyspace).
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64_vectors() {
        // First three outputs for seed 0, from the reference implementation.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn unit_draws_stay_in_half_open_interval() {
        let mut rng = SplitMix64::new(12345);
        for _ in 0..10_000 {
            let u = rng.next_unit();
            assert!((0.0..1.0).contains(&u), "draw {u} escaped [0, 1)");
        }
    }

    #[test]
    fn uniform_draws_cover_and_respect_the_range() {
        let mut rng = SplitMix64::new(99);
        let (min, max) = (0.8, 1.2);
        let mut low = f64::INFINITY;
        let mut high = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let x = rng.uniform(min, max);
            assert!((min..max).contains(&x));
            low = low.min(x);
            high = high.max(x);
        }
        // With 10k draws the extremes land well inside 1% of each endpoint.
        assert!(low < min + 0.004);
        assert!(high > max - 0.004);
    }

    #[test]
    fn degenerate_interval_returns_the_endpoint() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..100 {
            assert_eq!(rng.uniform(1.0, 1.0), 1.0);
        }
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a1: Vec<u64> = (0..8).map({
            let mut r = SplitMix64::for_stream(7, 0);
            move |_| r.next_u64()
        }).collect();
        let a2: Vec<u64> = (0..8).map({
            let mut r = SplitMix64::for_stream(7, 0);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = SplitMix64::for_stream(7, 1);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a1, a2, "same (seed, stream) must replay identically");
        assert_ne!(a1, b, "distinct streams must diverge");
    }

    #[test]
    fn stream_seed_matches_frozen_values() {
        // Frozen from an independent evaluation of the mixing recipe, so a
        // refactor cannot silently change every downstream dataset.
        assert_eq!(stream_seed(7, 0), 0xB78B_9F38_A670_E787);
        assert_eq!(stream_seed(7, 1), 0x79E6_53FE_B4F9_1D2B);
    }

    #[test]
    fn indexed_draws_are_stateless_and_frozen() {
        assert_eq!(indexed_u01(9, 5), 0.7877119295842339);
        assert_eq!(indexed_u01(9, 5), indexed_u01(9, 5));
        assert_ne!(indexed_u01(9, 5), indexed_u01(9, 6));
    }

    #[test]
    fn coin_is_roughly_fair() {
        let mut rng = SplitMix64::new(2024);
        let heads = (0..10_000).filter(|_| rng.next_bool()).count();
        assert!((4700..=5300).contains(&heads), "got {heads} heads");
    }

    #[test]
    fn next_index_is_bounded() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..1000 {
            assert!(rng.next_index(7) < 7);
        }
        let mut counts = [0usize; 3];
        for _ in 0..9000 {
            counts[rng.next_index(3)] += 1;
        }
        for c in counts {
            assert!((2700..=3300).contains(&c), "skewed bucket: {counts:?}");
        }
    }
}
