//! Seedable splitmix64 streams.
//!
//! Every random quantity in the crate comes from a [`RandomStream`]. Parallel
//! work derives one stream per chunk with [`substream`], so results depend only
//! on the seed and the chunk plan, never on thread scheduling.

use crate::model::BoundingBox;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    state: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` from the top 53 bits of one draw.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        bits_to_unit(self.next_u64())
    }

    /// Fills `out` with a uniform point of `bx`, one draw per coordinate in
    /// dimension order.
    #[inline]
    pub fn fill_uniform_box(&mut self, bx: &BoundingBox, out: &mut [f64]) {
        debug_assert_eq!(out.len(), bx.dim());
        for (slot, &(lo, hi)) in out.iter_mut().zip(bx.bounds()) {
            *slot = affine(lo, hi, self.uniform01());
        }
    }

    pub fn uniform_box(&mut self, bx: &BoundingBox) -> Vec<f64> {
        let mut out = vec![0.0; bx.dim()];
        self.fill_uniform_box(bx, &mut out);
        out
    }
}

/// `lo + u * (hi - lo)`, clamped below `hi` so rounding can never land on the
/// open upper edge.
#[inline]
pub(crate) fn affine(lo: f64, hi: f64, u: f64) -> f64 {
    let v = lo + u * (hi - lo);
    if v < hi {
        v
    } else {
        prev_toward(hi, lo)
    }
}

#[inline]
fn prev_toward(hi: f64, lo: f64) -> f64 {
    let next = if hi > 0.0 {
        f64::from_bits(hi.to_bits() - 1)
    } else if hi == 0.0 {
        -f64::from_bits(1)
    } else {
        f64::from_bits(hi.to_bits() + 1)
    };
    next.max(lo)
}

#[inline]
pub fn bits_to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn make_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed)
}

/// Stream for parallel chunk `chunk` of a run seeded with `seed`.
pub fn substream(seed: u64, chunk: u64) -> RandomStream {
    RandomStream::new(mix64(seed ^ GOLDEN_GAMMA.wrapping_mul(chunk.wrapping_add(1))))
}

/// Parses a seed given either in decimal or with a `0x` prefix.
pub fn parse_seed(text: &str) -> Option<u64> {
    let t = text.trim();
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => t.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_zero_reference_output() {
        let mut s = make_stream(0);
        assert_eq!(s.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(s.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn unit_conversion_edges() {
        assert_eq!(bits_to_unit(0), 0.0);
        assert_eq!(bits_to_unit(u64::MAX), 0.9999999999999999);
        assert!(bits_to_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = make_stream(99);
        let mut b = make_stream(99);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(make_stream(1).next_u64(), make_stream(2).next_u64());
    }

    #[test]
    fn substreams_are_pure_and_distinct() {
        assert_eq!(substream(5, 3), substream(5, 3));
        assert_ne!(substream(5, 0).next_u64(), substream(5, 1).next_u64());
        assert_ne!(substream(5, 0).next_u64(), substream(6, 0).next_u64());
    }

    #[test]
    fn seeds_parse_in_both_bases() {
        assert_eq!(parse_seed("42"), Some(42));
        assert_eq!(parse_seed("0x2A"), Some(42));
        assert_eq!(parse_seed("0xffffffffffffffff"), Some(u64::MAX));
        assert_eq!(parse_seed("-1"), None);
        assert_eq!(parse_seed("0xzz"), None);
    }

    #[test]
    fn affine_never_reaches_upper_edge() {
        let u = bits_to_unit(u64::MAX);
        assert!(affine(2.0, 2.0 + 1e-15, u) < 2.0 + 1e-15);
        assert!(affine(-5.0, 5.0, u) < 5.0);
        assert!(affine(-1.0, 0.0, u) < 0.0);
        assert_eq!(affine(0.0, 1.0, 0.25), 0.25);
    }
}
