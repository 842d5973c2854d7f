use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fixed binary spatial mask for one output channel's kernel; broadcast
/// over the input-channel axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMask {
    pub kh: usize,
    pub kw: usize,
    pub mask: Vec<bool>,
    pub bernoulli_p: f64,
    pub seed: u64,
}

impl SpatialMask {
    pub fn ones(kh: usize, kw: usize) -> Self {
        Self {
            kh,
            kw,
            mask: vec![true; kh * kw],
            bernoulli_p: 1.0,
            seed: 0,
        }
    }

    #[inline]
    pub fn is_active(&self, p: usize, q: usize) -> bool {
        self.mask[p * self.kw + q]
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `count` masks of `kh×kw` independent Bernoulli(`p`) entries drawn in
/// order from a ChaCha8 stream seeded with `seed`.
pub fn make_masks(count: usize, kh: usize, kw: usize, p: f64, seed: u64) -> Result<Vec<SpatialMask>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("Bernoulli probability must be in [0,1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| SpatialMask {
            kh,
            kw,
            mask: (0..kh * kw).map(|_| rng.random::<f64>() < p).collect(),
            bernoulli_p: p,
            seed,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_probabilities() {
        let zeros = make_masks(4, 5, 5, 0.0, 1).unwrap();
        assert!(zeros.iter().all(|m| m.active_count() == 0));
        let ones = make_masks(4, 5, 5, 1.0, 1).unwrap();
        assert!(ones.iter().all(|m| m.active_count() == 25));
        assert!(make_masks(1, 3, 3, 1.5, 1).is_err());
    }

    #[test]
    fn ones_fraction_near_p() {
        let masks = make_masks(4000, 5, 5, 0.3, 42).unwrap();
        let ones: usize = masks.iter().map(SpatialMask::active_count).sum();
        let frac = ones as f64 / 100_000.0;
        assert!((frac - 0.3).abs() <= 0.01, "fraction {frac}");
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(make_masks(8, 3, 3, 0.3, 7).unwrap(), make_masks(8, 3, 3, 0.3, 7).unwrap());
        assert_ne!(make_masks(8, 3, 3, 0.3, 7).unwrap(), make_masks(8, 3, 3, 0.3, 8).unwrap());
    }
}
