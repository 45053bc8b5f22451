//! Seeded stratified subsetting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Items kept from a class of `n` at `fraction`: round-half-up with a floor of one.
pub fn kept_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((n as f64 * fraction + 0.5 + 1e-9).floor() as usize).clamp(1, n)
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("fraction {fraction} is outside (0, 1]")))
    }
}

/// Indices (ascending) of the items kept from `labels`.
///
/// Each class is shuffled once by a generator seeded only by `seed`, and the
/// prefix of that permutation is kept, so smaller fractions are nested in larger ones.
pub fn subset_indices(labels: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    check_fraction(fraction)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let k = kept_count(members.len(), fraction);
        keep.extend_from_slice(&members[..k]);
    }
    keep.sort_unstable();
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_half_up_per_class() {
        assert_eq!((kept_count(13, 0.5), kept_count(7, 0.5)), (7, 4));
        assert_eq!(kept_count(500, 0.1), 50);
        assert_eq!(kept_count(3, 0.01), 1);
        assert_eq!(kept_count(0, 0.5), 0);
    }

    #[test]
    fn full_fraction_is_identity() {
        let labels: Vec<usize> = (0..37).map(|i| (i * 7) % 4).collect();
        assert_eq!(subset_indices(&labels, 1.0, 9).unwrap(), (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_fraction() {
        assert!(subset_indices(&[0, 1], 0.0, 1).is_err());
        assert!(subset_indices(&[0, 1], 1.5, 1).is_err());
    }
}
