use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded shuffle of `0..n_items` chunked into batches. A trailing batch
/// smaller than 2 is dropped.
pub fn make_batches(n_items: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if n_items < 2 || batch_size < 2 {
        return Err(Error::arg(format!(
            "need n_items >= 2 and batch_size >= 2 (got {n_items}, {batch_size})"
        )));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch));
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Seeded split into (train, validation) index lists, both sorted.
pub fn split_validation(n_items: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::arg(format!("validation fraction must lie in [0, 1), got {fraction}")));
    }
    let n_val = (n_items as f64 * fraction).round() as usize;
    let mut order: Vec<usize> = (0..n_items).collect();
    // offset keeps the split stream apart from epoch shuffles
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x005e_ed0f_5e11)));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_rule() {
        let b = make_batches(5, 2, 0, 0).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.len() == 2));
        let b = make_batches(7, 3, 0, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3]);
        let b = make_batches(8, 3, 0, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 2]);
    }

    #[test]
    fn deterministic_and_epoch_dependent() {
        assert_eq!(make_batches(50, 8, 3, 2).unwrap(), make_batches(50, 8, 3, 2).unwrap());
        assert_ne!(make_batches(50, 8, 3, 2).unwrap(), make_batches(50, 8, 3, 3).unwrap());
    }

    #[test]
    fn full_batch_is_permutation() {
        let b = make_batches(64, 64, 9, 1).unwrap();
        assert_eq!(b.len(), 1);
        let mut s = b[0].clone();
        s.sort_unstable();
        assert_eq!(s, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_sizes() {
        assert!(make_batches(1, 2, 0, 0).is_err());
        assert!(make_batches(10, 1, 0, 0).is_err());
    }

    #[test]
    fn split_partitions() {
        let (t, v) = split_validation(100, 0.1, 4).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(t.len(), 90);
        let mut all: Vec<_> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_validation(100, 0.1, 4).unwrap(), (t, v));
        assert!(split_validation(10, 1.0, 0).is_err());
    }
}
