use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Randomly partition items into (train, test) at `ratio_train:ratio_test`,
/// e.g. 4:1. The split is deterministic for a fixed seed and the train count
/// is the rounded share of the total, so both sides are within one item of
/// the exact ratio.
pub fn split_dataset<T>(
    items: Vec<T>,
    ratio_train: u32,
    ratio_test: u32,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if ratio_train == 0 || ratio_test == 0 {
        return Err(Error::InvalidConfig {
            context: format!("split ratio {ratio_train}/{ratio_test} must have positive parts"),
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyInput {
            context: "split_dataset".to_string(),
        });
    }
    let total = items.len();
    let share = f64::from(ratio_train) / f64::from(ratio_train + ratio_test);
    let n_train = ((total as f64 * share).round() as usize).min(total);

    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut take_train = vec![false; total];
    for &index in order.iter().take(n_train) {
        take_train[index] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(total - n_train);
    for (item, is_train) in items.into_iter().zip(take_train) {
        if is_train {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_items_four_to_one_is_eighty_twenty() {
        let (train, test) = split_dataset((0..100).collect(), 4, 1, 42).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
    }

    #[test]
    fn five_items_four_to_one_is_four_one() {
        let (train, test) = split_dataset((0..5).collect(), 4, 1, 42).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
    }

    #[test]
    fn same_seed_gives_identical_partition() {
        let a = split_dataset((0..37).collect::<Vec<_>>(), 4, 1, 7).unwrap();
        let b = split_dataset((0..37).collect::<Vec<_>>(), 4, 1, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let (train, test) = split_dataset((0..103).collect::<Vec<_>>(), 3, 2, 1).unwrap();
        let mut all: Vec<_> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        // 103 * 3/5 = 61.8 -> 62 train, 41 test; within one of the ratio.
        assert_eq!((train.len(), test.len()), (62, 41));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(split_dataset(Vec::<u8>::new(), 4, 1, 0).is_err());
    }

    #[test]
    fn zero_ratio_is_an_error() {
        assert!(split_dataset(vec![1, 2, 3], 0, 1, 0).is_err());
        assert!(split_dataset(vec![1, 2, 3], 4, 0, 0).is_err());
    }
}
