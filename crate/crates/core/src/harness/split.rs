use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::derive_seed;

const SPLIT_STREAM: u64 = 0x5917;
const FOLD_STREAM: u64 = 0xf01d;

/// Train/test partition of positions into a label vector. Both index lists
/// are sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded per-class shuffles of `0..labels.len()`, negatives then positives.
fn class_members(labels: &[u8], rng: &mut ChaCha8Rng) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        classes[(y != 0) as usize].push(i);
    }
    for c in &mut classes {
        c.shuffle(rng);
    }
    classes
}

/// Proportional allocation per class: `round(ratio * n_c)` of each class go
/// to train.
pub fn stratified_split(labels: &[u8], ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM));
    let classes = class_members(labels, &mut rng);
    if let Some(c) = classes.iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("class {c} has no members")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in &classes {
        let k = (ratio * c.len() as f64).round() as usize;
        train.extend_from_slice(&c[..k]);
        test.extend_from_slice(&c[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec { train, test, ratio, seed })
}

/// `k` stratified folds; split `j` holds out fold `j` as `test`. Class
/// members are dealt round-robin after a seeded shuffle.
pub fn kfold_stratified(labels: &[u8], k: usize, seed: u64) -> Result<Vec<SplitSpec>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}; need at least 2 folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, FOLD_STREAM));
    let classes = class_members(labels, &mut rng);
    for (c, members) in classes.iter().enumerate() {
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
    }
    let mut fold_of = vec![0usize; labels.len()];
    for members in &classes {
        for (i, &v) in members.iter().enumerate() {
            fold_of[v] = i % k;
        }
    }
    Ok((0..k)
        .map(|j| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&v| fold_of[v] == j);
            SplitSpec {
                train,
                test,
                ratio: (k - 1) as f64 / k as f64,
                seed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_nodes_half_split() {
        let y = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let s = stratified_split(&y, 0.5, 3).unwrap();
        let pos = |idx: &[usize]| idx.iter().filter(|&&i| y[i] == 1).count();
        assert!((2..=3).contains(&pos(&s.train)));
        assert!((2..=3).contains(&pos(&s.test)));
        assert_eq!(s.train.len() + s.test.len(), 10);
        assert_eq!(s, stratified_split(&y, 0.5, 3).unwrap());
    }

    #[test]
    fn one_positive_per_fold() {
        let y = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let folds = kfold_stratified(&y, 5, 0).unwrap();
        for f in &folds {
            assert_eq!(f.test.iter().filter(|&&i| y[i] == 1).count(), 1);
            assert_eq!(f.train.len() + f.test.len(), 10);
        }
        assert!(kfold_stratified(&[1, 0, 0, 0, 0, 0], 5, 0).is_err());
    }

    #[test]
    fn errors() {
        assert!(stratified_split(&[0, 0, 0], 0.7, 0).is_err());
        assert!(stratified_split(&[0, 1], 1.0, 0).is_err());
    }
}
