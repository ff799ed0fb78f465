use hmpnn::harness::{kfold_stratified, stratified_split};
use proptest::prelude::*;

fn positives(labels: &[u8], idx: &[usize]) -> usize {
    idx.iter().filter(|&&i| labels[i] == 1).count()
}

/// 20k nodes at 0.5% prevalence, positives spread deterministically.
fn default_labels() -> Vec<u8> {
    (0..20_000).map(|i| (i % 200 == 7) as u8).collect()
}

#[test]
fn seventy_thirty_split_keeps_prevalence() {
    let y = default_labels();
    let overall = positives(&y, &(0..y.len()).collect::<Vec<_>>()) as f64 / y.len() as f64;
    for seed in 0..5 {
        let s = stratified_split(&y, 0.7, seed).unwrap();
        for part in [&s.train, &s.test] {
            let p = positives(&y, part) as f64 / part.len() as f64;
            assert!((p - overall).abs() * 100.0 <= 0.05, "seed {seed}: {p} vs {overall}");
        }
    }
}

#[test]
fn five_folds_are_balanced_per_class() {
    let y = default_labels();
    let folds = kfold_stratified(&y, 5, 3).unwrap();
    for class in [0u8, 1] {
        let counts: Vec<usize> = folds
            .iter()
            .map(|f| f.test.iter().filter(|&&i| y[i] == class).count())
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "class {class}: {counts:?}");
    }
}

fn labels_strategy() -> impl Strategy<Value = Vec<u8>> {
    (10usize..400, 0.05f64..0.5).prop_flat_map(|(n, p)| {
        prop::collection::vec(prop::bool::weighted(p), n).prop_map(|v| {
            let mut y: Vec<u8> = v.into_iter().map(u8::from).collect();
            // at least five of each class
            for i in 0..5 {
                y[i] = 1;
                y[5 + i] = 0;
            }
            y
        })
    })
}

proptest! {
    #[test]
    fn split_partitions_and_stratifies(y in labels_strategy(), ratio in 0.1f64..0.9, seed in 0u64..1000) {
        let s = stratified_split(&y, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for class in [0u8, 1] {
            let n_c = y.iter().filter(|&&v| v == class).count();
            let in_train = s.train.iter().filter(|&&i| y[i] == class).count();
            prop_assert_eq!(in_train, (ratio * n_c as f64).round() as usize);
        }
        prop_assert_eq!(s, stratified_split(&y, ratio, seed).unwrap());
    }

    #[test]
    fn folds_cover_once_and_balance(y in labels_strategy(), k in 2usize..6, seed in 0u64..1000) {
        let folds = kfold_stratified(&y, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut held: Vec<usize> = folds.iter().flat_map(|f| f.test.iter().copied()).collect();
        held.sort_unstable();
        prop_assert_eq!(held, (0..y.len()).collect::<Vec<_>>());
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.test.len(), y.len());
            prop_assert!(f.test.iter().all(|i| f.train.binary_search(i).is_err()));
        }
        for class in [0u8, 1] {
            let counts: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&i| y[i] == class).count()).collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }
}
