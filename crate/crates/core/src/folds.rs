//! Cross-validation splits.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Partition of item indices into `k` test folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub test: Vec<Vec<usize>>,
    /// False when some class had fewer than `k` members and the plan fell
    /// back to an unstratified split.
    pub stratified: bool,
    items: usize,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.test.len()
    }

    pub fn items(&self) -> usize {
        self.items
    }

    /// Sorted complement of test fold `fold`.
    pub fn train(&self, fold: usize) -> Vec<usize> {
        let mut in_test = vec![false; self.items];
        for &i in &self.test[fold] {
            in_test[i] = true;
        }
        (0..self.items).filter(|&i| !in_test[i]).collect()
    }
}

/// Stratified `k`-fold split over items labeled by `labels`.
///
/// Items of each class are shuffled, the classes are concatenated, and the
/// `t`-th item of that sequence goes to fold `t mod k`. Fold sizes therefore
/// differ by at most one and each class is spread as evenly as possible.
pub fn make_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} items cannot fill {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let stratified = by_class.iter().all(|m| m.is_empty() || m.len() >= k);
    let order: Vec<usize> = if stratified {
        by_class
            .into_iter()
            .flat_map(|mut members| {
                members.shuffle(&mut rng);
                members
            })
            .collect()
    } else {
        log::warn!("a class has fewer than {k} members; using unstratified folds");
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut test = vec![Vec::new(); k];
    for (t, i) in order.into_iter().enumerate() {
        test[t % k].push(i);
    }
    for fold in &mut test {
        fold.sort_unstable();
    }
    Ok(FoldPlan {
        seed,
        test,
        stratified,
        items: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_items_ten_singletons() {
        let plan = make_folds(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 10, 0).unwrap();
        assert!(plan.test.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn sizes_for_188() {
        let labels: Vec<usize> = (0..188).map(|i| usize::from(i < 63)).collect();
        let plan = make_folds(&labels, 10, 5).unwrap();
        let mut sizes: Vec<usize> = plan.test.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes.iter().filter(|&&s| s == 19).count(), 8);
        assert_eq!(sizes.iter().filter(|&&s| s == 18).count(), 2);
    }

    #[test]
    fn small_class_falls_back() {
        let plan = make_folds(&[0, 0, 0, 0, 1], 3, 1).unwrap();
        assert!(!plan.stratified);
        assert!(make_folds(&[0, 0, 0, 1, 1, 1], 3, 1).unwrap().stratified);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(make_folds(&[0, 1], 1, 0).is_err());
        assert!(make_folds(&[0, 1], 3, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(
            labels in prop::collection::vec(0usize..4, 10..200),
            k in 2usize..11,
            seed in any::<u64>(),
        ) {
            prop_assume!(labels.len() >= k);
            let plan = make_folds(&labels, k, seed).unwrap();
            let mut seen = vec![0u8; labels.len()];
            for f in &plan.test {
                for &i in f {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = plan.test.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in 0..k {
                prop_assert_eq!(plan.train(f).len() + plan.test[f].len(), labels.len());
            }
            if plan.stratified {
                // Per-fold class counts within one item of the class's even share.
                for c in 0..4 {
                    let total = labels.iter().filter(|&&l| l == c).count() as f64;
                    let expected = total / k as f64;
                    for f in &plan.test {
                        let here = f.iter().filter(|&&i| labels[i] == c).count() as f64;
                        prop_assert!((here - expected).abs() < 1.0,
                            "class {} has {} expected {}", c, here, expected);
                    }
                }
            }
        }
    }
}
