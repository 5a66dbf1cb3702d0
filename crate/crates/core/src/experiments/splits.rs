use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for FoldPlan {
    fn default() -> Self {
        Self { n_folds: 10, seed: 0 }
    }
}

/// Index sets of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Panics if the test set shares an index with train or dev.
    pub fn assert_disjoint(&self) {
        let seen: BTreeSet<usize> = self.train.iter().chain(&self.dev).copied().collect();
        assert!(self.test.iter().all(|i| !seen.contains(i)), "test overlaps training selection");
        let train: BTreeSet<usize> = self.train.iter().copied().collect();
        assert!(self.dev.iter().all(|i| !train.contains(i)), "dev overlaps train");
    }
}

/// A shuffled partition of `0..size` into folds whose sizes differ by at
/// most one, smaller folds first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub folds: Vec<Vec<usize>>,
}

pub fn make_folds(size: usize, plan: &FoldPlan) -> Result<Folds> {
    if plan.n_folds < 3 {
        return Err(ExperimentError::Plan(format!("{} folds cannot hold train, dev and test", plan.n_folds)));
    }
    if size < plan.n_folds {
        return Err(ExperimentError::TooSmall { size, needed: plan.n_folds });
    }
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let base = size / plan.n_folds;
    let larger = size % plan.n_folds;
    let mut folds = Vec::with_capacity(plan.n_folds);
    let mut start = 0;
    for f in 0..plan.n_folds {
        let len = base + usize::from(f >= plan.n_folds - larger);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(Folds { folds })
}

impl Folds {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Run `r` tests on fold `r`, early-stops on fold `r + 1` and trains on
    /// the rest.
    pub fn run(&self, r: usize) -> Split {
        let n = self.folds.len();
        let test = self.folds[r % n].clone();
        let dev = self.folds[(r + 1) % n].clone();
        let mut train: Vec<usize> =
            (0..n).filter(|&f| f != r % n && f != (r + 1) % n).flat_map(|f| self.folds[f].iter().copied()).collect();
        train.sort_unstable();
        let split = Split { train, dev, test };
        split.assert_disjoint();
        split
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResamplePlan {
    pub train_size: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ResamplePlan {
    fn default() -> Self {
        Self { train_size: 200, repeats: 10, seed: 0 }
    }
}

/// `(train, test)` index sets for every repeat: `train_size` random items
/// for training and the remainder for testing.
pub fn resample(size: usize, plan: &ResamplePlan) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if size == 0 || plan.train_size > size - 1 {
        return Err(ExperimentError::TooSmall { size, needed: plan.train_size + 1 });
    }
    let mut out = Vec::with_capacity(plan.repeats);
    for r in 0..plan.repeats {
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(crate::derive_seed(plan.seed, r as u64)));
        let mut train = order[..plan.train_size].to_vec();
        let mut test = order[plan.train_size..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Split { train: train.clone(), dev: Vec::new(), test: test.clone() }.assert_disjoint();
        out.push((train, test));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_split_pattern() {
        let folds = make_folds(1958, &FoldPlan::default()).unwrap();
        let mut sizes: Vec<usize> = folds.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 1958);
        sizes.sort_unstable();
        assert_eq!(sizes, [195, 195, 196, 196, 196, 196, 196, 196, 196, 196]);
        let run = folds.run(0);
        assert_eq!((run.train.len(), run.dev.len(), run.test.len()), (1568, 195, 195));
    }

    #[test]
    fn test_folds_cover_corpus_once() {
        let folds = make_folds(137, &FoldPlan { n_folds: 10, seed: 4 }).unwrap();
        let mut all: Vec<usize> = (0..10).flat_map(|r| folds.run(r).test).collect();
        all.sort_unstable();
        assert_eq!(all, (0..137).collect::<Vec<_>>());
        let one = make_folds(10, &FoldPlan::default()).unwrap();
        assert!(one.folds.iter().all(|f| f.len() == 1));
        assert!(make_folds(9, &FoldPlan::default()).is_err());
    }

    #[test]
    fn resampling_sizes_and_errors() {
        let plan = ResamplePlan { train_size: 10, repeats: 10, seed: 2 };
        let reps = resample(50, &plan).unwrap();
        assert_eq!(reps.len(), 10);
        for (train, test) in &reps {
            assert_eq!(train.len(), 10);
            assert_eq!(test.len(), 40);
            assert!(train.iter().all(|i| !test.contains(i)));
        }
        assert_ne!(reps[0], reps[1]);
        assert_eq!(reps, resample(50, &plan).unwrap());
        assert!(resample(10, &ResamplePlan { train_size: 10, ..plan }).is_err());
        let zero = resample(5, &ResamplePlan { train_size: 0, ..plan }).unwrap();
        assert!(zero.iter().all(|(tr, te)| tr.is_empty() && te.len() == 5));
    }
}
