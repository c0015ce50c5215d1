//! Five-fold splits.

use alloc::vec::Vec;

use crate::numkit::Rng;
use crate::{Error, Result};

pub const N_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Indices outside fold `f`, in fold order.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect()
    }

    pub fn test_indices(&self, f: usize) -> &[usize] {
        &self.folds[f]
    }
}

/// Shuffles `0..n` and cuts it into five contiguous folds; the first
/// `n % 5` folds get one extra index.
pub fn make_folds(n: usize, rng: &mut Rng) -> Result<FoldPlan> {
    if n < N_FOLDS {
        return Err(Error::TooFewSamples { n, min: N_FOLDS });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(FoldPlan { folds: split(&order) })
}

/// Class-stratified variant: each class is shuffled and dealt round-robin
/// across folds, continuing where the previous class stopped.
pub fn make_stratified_folds(y: &[usize], rng: &mut Rng) -> Result<FoldPlan> {
    if y.len() < N_FOLDS {
        return Err(Error::TooFewSamples { n: y.len(), min: N_FOLDS });
    }
    let k = y.iter().max().map_or(0, |m| m + 1);
    let mut folds: Vec<Vec<usize>> = (0..N_FOLDS).map(|_| Vec::new()).collect();
    let mut next = 0;
    for class in 0..k {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rng.shuffle(&mut members);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % N_FOLDS;
        }
    }
    Ok(FoldPlan { folds })
}

fn split(order: &[usize]) -> Vec<Vec<usize>> {
    let base = order.len() / N_FOLDS;
    let extra = order.len() % N_FOLDS;
    let mut out = Vec::with_capacity(N_FOLDS);
    let mut start = 0;
    for f in 0..N_FOLDS {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(p: &FoldPlan) -> Vec<usize> {
        p.folds.iter().map(Vec::len).collect()
    }

    #[test]
    fn fold_sizes() {
        assert_eq!(sizes(&make_folds(10, &mut Rng::new(0)).unwrap()), [2; 5]);
        assert_eq!(sizes(&make_folds(11, &mut Rng::new(0)).unwrap()), [3, 2, 2, 2, 2]);
        assert!(make_folds(4, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn folds_partition_and_repeat() {
        let a = make_folds(37, &mut Rng::new(5)).unwrap();
        assert_eq!(a, make_folds(37, &mut Rng::new(5)).unwrap());
        let mut all: Vec<usize> = a.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        let train = a.train_indices(2);
        assert_eq!(train.len() + a.test_indices(2).len(), 37);
        assert!(train.iter().all(|i| !a.test_indices(2).contains(i)));
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let y: Vec<usize> = (0..50).map(|i| usize::from(i % 5 == 0)).collect();
        let p = make_stratified_folds(&y, &mut Rng::new(2)).unwrap();
        for f in &p.folds {
            assert_eq!(f.iter().filter(|&&i| y[i] == 1).count(), 2);
            assert_eq!(f.len(), 10);
        }
    }
}
