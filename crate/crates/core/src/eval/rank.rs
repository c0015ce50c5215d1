//! Per-dataset ranks and their aggregation over datasets.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::mean_std;
use crate::{Error, Result};

/// Mean and std of the fold accuracies of one (dataset, method) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccuracyCell {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankTable {
    pub datasets: Vec<String>,
    /// In registration order.
    pub methods: Vec<String>,
    /// `ranks[dataset][method]`, 1 = best.
    pub ranks: Vec<Vec<usize>>,
    /// Mean rank per method over datasets.
    pub average: Vec<f64>,
    /// Population std of the ranks per method.
    pub average_std: Vec<f64>,
    pub overall: Vec<usize>,
}

/// Ranks methods within each dataset by mean accuracy, highest first.
/// Equal means are ordered by smaller std, then by registration order, so
/// every row is a permutation of `1..=M`. The overall rank orders methods
/// by average rank, ties to registration order.
pub fn rank_methods(
    datasets: &[String],
    methods: &[String],
    cells: &[Vec<Option<AccuracyCell>>],
) -> Result<RankTable> {
    if cells.len() != datasets.len() {
        return Err(Error::LengthMismatch {
            left: datasets.len(),
            right: cells.len(),
        });
    }
    let m = methods.len();
    let mut ranks = Vec::with_capacity(datasets.len());
    for (d, row) in cells.iter().enumerate() {
        if row.len() != m {
            return Err(Error::LengthMismatch { left: m, right: row.len() });
        }
        let mut present = Vec::with_capacity(m);
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Some(c) => present.push((j, *c)),
                None => return Err(Error::MissingCell { dataset: d, method: j }),
            }
        }
        present.sort_by(|(ja, a), (jb, b)| {
            b.mean
                .total_cmp(&a.mean)
                .then(a.std.total_cmp(&b.std))
                .then(ja.cmp(jb))
        });
        let mut r = alloc::vec![0; m];
        for (pos, (j, _)) in present.iter().enumerate() {
            r[*j] = pos + 1;
        }
        ranks.push(r);
    }
    let mut average = Vec::with_capacity(m);
    let mut average_std = Vec::with_capacity(m);
    for j in 0..m {
        let col: Vec<f64> = ranks.iter().map(|r| r[j] as f64).collect();
        let (mu, sd) = mean_std(&col);
        average.push(mu);
        average_std.push(sd);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| average[a].partial_cmp(&average[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut overall = alloc::vec![0; m];
    for (pos, &j) in order.iter().enumerate() {
        overall[j] = pos + 1;
    }
    Ok(RankTable {
        datasets: datasets.to_vec(),
        methods: methods.to_vec(),
        ranks,
        average,
        average_std,
        overall,
    })
}
