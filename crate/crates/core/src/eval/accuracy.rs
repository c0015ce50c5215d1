//! Contingency counts, Hungarian matching and clustering accuracy.

use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::DenseMatrix;
use crate::{Error, Result};

/// `K x K` counts; entry `(a, b)` is the number of samples predicted `a`
/// whose true label is `b`.
pub fn contingency(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<DenseMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut m = DenseMatrix::zeros(k, k);
    for (index, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        for label in [t, p] {
            if label >= k {
                return Err(Error::LabelOutOfRange { index, label, k });
            }
        }
        m.row_mut(p)[t] += 1.0;
    }
    Ok(m)
}

/// Optimal assignment of rows to columns; `perm[row] = column`. Runs the
/// O(K^3) shortest augmenting path method with row and column potentials.
pub fn hungarian_match(matrix: &DenseMatrix, maximize: bool) -> Result<Vec<usize>> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if !matrix.is_finite() {
        return Err(Error::NonFinite { context: "hungarian_match" });
    }
    let n = rows;
    let cost = |i: usize, j: usize| {
        let v = matrix.get(i, j);
        if maximize {
            -v
        } else {
            v
        }
    };
    // 1-based arrays; index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Percentage of samples whose predicted cluster maps to their true class
/// under the best one-to-one mapping.
pub fn cluster_accuracy(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::TooFewSamples { n: 0, min: 1 });
    }
    let c = contingency(y_true, y_pred, k)?;
    let perm = hungarian_match(&c, true)?;
    let matched: f64 = perm.iter().enumerate().map(|(p, &t)| c.get(p, t)).sum();
    Ok(100.0 * matched / y_true.len() as f64)
}
