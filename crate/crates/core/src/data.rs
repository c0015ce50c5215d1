//! In-memory datasets, z-score standardization and synthetic blobs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::matrix::squared_distance;
use crate::numkit::{DenseMatrix, Rng};
use crate::{Error, Result};

/// Center placement attempts per blob before giving up.
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub name: String,
    pub x: DenseMatrix,
    pub y: Vec<usize>,
    pub k: usize,
}

impl Dataset {
    /// Checks that labels lie in `0..k`, every class occurs and the row
    /// counts agree.
    pub fn new(name: impl Into<String>, x: DenseMatrix, y: Vec<usize>, k: usize) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidK { k, n: x.rows() });
        }
        let mut seen = vec![false; k];
        for (index, &label) in y.iter().enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange { index, label, k });
            }
            seen[label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(alloc::format!("class {missing} of {k} has no samples")));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite { context: "dataset features" });
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
            k,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Rows `idx` with their labels; `k` is kept even if a class is absent.
    pub fn subset(&self, idx: &[usize]) -> (DenseMatrix, Vec<usize>) {
        (self.x.select_rows(idx), idx.iter().map(|&i| self.y[i]).collect())
    }

    /// Appends zero feature columns up to `dim`; wider data is unchanged.
    pub fn zero_padded(&self, dim: usize) -> Self {
        Self {
            x: self.x.pad_columns(dim.saturating_sub(self.dim())),
            ..self.clone()
        }
    }

    /// Same dataset with class ids renamed through `perm`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        Self {
            y: self.y.iter().map(|&l| perm[l]).collect(),
            ..self.clone()
        }
    }
}

/// Per-column z-score transform.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population std; 1.0 for zero-variance columns.
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &DenseMatrix) -> Result<Self> {
        if x.rows() < 2 {
            return Err(Error::TooFewSamples { n: x.rows(), min: 2 });
        }
        let n = x.rows() as f64;
        let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for row in x.row_iter() {
            for ((v, m), r) in var.iter_mut().zip(&mean).zip(row) {
                *v += (r - m) * (r - m);
            }
        }
        let mut std = Vec::with_capacity(x.cols());
        let mut zero_variance = Vec::with_capacity(x.cols());
        for v in var {
            let s = libm::sqrt(v / n);
            let flat = !(s > 0.0);
            zero_variance.push(flat);
            std.push(if flat { 1.0 } else { s });
        }
        Ok(Self {
            mean,
            std,
            zero_variance,
        })
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "Standardizer::apply",
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn has_zero_variance(&self) -> bool {
        self.zero_variance.iter().any(|&z| z)
    }
}

/// Standardizes every column of `ds` on its own statistics.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let t = Standardizer::fit(&ds.x)?;
    let x = t.apply(&ds.x)?;
    Ok((Dataset { x, ..ds.clone() }, t))
}

/// `K` isotropic Gaussian blobs. Centers are drawn uniformly from a cube of
/// half-width `separation * K` and rejected until pairwise distances are at
/// least `separation`; sample `i` belongs to blob `i % K`.
pub fn synth_blobs(n: usize, d: usize, k: usize, separation: f64, sigma: f64, rng: &mut Rng) -> Result<Dataset> {
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if d == 0 || !(separation > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(
            "synth_blobs needs d >= 1, separation > 0 and sigma >= 0".into(),
        ));
    }
    let half = separation * k as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let sep2 = separation * separation;
    while centers.len() < k {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let c: Vec<f64> = (0..d).map(|_| rng.uniform_range(-half, half)).collect();
            if centers.iter().all(|o| squared_distance(o, &c) >= sep2) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasibleGeometry { k, separation });
        }
    }
    let mut values = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        for &c in &centers[label] {
            values.push(c + sigma * rng.normal());
        }
        y.push(label);
    }
    let x = DenseMatrix::from_vec(n, d, values)?;
    Dataset::new(alloc::format!("blobs-n{n}-d{d}-k{k}"), x, y, k)
}
