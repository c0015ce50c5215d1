//! Lloyd's k-means with k-means++ seeding and seeded restarts.

use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::matrix::squared_distance;
use crate::numkit::rng::{derive_seed, Rng};
use crate::numkit::DenseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KMeansModel {
    /// `K x m`.
    pub centroids: DenseMatrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    /// Inertia after every assignment step of the winning run; entry 0 is
    /// the inertia right after initialization.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
#[inline]
pub fn nearest_centroid(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(x: &DenseMatrix, centroids: &DenseMatrix) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = x
        .row_iter()
        .map(|p| {
            let (j, d) = nearest_centroid(p, centroids);
            inertia += d;
            j
        })
        .collect();
    (labels, inertia)
}

/// Recomputes centroids as cluster means; an empty cluster keeps its
/// previous centroid.
fn update_centroids(x: &DenseMatrix, labels: &[usize], centroids: &mut DenseMatrix) {
    let (k, m) = centroids.shape();
    let mut sums = DenseMatrix::zeros(k, m);
    let mut counts = vec![0usize; k];
    for (p, &j) in x.row_iter().zip(labels) {
        counts[j] += 1;
        for (s, v) in sums.row_mut(j).iter_mut().zip(p) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            let inv = 1.0 / counts[j] as f64;
            for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                *c = s * inv;
            }
        }
    }
}

fn check_k(x: &DenseMatrix, k: usize) -> Result<()> {
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidK { k, n: x.rows() });
    }
    Ok(())
}

/// k-means++ seeding; returns the chosen data indices in pick order.
/// When every remaining point coincides with a chosen centroid the lowest
/// unchosen index is taken.
pub fn kmeans_plus_plus(x: &DenseMatrix, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    check_k(x, k)?;
    let n = x.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(n));
    let mut d2: Vec<f64> = x.row_iter().map(|p| squared_distance(p, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let pick = match rng.weighted_index(&d2) {
            Some(i) => i,
            None => (0..n).find(|i| !chosen.contains(i)).expect("k <= n"),
        };
        chosen.push(pick);
        let c = x.row(pick);
        for (d, p) in d2.iter_mut().zip(x.row_iter()) {
            *d = d.min(squared_distance(p, c));
        }
        d2[pick] = 0.0;
    }
    Ok(chosen)
}

/// Lloyd iterations from the given initial centroids until the assignment
/// reaches a fixpoint or `max_iter` centroid updates have run.
pub fn kmeans_from(x: &DenseMatrix, init: DenseMatrix, max_iter: usize) -> Result<KMeansModel> {
    if init.cols() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "kmeans_from",
            expected: x.cols(),
            found: init.cols(),
        });
    }
    check_k(x, init.rows())?;
    let mut centroids = init;
    let (mut labels, mut inertia) = assign_all(x, &centroids);
    let mut history = vec![inertia];
    let mut converged = false;
    for _ in 0..max_iter {
        update_centroids(x, &labels, &mut centroids);
        let (next, next_inertia) = assign_all(x, &centroids);
        history.push(next_inertia);
        let fixpoint = next == labels;
        labels = next;
        inertia = next_inertia;
        if fixpoint {
            converged = true;
            break;
        }
    }
    Ok(KMeansModel {
        centroids,
        assignments: labels,
        inertia,
        inertia_history: history,
        converged,
    })
}

/// Best-inertia k-means over `n_restarts` k-means++ seedings. Restart `r`
/// draws from a sub-stream derived from one draw of `rng` and `r`; ties in
/// inertia go to the lower restart index.
pub fn kmeans_fit(
    x: &DenseMatrix,
    k: usize,
    rng: &mut Rng,
    max_iter: usize,
    n_restarts: usize,
) -> Result<KMeansModel> {
    check_k(x, k)?;
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "kmeans_fit" });
    }
    let base = rng.next_u64();
    let mut best: Option<KMeansModel> = None;
    for r in 0..n_restarts.max(1) {
        let mut sub = Rng::new(derive_seed(base, r as u64));
        let seeds = kmeans_plus_plus(x, k, &mut sub)?;
        let model = kmeans_from(x, x.select_rows(&seeds), max_iter)?;
        if best.as_ref().map_or(true, |b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Nearest-centroid labels for new points.
pub fn kmeans_assign(model: &KMeansModel, x: &DenseMatrix) -> Result<Vec<usize>> {
    if x.cols() != model.centroids.cols() {
        return Err(Error::DimensionMismatch {
            context: "kmeans_assign",
            expected: model.centroids.cols(),
            found: x.cols(),
        });
    }
    Ok(x.row_iter().map(|p| nearest_centroid(p, &model.centroids).0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(rng: &mut Rng) -> (DenseMatrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..100 {
            let c = (i % 2) as f64 * 10.0;
            rows.push([c + 0.1 * rng.normal(), c + 0.1 * rng.normal()]);
            truth.push(i % 2);
        }
        (DenseMatrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let x = DenseMatrix::from_rows(&[[0.0, 1.0], [3.0, 2.0], [-1.0, 5.0]]).unwrap();
        let m = kmeans_fit(&x, 3, &mut Rng::new(0), 100, 3).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut labels = m.assignments.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn one_dimensional_brute_force_case() {
        // best 2-partition of {0,1,10,11} is {0,1}|{10,11}: inertia 4 * 0.25
        let x = DenseMatrix::from_rows(&[[0.0], [1.0], [10.0], [11.0]]).unwrap();
        let m = kmeans_fit(&x, 2, &mut Rng::new(1), 100, 10).unwrap();
        let mut cs = [m.centroids.get(0, 0), m.centroids.get(1, 0)];
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, [0.5, 10.5]);
        assert_eq!(m.inertia, 1.0);
    }

    #[test]
    fn separated_blobs_match_membership() {
        let mut rng = Rng::new(2);
        let (x, truth) = blobs(&mut rng);
        let m = kmeans_fit(&x, 2, &mut rng, 100, 10).unwrap();
        let swap = m.assignments[0] != truth[0];
        for (a, t) in m.assignments.iter().zip(&truth) {
            assert_eq!(if swap { 1 - a } else { *a }, *t);
        }
    }

    #[test]
    fn invalid_k() {
        let x = DenseMatrix::zeros(3, 1);
        assert!(matches!(kmeans_fit(&x, 0, &mut Rng::new(0), 10, 1), Err(Error::InvalidK { .. })));
        assert!(matches!(kmeans_fit(&x, 4, &mut Rng::new(0), 10, 1), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn assign_ties_and_exact_hits() {
        let model = KMeansModel {
            centroids: DenseMatrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap(),
            assignments: vec![],
            inertia: 0.0,
            inertia_history: vec![],
            converged: true,
        };
        let x = DenseMatrix::from_rows(&[[2.0, 0.0], [1.0, 0.0], [0.0, 0.0], [1.0, 5.0]]).unwrap();
        assert_eq!(kmeans_assign(&model, &x).unwrap(), vec![1, 0, 0, 0]);
        assert!(kmeans_assign(&model, &DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn assign_matches_distance_matrix_oracle() {
        let mut rng = Rng::new(3);
        let c = DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let x = DenseMatrix::from_vec(50, 3, (0..150).map(|_| rng.normal()).collect()).unwrap();
        let model = KMeansModel {
            centroids: c.clone(),
            assignments: vec![],
            inertia: 0.0,
            inertia_history: vec![],
            converged: true,
        };
        let labels = kmeans_assign(&model, &x).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            let dists: Vec<f64> = (0..4)
                .map(|j| (0..3).map(|d| (x.get(i, d) - c.get(j, d)).powi(2)).sum())
                .collect();
            let argmin = (0..4).fold(0, |b, j| if dists[j] < dists[b] { j } else { b });
            assert_eq!(l, argmin);
        }
    }

    #[test]
    fn inertia_is_monotone_and_consistent() {
        let mut rng = Rng::new(4);
        let x = DenseMatrix::from_vec(200, 3, (0..600).map(|_| rng.normal()).collect()).unwrap();
        let m = kmeans_fit(&x, 5, &mut rng, 300, 4).unwrap();
        for w in m.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", w);
        }
        let recomputed: f64 = x
            .row_iter()
            .zip(&m.assignments)
            .map(|(p, &j)| squared_distance(p, m.centroids.row(j)))
            .sum();
        assert!((recomputed - m.inertia).abs() <= 1e-9 * m.inertia.max(1.0));
        assert!(m.inertia <= m.inertia_history[0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = Rng::new(5);
        let x = DenseMatrix::from_vec(60, 2, (0..120).map(|_| rng.normal()).collect()).unwrap();
        let a = kmeans_fit(&x, 3, &mut Rng::new(77), 100, 5).unwrap();
        let b = kmeans_fit(&x, 3, &mut Rng::new(77), 100, 5).unwrap();
        assert_eq!(a, b);
    }
}
