//! Soft assignments, self-training targets and the clustering objectives
//! with their gradients.
//!
//! `q_ij` uses a Student's t kernel with one degree of freedom,
//! `(1 + ||z_i - mu_j||^2)^-1`, normalized per row. The target sharpens
//! `Q` and divides by soft cluster frequencies `f_j = sum_i q_ij`:
//! `p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j')`.

use alloc::vec;
use alloc::vec::Vec;

use crate::autoenc::recon_loss;
use crate::numkit::matrix::squared_distance;
use crate::numkit::DenseMatrix;
use crate::{Error, Result};

/// Trainable cluster centres in embedding space, `K x m`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Centroids(pub DenseMatrix);

impl Centroids {
    pub fn k(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

/// Row-stochastic `N x K` matrix `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment(pub DenseMatrix);

/// Row-stochastic `N x K` matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDist(pub DenseMatrix);

impl SoftAssignment {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    /// Argmax cluster per row, ties to the lowest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        argmax_rows(&self.0)
    }
}

impl TargetDist {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self(self.0.select_rows(rows))
    }
}

pub(crate) fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    m.row_iter()
        .map(|r| (0..r.len()).fold(0, |b, j| if r[j] > r[b] { j } else { b }))
        .collect()
}

fn check_dims(z: &DenseMatrix, mu: &Centroids, context: &'static str) -> Result<()> {
    if z.cols() != mu.dim() {
        return Err(Error::DimensionMismatch {
            context,
            expected: mu.dim(),
            found: z.cols(),
        });
    }
    if mu.k() == 0 {
        return Err(Error::InvalidK { k: 0, n: z.rows() });
    }
    Ok(())
}

/// Squared distances `N x K` between embeddings and centroids.
pub fn squared_distances(z: &DenseMatrix, mu: &Centroids) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(z.rows(), mu.k());
    for (i, zi) in z.row_iter().enumerate() {
        for (j, mj) in mu.0.row_iter().enumerate() {
            d.set(i, j, squared_distance(zi, mj));
        }
    }
    d
}

pub fn soft_assign(z: &DenseMatrix, mu: &Centroids) -> Result<SoftAssignment> {
    check_dims(z, mu, "soft_assign")?;
    let mut q = squared_distances(z, mu);
    for i in 0..q.rows() {
        let row = q.row_mut(i);
        for v in row.iter_mut() {
            *v = 1.0 / (1.0 + *v);
        }
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Ok(SoftAssignment(q))
}

pub fn target_distribution(q: &SoftAssignment) -> TargetDist {
    let freq = q.0.column_sums();
    let mut p = q.0.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        for (v, f) in row.iter_mut().zip(&freq) {
            *v = *v * *v / f;
        }
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    TargetDist(p)
}

/// `sum_ij p_ij ln(p_ij / q_ij)`; zero-probability target entries add 0.
/// Rounding can leave the sum a few ulps below zero when P = Q, so the
/// result is clamped at 0.
pub fn kl_loss(p: &TargetDist, q: &SoftAssignment) -> Result<f64> {
    if p.0.shape() != q.0.shape() {
        return Err(Error::ShapeMismatch {
            context: "kl_loss",
            expected: q.0.shape(),
            found: p.0.shape(),
        });
    }
    Ok(p.0
        .as_slice()
        .iter()
        .zip(q.0.as_slice())
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, qv)| pv * libm::log(pv / qv))
        .sum::<f64>()
        .max(0.0))
}

/// Reconstruction loss plus `gamma` times the KL clustering loss.
pub fn joint_loss(
    x: &DenseMatrix,
    x_hat: &DenseMatrix,
    p: &TargetDist,
    q: &SoftAssignment,
    gamma: f64,
) -> Result<f64> {
    Ok(recon_loss(x, x_hat)? + gamma * kl_loss(p, q)?)
}

/// Gradients of `scale * kl_loss(P, Q(Z, mu))` with `P` held fixed.
/// Returns `(dZ, dMu)`.
pub fn kl_grad(z: &DenseMatrix, mu: &Centroids, p: &TargetDist, scale: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    check_dims(z, mu, "kl_grad")?;
    if p.0.shape() != (z.rows(), mu.k()) {
        return Err(Error::ShapeMismatch {
            context: "kl_grad",
            expected: (z.rows(), mu.k()),
            found: p.0.shape(),
        });
    }
    let q = soft_assign(z, mu)?;
    let d = squared_distances(z, mu);
    let (n, m) = z.shape();
    let mut dz = DenseMatrix::zeros(n, m);
    let mut dmu = DenseMatrix::zeros(mu.k(), m);
    for i in 0..n {
        for j in 0..mu.k() {
            // dL/dd_ij = (p_ij - q_ij) / (1 + d_ij), dd_ij/dz_i = 2 (z_i - mu_j)
            let c = 2.0 * scale * (p.0.get(i, j) - q.0.get(i, j)) / (1.0 + d.get(i, j));
            if c == 0.0 {
                continue;
            }
            for t in 0..m {
                let diff = z.get(i, t) - mu.0.get(j, t);
                dz.row_mut(i)[t] += c * diff;
                dmu.row_mut(j)[t] -= c * diff;
            }
        }
    }
    Ok((dz, dmu))
}

/// Softmin weights `s_ik = exp(-lambda d_ik) / sum_k' exp(-lambda d_ik')`
/// over squared distances, computed with a max shift.
pub fn softmin_weights(d: &DenseMatrix, inv_temperature: f64) -> DenseMatrix {
    let mut s = d.clone();
    for i in 0..s.rows() {
        let row = s.row_mut(i);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        for v in row.iter_mut() {
            *v = libm::exp(-inv_temperature * (*v - min));
        }
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    s
}

/// Deep k-means clustering term `sum_i sum_k s_ik ||z_i - mu_k||^2`.
pub fn dkm_cluster_loss(z: &DenseMatrix, mu: &Centroids, inv_temperature: f64) -> Result<f64> {
    check_dims(z, mu, "dkm_cluster_loss")?;
    let d = squared_distances(z, mu);
    let s = softmin_weights(&d, inv_temperature);
    Ok(d.as_slice().iter().zip(s.as_slice()).map(|(a, b)| a * b).sum())
}

/// Gradients of `scale * dkm_cluster_loss`, differentiating through the
/// softmin weights. Returns `(dZ, dMu)`.
pub fn dkm_grad(
    z: &DenseMatrix,
    mu: &Centroids,
    inv_temperature: f64,
    scale: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_dims(z, mu, "dkm_grad")?;
    let d = squared_distances(z, mu);
    let s = softmin_weights(&d, inv_temperature);
    let (n, m) = z.shape();
    let k = mu.k();
    let mut dz = DenseMatrix::zeros(n, m);
    let mut dmu = DenseMatrix::zeros(k, m);
    let mut coef = vec![0.0; k];
    for i in 0..n {
        let li: f64 = (0..k).map(|j| s.get(i, j) * d.get(i, j)).sum();
        // dL_i/dd_ik = s_ik (1 - lambda (d_ik - L_i))
        for (j, c) in coef.iter_mut().enumerate() {
            *c = 2.0 * scale * s.get(i, j) * (1.0 - inv_temperature * (d.get(i, j) - li));
        }
        for (j, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for t in 0..m {
                let diff = z.get(i, t) - mu.0.get(j, t);
                dz.row_mut(i)[t] += c * diff;
                dmu.row_mut(j)[t] -= c * diff;
            }
        }
    }
    Ok((dz, dmu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_grad, max_relative_error, Rng};

    fn randm(r: usize, c: usize, rng: &mut Rng) -> DenseMatrix {
        DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    fn q_of(rows: &[[f64; 2]]) -> SoftAssignment {
        SoftAssignment(DenseMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn soft_assign_examples() {
        let mu = Centroids(DenseMatrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap());
        let z = DenseMatrix::from_rows(&[[1.0, 3.0]]).unwrap();
        let q = soft_assign(&z, &mu).unwrap();
        assert_eq!(q.0.row(0), &[0.5, 0.5]);
        let mu = Centroids(DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap());
        let z = DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let q = soft_assign(&z, &mu).unwrap();
        assert!((q.0.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.0.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        let one = Centroids(DenseMatrix::from_rows(&[[5.0, -1.0]]).unwrap());
        let q = soft_assign(&randm(4, 2, &mut Rng::new(1)), &one).unwrap();
        assert!(q.0.as_slice().iter().all(|&v| v == 1.0));
        assert!(soft_assign(&DenseMatrix::zeros(1, 3), &one).is_err());
    }

    #[test]
    fn target_examples() {
        let uniform = q_of(&[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(target_distribution(&uniform).0, uniform.0);
        let single = q_of(&[[0.3, 0.7]]);
        let p = target_distribution(&single);
        for (a, b) in p.0.as_slice().iter().zip(single.0.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        // f = (1.4, 0.6); row 0: (0.64/1.4, 0.04/0.6) normalized, row 1: (0.36/1.4, 0.16/0.6)
        let p = target_distribution(&q_of(&[[0.8, 0.2], [0.6, 0.4]]));
        let r0 = [0.64 / 1.4, 0.04 / 0.6];
        let r1 = [0.36 / 1.4, 0.16 / 0.6];
        let (s0, s1) = (r0[0] + r0[1], r1[0] + r1[1]);
        assert!((p.0.get(0, 0) - r0[0] / s0).abs() < 1e-15);
        assert!((p.0.get(1, 1) - r1[1] / s1).abs() < 1e-15);
        assert!((p.0.get(0, 0) - 0.8727).abs() < 1e-4);
        assert!((p.0.get(0, 1) - 0.1273).abs() < 1e-4);
        assert!((p.0.get(1, 0) - 0.4909).abs() < 1e-4);
        assert!((p.0.get(1, 1) - 0.5091).abs() < 1e-4);
    }

    #[test]
    fn kl_examples() {
        let q = q_of(&[[0.9, 0.1]]);
        assert_eq!(kl_loss(&TargetDist(q.0.clone()), &q).unwrap(), 0.0);
        let p = TargetDist(DenseMatrix::from_rows(&[[0.5, 0.5]]).unwrap());
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let got = kl_loss(&p, &q).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.5108).abs() < 1e-4);
        let zero = TargetDist(DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap());
        assert!((kl_loss(&zero, &q).unwrap() - (1.0f64 / 0.9).ln()).abs() < 1e-15);
    }

    #[test]
    fn joint_examples() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let xh = DenseMatrix::zeros(1, 2);
        let q = q_of(&[[0.9, 0.1]]);
        let p = TargetDist(DenseMatrix::from_rows(&[[0.5, 0.5]]).unwrap());
        assert_eq!(joint_loss(&x, &xh, &p, &q, 0.0).unwrap(), 5.0);
        assert_eq!(joint_loss(&x, &x, &TargetDist(q.0.clone()), &q, 3.0).unwrap(), 0.0);
        let j = joint_loss(&x, &xh, &p, &q, 0.1).unwrap();
        assert!((j - 5.05108).abs() < 1e-5, "{j}");
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let z = randm(6, 3, &mut rng);
        let mu = Centroids(randm(4, 3, &mut rng));
        let p = target_distribution(&soft_assign(&randm(6, 3, &mut rng), &mu).unwrap());
        let (dz, dmu) = kl_grad(&z, &mu, &p, 1.0).unwrap();
        let nz = finite_diff_grad(
            |v| kl_loss(&p, &soft_assign(&DenseMatrix::from_vec(6, 3, v.to_vec()).unwrap(), &mu).unwrap()).unwrap(),
            z.as_slice(),
            1e-5,
        );
        assert!(max_relative_error(dz.as_slice(), &nz) < 1e-4);
        let nmu = finite_diff_grad(
            |v| {
                let m = Centroids(DenseMatrix::from_vec(4, 3, v.to_vec()).unwrap());
                kl_loss(&p, &soft_assign(&z, &m).unwrap()).unwrap()
            },
            mu.0.as_slice(),
            1e-5,
        );
        assert!(max_relative_error(dmu.as_slice(), &nmu) < 1e-4);
    }

    #[test]
    fn dkm_gradient_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let z = randm(5, 2, &mut rng);
        let mu = Centroids(randm(3, 2, &mut rng));
        for lambda in [0.5, 2.0, 10.0] {
            let (dz, dmu) = dkm_grad(&z, &mu, lambda, 1.0).unwrap();
            let mut flat = z.as_slice().to_vec();
            flat.extend_from_slice(mu.0.as_slice());
            let numeric = finite_diff_grad(
                |v| {
                    let zz = DenseMatrix::from_vec(5, 2, v[..10].to_vec()).unwrap();
                    let mm = Centroids(DenseMatrix::from_vec(3, 2, v[10..].to_vec()).unwrap());
                    dkm_cluster_loss(&zz, &mm, lambda).unwrap()
                },
                &flat,
                1e-5,
            );
            let mut analytic = dz.as_slice().to_vec();
            analytic.extend_from_slice(dmu.as_slice());
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "lambda {lambda}: {err}");
        }
    }

    #[test]
    fn dkm_large_lambda_approaches_inertia() {
        let mut rng = Rng::new(5);
        let z = randm(10, 2, &mut rng);
        let mu = Centroids(randm(3, 2, &mut rng));
        let d = squared_distances(&z, &mu);
        let hard: f64 = d.row_iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum();
        let soft = dkm_cluster_loss(&z, &mu, 1e3).unwrap();
        assert!((soft - hard).abs() <= 1e-3 * hard, "{soft} vs {hard}");
    }

    #[test]
    fn dkm_point_at_representative_vanishes() {
        let mu = Centroids(DenseMatrix::from_rows(&[[0.0, 0.0], [10.0, 10.0]]).unwrap());
        let z = DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [0.001, 0.01, 0.1, 1.0] {
            let v = dkm_cluster_loss(&z, &mu, lambda).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-80);
    }
}
