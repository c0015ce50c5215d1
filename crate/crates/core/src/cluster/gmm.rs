//! Diagonal-covariance Gaussian mixtures fitted by EM.

use alloc::vec;
use alloc::vec::Vec;

use super::kmeans::kmeans_fit;
use crate::numkit::rng::{derive_seed, Rng};
use crate::numkit::DenseMatrix;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub n_restarts: usize,
    pub var_floor: f64,
    /// Lloyd iterations for the k-means initialization of each restart.
    pub init_max_iter: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            n_restarts: 10,
            var_floor: 1e-6,
            init_max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// `K x m`.
    pub means: DenseMatrix,
    /// `K x m` diagonal variances.
    pub variances: DenseMatrix,
    /// `N x K` posteriors of the training rows under the final parameters.
    pub responsibilities: DenseMatrix,
    pub log_likelihood: f64,
    /// Log-likelihood after every E-step of the winning restart.
    pub ll_history: Vec<f64>,
    pub converged: bool,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// `N x K` matrix of `log w_k + log N(x_i | mu_k, diag(var_k))`.
    pub fn log_joint(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.means.cols() {
            return Err(Error::DimensionMismatch {
                context: "gmm log_joint",
                expected: self.means.cols(),
                found: x.cols(),
            });
        }
        Ok(log_joint(x, &self.weights, &self.means, &self.variances))
    }
}

fn log_joint(x: &DenseMatrix, weights: &[f64], means: &DenseMatrix, vars: &DenseMatrix) -> DenseMatrix {
    let k = weights.len();
    let consts: Vec<f64> = (0..k)
        .map(|j| {
            let log_det: f64 = vars.row(j).iter().map(|v| libm::log(*v)).sum();
            let lw = if weights[j] > 0.0 {
                libm::log(weights[j])
            } else {
                f64::NEG_INFINITY
            };
            lw - 0.5 * (x.cols() as f64 * LN_2PI + log_det)
        })
        .collect();
    let mut out = DenseMatrix::zeros(x.rows(), k);
    for (i, p) in x.row_iter().enumerate() {
        for j in 0..k {
            let maha: f64 = p
                .iter()
                .zip(means.row(j))
                .zip(vars.row(j))
                .map(|((xv, mv), vv)| (xv - mv) * (xv - mv) / vv)
                .sum();
            out.set(i, j, consts[j] - 0.5 * maha);
        }
    }
    out
}

/// Normalizes each row of log-joints in place into responsibilities and
/// returns the total log-likelihood.
fn normalize_rows(lj: &mut DenseMatrix) -> f64 {
    let mut ll = 0.0;
    for i in 0..lj.rows() {
        let row = lj.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
        let lse = max + libm::log(s);
        ll += lse;
        for v in row.iter_mut() {
            *v = libm::exp(*v - lse);
        }
    }
    ll
}

fn check_inputs(x: &DenseMatrix, k: usize) -> Result<()> {
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidK { k, n: x.rows() });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "gmm_fit" });
    }
    let n = x.rows() as f64;
    let means: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
    for c in 0..x.cols() {
        let var = x.row_iter().map(|r| (r[c] - means[c]) * (r[c] - means[c])).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::DegenerateData { column: c });
        }
    }
    Ok(())
}

struct Params {
    weights: Vec<f64>,
    means: DenseMatrix,
    vars: DenseMatrix,
}

fn init_from_kmeans(x: &DenseMatrix, k: usize, rng: &mut Rng, cfg: &GmmConfig) -> Result<Params> {
    let km = kmeans_fit(x, k, rng, cfg.init_max_iter, 1)?;
    let (n, m) = x.shape();
    let mut counts = vec![0usize; k];
    let mut vars = DenseMatrix::zeros(k, m);
    for (p, &j) in x.row_iter().zip(&km.assignments) {
        counts[j] += 1;
        for ((v, xv), cv) in vars.row_mut(j).iter_mut().zip(p).zip(km.centroids.row(j)) {
            *v += (xv - cv) * (xv - cv);
        }
    }
    let total: usize = counts.iter().map(|&c| c.max(1)).sum();
    let weights = counts.iter().map(|&c| c.max(1) as f64 / total as f64).collect();
    for j in 0..k {
        let c = counts[j].max(1) as f64;
        for v in vars.row_mut(j) {
            *v = (*v / c).max(cfg.var_floor);
        }
    }
    debug_assert_eq!(km.assignments.len(), n);
    Ok(Params {
        weights,
        means: km.centroids,
        vars,
    })
}

fn m_step(x: &DenseMatrix, resp: &DenseMatrix, params: &mut Params, var_floor: f64) {
    let (n, m) = x.shape();
    let k = resp.cols();
    let nk = resp.column_sums();
    for j in 0..k {
        params.weights[j] = nk[j] / n as f64;
        // a component with no mass keeps its parameters; its weight is zero
        if !(nk[j] > 1e-300) {
            continue;
        }
        let mut mean = vec![0.0; m];
        for (p, r) in x.row_iter().zip(resp.row_iter()) {
            for (mv, xv) in mean.iter_mut().zip(p) {
                *mv += r[j] * xv;
            }
        }
        for mv in &mut mean {
            *mv /= nk[j];
        }
        let mut var = vec![0.0; m];
        for (p, r) in x.row_iter().zip(resp.row_iter()) {
            for ((vv, xv), mv) in var.iter_mut().zip(p).zip(&mean) {
                *vv += r[j] * (xv - mv) * (xv - mv);
            }
        }
        params.means.row_mut(j).copy_from_slice(&mean);
        for (dst, v) in params.vars.row_mut(j).iter_mut().zip(var) {
            *dst = (v / nk[j]).max(var_floor);
        }
    }
}

fn fit_single(x: &DenseMatrix, k: usize, rng: &mut Rng, cfg: &GmmConfig) -> Result<GmmModel> {
    let mut params = init_from_kmeans(x, k, rng, cfg)?;
    let mut resp = log_joint(x, &params.weights, &params.means, &params.vars);
    let mut ll = normalize_rows(&mut resp);
    let mut history = vec![ll];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        m_step(x, &resp, &mut params, cfg.var_floor);
        let mut next = log_joint(x, &params.weights, &params.means, &params.vars);
        let next_ll = normalize_rows(&mut next);
        history.push(next_ll);
        let gain = next_ll - ll;
        resp = next;
        ll = next_ll;
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }
    if !ll.is_finite() {
        return Err(Error::NonFinite { context: "gmm_fit" });
    }
    Ok(GmmModel {
        weights: params.weights,
        means: params.means,
        variances: params.vars,
        responsibilities: resp,
        log_likelihood: ll,
        ll_history: history,
        converged,
    })
}

/// EM for a diagonal Gaussian mixture, best log-likelihood over
/// `n_restarts` k-means-initialized runs (ties to the lower restart index).
pub fn gmm_fit(
    x: &DenseMatrix,
    k: usize,
    rng: &mut Rng,
    max_iter: usize,
    tol: f64,
    n_restarts: usize,
) -> Result<GmmModel> {
    let cfg = GmmConfig {
        max_iter,
        tol,
        n_restarts,
        ..GmmConfig::default()
    };
    gmm_fit_with(x, k, rng, &cfg)
}

pub fn gmm_fit_with(x: &DenseMatrix, k: usize, rng: &mut Rng, cfg: &GmmConfig) -> Result<GmmModel> {
    check_inputs(x, k)?;
    let base = rng.next_u64();
    let mut best: Option<GmmModel> = None;
    for r in 0..cfg.n_restarts.max(1) {
        let mut sub = Rng::new(derive_seed(base, r as u64));
        let model = fit_single(x, k, &mut sub, cfg)?;
        if best.as_ref().map_or(true, |b| model.log_likelihood > b.log_likelihood) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Maximum-posterior component per row; ties go to the lowest index.
pub fn gmm_predict(model: &GmmModel, x: &DenseMatrix) -> Result<Vec<usize>> {
    let lj = model.log_joint(x)?;
    Ok(lj
        .row_iter()
        .map(|r| (0..r.len()).fold(0, |b, j| if r[j] > r[b] { j } else { b }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_is_closed_form_mle() {
        let mut rng = Rng::new(1);
        let x = DenseMatrix::from_vec(300, 2, (0..600).map(|i| rng.normal() * (1.0 + (i % 2) as f64) + 3.0).collect()).unwrap();
        let m = gmm_fit(&x, 1, &mut rng, 100, 1e-9, 2).unwrap();
        let n = x.rows() as f64;
        for c in 0..2 {
            let mean = x.row_iter().map(|r| r[c]).sum::<f64>() / n;
            let var = x.row_iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            assert!((m.means.get(0, c) - mean).abs() < 1e-6);
            assert!((m.variances.get(0, c) - var).abs() < 1e-6);
        }
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_match_membership() {
        let mut rng = Rng::new(2);
        let mut rows = Vec::new();
        for i in 0..100 {
            let c = (i % 2) as f64 * 10.0;
            rows.push([c + 0.1 * rng.normal(), c + 0.1 * rng.normal()]);
        }
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = gmm_fit(&x, 2, &mut rng, 100, 1e-6, 3).unwrap();
        let hard: Vec<usize> = m
            .responsibilities
            .row_iter()
            .map(|r| if r[1] > r[0] { 1 } else { 0 })
            .collect();
        let swap = hard[0] != 0;
        for (i, &h) in hard.iter().enumerate() {
            assert_eq!(if swap { 1 - h } else { h }, i % 2);
        }
    }

    #[test]
    fn log_likelihood_is_monotone_and_invariants_hold() {
        let mut rng = Rng::new(3);
        let x = DenseMatrix::from_vec(150, 3, (0..450).map(|_| rng.normal()).collect()).unwrap();
        let m = gmm_fit(&x, 4, &mut rng, 500, 0.0, 3).unwrap();
        for w in m.ll_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", w);
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.weights.iter().all(|&w| w >= 0.0));
        for r in m.responsibilities.row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(m.variances.as_slice().iter().all(|&v| v >= 1e-6));
    }

    #[test]
    fn zero_variance_column_is_rejected() {
        let x = DenseMatrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        assert!(matches!(
            gmm_fit(&x, 1, &mut Rng::new(0), 10, 1e-6, 1),
            Err(Error::DegenerateData { column: 1 })
        ));
        assert!(matches!(gmm_fit(&x, 4, &mut Rng::new(0), 10, 1e-6, 1), Err(Error::InvalidK { .. })));
    }

    fn two_component_model() -> GmmModel {
        GmmModel {
            weights: vec![0.5, 0.5],
            means: DenseMatrix::from_rows(&[[-1.0, 0.0], [1.0, 0.0]]).unwrap(),
            variances: DenseMatrix::filled(2, 2, 1.0),
            responsibilities: DenseMatrix::zeros(0, 2),
            log_likelihood: 0.0,
            ll_history: vec![],
            converged: true,
        }
    }

    #[test]
    fn predict_at_means_and_ties() {
        let m = two_component_model();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(gmm_predict(&m, &x).unwrap(), vec![1, 0, 0]);
        assert!(gmm_predict(&m, &DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn predict_matches_posterior_oracle() {
        let mut rng = Rng::new(5);
        let m = GmmModel {
            weights: vec![0.2, 0.5, 0.3],
            means: DenseMatrix::from_vec(3, 2, (0..6).map(|_| rng.normal()).collect()).unwrap(),
            variances: DenseMatrix::from_vec(3, 2, (0..6).map(|_| 0.5 + rng.uniform()).collect()).unwrap(),
            responsibilities: DenseMatrix::zeros(0, 3),
            log_likelihood: 0.0,
            ll_history: vec![],
            converged: true,
        };
        let x = DenseMatrix::from_vec(40, 2, (0..80).map(|_| 2.0 * rng.normal()).collect()).unwrap();
        let labels = gmm_predict(&m, &x).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            // direct density product, no logs
            let post: Vec<f64> = (0..3)
                .map(|j| {
                    let mut dens = m.weights[j];
                    for d in 0..2 {
                        let v = m.variances.get(j, d);
                        let z = x.get(i, d) - m.means.get(j, d);
                        dens *= (-(z * z) / (2.0 * v)).exp() / (2.0 * core::f64::consts::PI * v).sqrt();
                    }
                    dens
                })
                .collect();
            let argmax = (0..3).fold(0, |b, j| if post[j] > post[b] { j } else { b });
            assert_eq!(l, argmax);
        }
    }
}
