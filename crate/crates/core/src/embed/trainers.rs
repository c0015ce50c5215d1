//! DEC, IDEC, DKM and DEPICT-1D.
//!
//! Every trainer pretrains the autoencoder on reconstruction, seeds the
//! centroids with k-means on the embedding and then fine-tunes with Adam.
//! Minibatch gradients are batch means of the per-row objective, so one
//! epoch's steps descend the full-data objective divided by `N`. The
//! recorded history is the full-data objective in summed form after each
//! fine-tuning epoch.

use alloc::vec::Vec;
use core::fmt;

use super::objective::{
    dkm_cluster_loss, dkm_grad, kl_grad, kl_loss, soft_assign, target_distribution, Centroids, SoftAssignment,
    TargetDist,
};
use crate::autoenc::{
    pretrain_from, recon_loss, recon_mean_grad, Autoencoder, AutoencoderKind, AutoencoderSpec, ParamScope,
    PretrainConfig,
};
use crate::cluster::kmeans_fit;
use crate::numkit::{adam_step, AdamConfig, DenseMatrix, OptimizerState, Rng};
use crate::train::{guarded_epochs, minibatches};
use crate::{Error, Result};

/// Lloyd iteration cap for the centroid seeding run.
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    Dec,
    Idec,
    Dkm,
    Depict1d,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dec, Method::Idec, Method::Dkm, Method::Depict1d];

    pub fn id(self) -> &'static str {
        match self {
            Method::Dec => "dec",
            Method::Idec => "idec",
            Method::Dkm => "dkm",
            Method::Depict1d => "depict1d",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }

    fn uses_kl(self) -> bool {
        !matches!(self, Method::Dkm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MethodConfig {
    pub method: Method,
    pub gamma: f64,
    /// Fine-tuning epochs.
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub p_update_interval: usize,
    pub dkm_inv_temperature: f64,
    /// Doubles the DKM inverse temperature every 100 epochs.
    pub dkm_anneal: bool,
    pub pretrain_epochs: usize,
    /// k-means restarts for centroid seeding.
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Idec,
            gamma: 0.1,
            epochs: 1000,
            lr: 1e-3,
            batch_size: 256,
            p_update_interval: 5,
            dkm_inv_temperature: 10.0,
            dkm_anneal: false,
            pretrain_epochs: 200,
            n_restarts: 10,
            seed: 0,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(alloc::format!("method config: {what}")));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.p_update_interval == 0 || self.pretrain_epochs == 0 {
            return bad("batch_size, p_update_interval and pretrain_epochs must be positive");
        }
        if !(self.dkm_inv_temperature > 0.0 && self.dkm_inv_temperature.is_finite()) {
            return bad("dkm_inv_temperature must be positive");
        }
        Ok(())
    }

    fn inv_temperature(&self, epoch: usize) -> f64 {
        if self.dkm_anneal {
            self.dkm_inv_temperature * libm::exp2((epoch / 100) as f64)
        } else {
            self.dkm_inv_temperature
        }
    }
}

/// Full-data losses after one fine-tuning epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon_loss: f64,
    pub cluster_loss: f64,
    /// The optimized objective: `cluster_loss` for DEC, otherwise
    /// `recon_loss + gamma * cluster_loss`.
    pub total_loss: f64,
}

impl EpochRecord {
    fn is_finite(&self) -> bool {
        self.recon_loss.is_finite() && self.cluster_loss.is_finite() && self.total_loss.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedEmbeddingModel {
    pub autoencoder: Autoencoder,
    pub centroids: Centroids,
    pub method: Method,
    pub history: Vec<EpochRecord>,
    pub pretrain_history: Vec<f64>,
}

impl TrainedEmbeddingModel {
    pub fn embed(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.autoencoder.encode(x)
    }

    pub fn soft_assign(&self, x: &DenseMatrix) -> Result<SoftAssignment> {
        soft_assign(&self.embed(x)?, &self.centroids)
    }

    /// Argmax of `Q` per row.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(self.soft_assign(x)?.hard_labels())
    }
}

pub fn train_dec(
    spec: &AutoencoderSpec,
    x: &DenseMatrix,
    k: usize,
    config: &MethodConfig,
    rng: &mut Rng,
) -> Result<TrainedEmbeddingModel> {
    train_method(Method::Dec, spec, x, k, config, rng)
}

pub fn train_idec(
    spec: &AutoencoderSpec,
    x: &DenseMatrix,
    k: usize,
    config: &MethodConfig,
    rng: &mut Rng,
) -> Result<TrainedEmbeddingModel> {
    train_method(Method::Idec, spec, x, k, config, rng)
}

/// Needs `spec.embedding_dim == k`.
pub fn train_dkm(
    spec: &AutoencoderSpec,
    x: &DenseMatrix,
    k: usize,
    config: &MethodConfig,
    rng: &mut Rng,
) -> Result<TrainedEmbeddingModel> {
    train_method(Method::Dkm, spec, x, k, config, rng)
}

/// Needs a conv-front spec; a conv plan too deep for the input width
/// fails with [`Error::DegenerateGeometry`].
pub fn train_depict1d(
    spec: &AutoencoderSpec,
    x: &DenseMatrix,
    k: usize,
    config: &MethodConfig,
    rng: &mut Rng,
) -> Result<TrainedEmbeddingModel> {
    train_method(Method::Depict1d, spec, x, k, config, rng)
}

/// Initializes the autoencoder for `spec` from `rng` and trains `method`.
/// `config.method` is ignored in favour of `method`.
pub fn train_method(
    method: Method,
    spec: &AutoencoderSpec,
    x: &DenseMatrix,
    k: usize,
    config: &MethodConfig,
    rng: &mut Rng,
) -> Result<TrainedEmbeddingModel> {
    check_method_spec(method, spec, k)?;
    let ae = Autoencoder::init(spec, rng)?;
    train_from(method, ae, x, k, config, rng)
}

fn check_method_spec(method: Method, spec: &AutoencoderSpec, k: usize) -> Result<()> {
    match method {
        Method::Dkm if spec.embedding_dim != k => Err(Error::DimensionMismatch {
            context: "DKM embedding dimension must equal K",
            expected: k,
            found: spec.embedding_dim,
        }),
        Method::Depict1d if spec.kind != AutoencoderKind::Conv1dFront => Err(Error::InvalidArgument(
            "DEPICT-1D needs a conv1d-front autoencoder spec".into(),
        )),
        _ => Ok(()),
    }
}

#[derive(Clone)]
struct FineTuneState {
    ae: Autoencoder,
    mu: Centroids,
    opt: OptimizerState,
    rng: Rng,
    p: Option<TargetDist>,
}

/// Pretrains and fine-tunes an already initialized autoencoder.
pub fn train_from(
    method: Method,
    ae: Autoencoder,
    x: &DenseMatrix,
    k: usize,
    config: &MethodConfig,
    rng: &mut Rng,
) -> Result<TrainedEmbeddingModel> {
    config.validate()?;
    check_method_spec(method, &ae.spec, k)?;
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidK { k, n: x.rows() });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "training input" });
    }
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let pre = PretrainConfig {
        epochs: config.pretrain_epochs,
        batch_size: config.batch_size,
        adam,
    };
    let (ae, pretrain_history) = pretrain_from(ae, x, &pre, rng)?;
    let km = kmeans_fit(&ae.encode(x)?, k, rng, KMEANS_MAX_ITER, config.n_restarts)?;

    let scope = if method == Method::Dec {
        ParamScope::EncoderOnly
    } else {
        ParamScope::Full
    };
    let gamma = config.gamma;
    let mut state = FineTuneState {
        ae,
        mu: Centroids(km.centroids),
        opt: OptimizerState::new(),
        rng: rng.clone(),
        p: None,
    };
    let history = guarded_epochs(
        &mut state,
        config.epochs,
        config.lr,
        |st, epoch, lr| {
            let step_cfg = AdamConfig { lr, ..adam };
            let lambda = config.inv_temperature(epoch);
            if method.uses_kl() && (st.p.is_none() || epoch % config.p_update_interval == 0) {
                st.p = Some(target_distribution(&soft_assign(&st.ae.encode(x)?, &st.mu)?));
            }
            for batch in minibatches(x.rows(), config.batch_size, &mut st.rng) {
                let xb = x.select_rows(&batch);
                let fwd = st.ae.forward(&xb, scope == ParamScope::Full)?;
                if !fwd.z.is_finite() || !fwd.x_hat.is_finite() {
                    return Ok(nan_record(epoch));
                }
                let inv_b = 1.0 / batch.len() as f64;
                let (dz, dmu) = match (method, &st.p) {
                    (Method::Dkm, _) => dkm_grad(&fwd.z, &st.mu, lambda, gamma * inv_b)?,
                    (Method::Dec, Some(p)) => kl_grad(&fwd.z, &st.mu, &p.select_rows(&batch), inv_b)?,
                    (_, Some(p)) => kl_grad(&fwd.z, &st.mu, &p.select_rows(&batch), gamma * inv_b)?,
                    (_, None) => unreachable!("target refreshed before the first batch"),
                };
                let d_xhat = (scope == ParamScope::Full).then(|| recon_mean_grad(&xb, &fwd.x_hat));
                let grads = st.ae.backward(&fwd, d_xhat.as_ref(), Some(&dz))?;
                let mut gblocks = grads.blocks(&st.ae, scope);
                gblocks.push(dmu.as_slice());
                let mut pblocks = st.ae.param_blocks_mut(scope);
                pblocks.push(st.mu.0.as_mut_slice());
                adam_step(&mut pblocks, &gblocks, &mut st.opt, &step_cfg)?;
            }
            if !st.ae.is_finite() || !st.mu.0.is_finite() {
                return Ok(nan_record(epoch));
            }
            let z = st.ae.encode(x)?;
            let recon = recon_loss(x, &st.ae.decode(&z)?)?;
            let cluster = match &st.p {
                Some(p) if method.uses_kl() => kl_loss(p, &soft_assign(&z, &st.mu)?)?,
                _ => dkm_cluster_loss(&z, &st.mu, lambda)?,
            };
            let total = if method == Method::Dec {
                cluster
            } else {
                recon + gamma * cluster
            };
            Ok(EpochRecord {
                epoch,
                recon_loss: recon,
                cluster_loss: cluster,
                total_loss: total,
            })
        },
        EpochRecord::is_finite,
    )?;
    *rng = state.rng;
    Ok(TrainedEmbeddingModel {
        autoencoder: state.ae,
        centroids: state.mu,
        method,
        history,
        pretrain_history,
    })
}

fn nan_record(epoch: usize) -> EpochRecord {
    EpochRecord {
        epoch,
        recon_loss: f64::NAN,
        cluster_loss: f64::NAN,
        total_loss: f64::NAN,
    }
}
