//! Five-fold weakly supervised protocol.
//!
//! A run unit is one (fold, grid candidate) pair of a (dataset, method)
//! cell. It fits on the four training folds, standardized with training
//! statistics, and scores both the training folds and the held-out fold.
//! The candidate with the best training-fold accuracy wins each fold.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::accuracy::cluster_accuracy;
use super::folds::{make_folds, make_stratified_folds, FoldPlan, N_FOLDS};
use super::mean_std;
use crate::autoenc::{AutoencoderSpec, ConvPlan, DEC_EMBEDDING_DIM, DEC_HIDDEN, DEPICT_HIDDEN};
use crate::cluster::{gmm_fit_with, gmm_predict, kmeans_assign, kmeans_fit, GmmConfig};
use crate::data::{Dataset, Standardizer};
use crate::embed::{train_method, EpochRecord, Method, MethodConfig, TrainedEmbeddingModel};
use crate::numkit::rng::{derive_seed, fnv1a};
use crate::numkit::{DenseMatrix, Rng};
use crate::{Error, Result};

const KMEANS_MAX_ITER: usize = 300;
const FOLD_TAG: u64 = 0x666f_6c64;

/// Methods the protocol can run, in their default registration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BenchMethod {
    Gmm,
    Kmeans,
    Dec,
    Idec,
    Dkm,
    Depict1d,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 6] = [
        BenchMethod::Gmm,
        BenchMethod::Kmeans,
        BenchMethod::Dec,
        BenchMethod::Idec,
        BenchMethod::Dkm,
        BenchMethod::Depict1d,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BenchMethod::Gmm => "gmm",
            BenchMethod::Kmeans => "kmeans",
            BenchMethod::Dec => "dec",
            BenchMethod::Idec => "idec",
            BenchMethod::Dkm => "dkm",
            BenchMethod::Depict1d => "depict1d",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }

    /// The embedding trainer behind a deep method.
    pub fn trainer(self) -> Option<Method> {
        match self {
            BenchMethod::Gmm | BenchMethod::Kmeans => None,
            BenchMethod::Dec => Some(Method::Dec),
            BenchMethod::Idec => Some(Method::Idec),
            BenchMethod::Dkm => Some(Method::Dkm),
            BenchMethod::Depict1d => Some(Method::Depict1d),
        }
    }

    pub fn is_deep(self) -> bool {
        self.trainer().is_some()
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Network shapes used by the deep methods.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ArchitectureConfig {
    /// Encoder widths for DEC, IDEC and DKM; the decoder mirrors them.
    pub hidden: Vec<usize>,
    /// Embedding width for DEC, IDEC and DEPICT-1D. DKM uses `K`.
    pub embedding_dim: usize,
    pub depict_hidden: Vec<usize>,
    pub conv_plan: ConvPlan,
    /// Zero-pads DEPICT-1D inputs to at least this many features.
    pub depict_pad_to: Option<usize>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden: DEC_HIDDEN.to_vec(),
            embedding_dim: DEC_EMBEDDING_DIM,
            depict_hidden: DEPICT_HIDDEN.to_vec(),
            conv_plan: ConvPlan::default(),
            depict_pad_to: None,
        }
    }
}

impl ArchitectureConfig {
    /// Autoencoder spec and input width for `method` on `d` features.
    /// DEPICT-1D falls back to its dense stack when the conv plan does not
    /// fit; the third element then describes the fallback.
    pub fn spec_for(&self, method: Method, d: usize, k: usize) -> (AutoencoderSpec, usize, Option<String>) {
        match method {
            Method::Dec | Method::Idec => (AutoencoderSpec::mlp(d, &self.hidden, self.embedding_dim), d, None),
            Method::Dkm => (AutoencoderSpec::mlp(d, &self.hidden, k), d, None),
            Method::Depict1d => {
                let padded = self.depict_pad_to.map_or(d, |p| p.max(d));
                match self.conv_plan.lengths(padded) {
                    Ok(_) => (
                        AutoencoderSpec::conv_front(padded, self.conv_plan.clone(), &self.depict_hidden, self.embedding_dim),
                        padded,
                        None,
                    ),
                    Err(e) => (
                        AutoencoderSpec::mlp(d, &self.depict_hidden, self.embedding_dim),
                        d,
                        Some(format!("dense DEPICT variant used: {e}")),
                    ),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ProtocolOptions {
    pub arch: ArchitectureConfig,
    pub stratified: bool,
    /// k-means restarts for the k-means baseline.
    pub kmeans_restarts: usize,
    pub gmm: GmmConfig,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            arch: ArchitectureConfig::default(),
            stratified: false,
            kmeans_restarts: 10,
            gmm: GmmConfig::default(),
        }
    }
}

/// Result of one (fold, candidate) run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitOutcome {
    pub fold: usize,
    pub candidate: usize,
    /// `None` for the classical baselines.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub fallback: Option<String>,
    pub history: Vec<EpochRecord>,
}

/// Candidate chosen for one fold.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChosenCandidate {
    pub candidate: usize,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalResult {
    pub method: String,
    pub dataset: String,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population std.
    pub std: f64,
    pub chosen: Vec<ChosenCandidate>,
}

/// Seed shared by everything derived from one dataset.
pub fn dataset_seed(base_seed: u64, dataset: &str) -> u64 {
    derive_seed(base_seed, fnv1a(dataset.as_bytes()))
}

/// Seed of every candidate of one (dataset, method, fold); candidates
/// differ only in their configuration.
pub fn unit_seed(base_seed: u64, dataset: &str, method: BenchMethod, fold: usize) -> u64 {
    derive_seed(
        derive_seed(dataset_seed(base_seed, dataset), fnv1a(method.id().as_bytes())),
        fold as u64,
    )
}

/// Fold plan of a dataset; identical for every method.
pub fn fold_plan(ds: &Dataset, base_seed: u64, stratified: bool) -> Result<FoldPlan> {
    let mut rng = Rng::new(derive_seed(dataset_seed(base_seed, &ds.name), FOLD_TAG));
    if stratified {
        make_stratified_folds(&ds.y, &mut rng)
    } else {
        make_folds(ds.n(), &mut rng)
    }
}

/// Number of grid candidates a method evaluates per fold.
pub fn candidate_count(method: BenchMethod, grid: &[MethodConfig]) -> usize {
    if method.is_deep() {
        grid.len()
    } else {
        1
    }
}

/// Trains and scores one unit. `candidate` indexes `grid` and is ignored
/// by the baselines.
#[allow(clippy::too_many_arguments)]
pub fn run_unit(
    method: BenchMethod,
    ds: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    candidate: usize,
    grid: &[MethodConfig],
    opts: &ProtocolOptions,
    base_seed: u64,
) -> Result<UnitOutcome> {
    Ok(run_unit_with_model(method, ds, plan, fold, candidate, grid, opts, base_seed)?.0)
}

/// [`run_unit`] that also hands back the trained embedding model of a deep
/// method.
#[allow(clippy::too_many_arguments)]
pub fn run_unit_with_model(
    method: BenchMethod,
    ds: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    candidate: usize,
    grid: &[MethodConfig],
    opts: &ProtocolOptions,
    base_seed: u64,
) -> Result<(UnitOutcome, Option<TrainedEmbeddingModel>)> {
    if fold >= N_FOLDS {
        return Err(Error::InvalidArgument(format!("fold {fold} out of range")));
    }
    let seed = unit_seed(base_seed, &ds.name, method, fold);
    let mut rng = Rng::new(seed);
    let (x_train, y_train) = ds.subset(&plan.train_indices(fold));
    let (x_test, y_test) = ds.subset(plan.test_indices(fold));
    let scaler = Standardizer::fit(&x_train)?;
    let x_train = scaler.apply(&x_train)?;
    let x_test = scaler.apply(&x_test)?;
    let k = ds.k;
    let mut outcome = UnitOutcome {
        fold,
        candidate,
        gamma: None,
        seed,
        train_accuracy: 0.0,
        test_accuracy: 0.0,
        fallback: None,
        history: Vec::new(),
    };
    match method.trainer() {
        None => {
            let (train_pred, test_pred) = if method == BenchMethod::Kmeans {
                let model = kmeans_fit(&x_train, k, &mut rng, KMEANS_MAX_ITER, opts.kmeans_restarts)?;
                let test = kmeans_assign(&model, &x_test)?;
                (model.assignments, test)
            } else {
                let model = gmm_fit_with(&x_train, k, &mut rng, &opts.gmm)?;
                (gmm_predict(&model, &x_train)?, gmm_predict(&model, &x_test)?)
            };
            outcome.train_accuracy = cluster_accuracy(&y_train, &train_pred, k)?;
            outcome.test_accuracy = cluster_accuracy(&y_test, &test_pred, k)?;
        }
        Some(trainer) => {
            let cfg = grid
                .get(candidate)
                .ok_or_else(|| Error::InvalidArgument(format!("candidate {candidate} out of range")))?;
            let cfg = MethodConfig {
                method: trainer,
                seed,
                ..*cfg
            };
            let (spec, width, fallback) = opts.arch.spec_for(trainer, ds.dim(), k);
            let trainer = if fallback.is_some() { Method::Idec } else { trainer };
            let x_train = x_train.pad_columns(width - ds.dim());
            let x_test = x_test.pad_columns(width - ds.dim());
            let model = train_method(trainer, &spec, &x_train, k, &cfg, &mut rng)?;
            outcome.train_accuracy = embedded_kmeans_accuracy(&model.embed(&x_train)?, &y_train, k, &cfg, &mut rng)?;
            outcome.test_accuracy = embedded_kmeans_accuracy(&model.embed(&x_test)?, &y_test, k, &cfg, &mut rng)?;
            outcome.gamma = Some(cfg.gamma);
            outcome.fallback = fallback;
            outcome.history = model.history.clone();
            return Ok((outcome, Some(model)));
        }
    }
    Ok((outcome, None))
}

fn embedded_kmeans_accuracy(
    z: &DenseMatrix,
    y: &[usize],
    k: usize,
    cfg: &MethodConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let km = kmeans_fit(z, k, rng, KMEANS_MAX_ITER, cfg.n_restarts)?;
    cluster_accuracy(y, &km.assignments, k)
}

/// Picks the best candidate per fold by training accuracy, ties to the
/// lower candidate index, and averages the chosen test accuracies.
pub fn select_and_aggregate(method: BenchMethod, dataset: &str, outcomes: &[UnitOutcome]) -> Result<EvalResult> {
    let mut chosen: Vec<Option<&UnitOutcome>> = vec![None; N_FOLDS];
    for o in outcomes {
        let slot = chosen
            .get_mut(o.fold)
            .ok_or_else(|| Error::InvalidArgument(format!("fold {} out of range", o.fold)))?;
        let better = match slot {
            None => true,
            Some(b) => {
                o.train_accuracy > b.train_accuracy || (o.train_accuracy == b.train_accuracy && o.candidate < b.candidate)
            }
        };
        if better {
            *slot = Some(o);
        }
    }
    let mut fold_accuracies = Vec::with_capacity(N_FOLDS);
    let mut picks = Vec::with_capacity(N_FOLDS);
    for (f, c) in chosen.into_iter().enumerate() {
        let o = c.ok_or_else(|| {
            Error::InvalidArgument(format!("{dataset}/{method}: fold {f} has no successful run"))
        })?;
        fold_accuracies.push(o.test_accuracy);
        picks.push(ChosenCandidate {
            candidate: o.candidate,
            gamma: o.gamma,
            seed: o.seed,
            train_accuracy: o.train_accuracy,
        });
    }
    let (mean, std) = mean_std(&fold_accuracies);
    Ok(EvalResult {
        method: method.id().into(),
        dataset: dataset.into(),
        fold_accuracies,
        mean,
        std,
        chosen: picks,
    })
}

/// Runs every unit of one (dataset, method) cell sequentially.
pub fn run_protocol(
    method: BenchMethod,
    ds: &Dataset,
    grid: &[MethodConfig],
    opts: &ProtocolOptions,
    base_seed: u64,
) -> Result<EvalResult> {
    if method.is_deep() && grid.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
    }
    let plan = fold_plan(ds, base_seed, opts.stratified)?;
    let mut outcomes = Vec::new();
    for fold in 0..N_FOLDS {
        for candidate in 0..candidate_count(method, grid) {
            outcomes.push(run_unit(method, ds, &plan, fold, candidate, grid, opts, base_seed)?);
        }
    }
    select_and_aggregate(method, &ds.name, &outcomes)
}
