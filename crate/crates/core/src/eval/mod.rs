//! Clustering accuracy, the five-fold protocol and rank tables.

mod accuracy;
mod folds;
mod protocol;
mod rank;

pub use accuracy::{cluster_accuracy, contingency, hungarian_match};
pub use folds::{make_folds, make_stratified_folds, FoldPlan, N_FOLDS};
pub use protocol::{
    candidate_count, dataset_seed, fold_plan, run_protocol, run_unit, run_unit_with_model, select_and_aggregate, unit_seed,
    ArchitectureConfig, BenchMethod, ChosenCandidate, EvalResult, ProtocolOptions, UnitOutcome,
};
pub use rank::{rank_methods, AccuracyCell, RankTable};

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}
