//! Classical clustering baselines.

pub mod gmm;
pub mod kmeans;

pub use gmm::{gmm_fit, gmm_fit_with, gmm_predict, GmmConfig, GmmModel};
pub use kmeans::{kmeans_assign, kmeans_fit, kmeans_from, kmeans_plus_plus, KMeansModel};
