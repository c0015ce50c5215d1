//! Embedding clustering: soft assignments, targets, the joint objective
//! and the four trainers.

mod objective;
mod trainers;

pub use objective::{
    dkm_cluster_loss, dkm_grad, joint_loss, kl_grad, kl_loss, soft_assign, softmin_weights, squared_distances,
    target_distribution, Centroids, SoftAssignment, TargetDist,
};
pub use trainers::{
    train_dec, train_depict1d, train_dkm, train_from, train_idec, train_method, EpochRecord, Method, MethodConfig,
    TrainedEmbeddingModel,
};
