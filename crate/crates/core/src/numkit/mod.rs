//! Dense numerics: matrices, MLP and 1-D convolution layers with analytic
//! gradients, Adam, finite differences and the seeded generator.

pub mod adam;
pub mod conv1d;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use conv1d::{Conv1dLayer, Conv1dParams, ConvGrads, ConvTape, ConvTranspose1dLayer, ConvTranspose1dParams};
pub use gradcheck::{finite_diff_grad, max_relative_error, norm_relative_error};
pub use matrix::{squared_distance, DenseMatrix};
pub use mlp::{Activation, DenseLayer, MlpGrads, MlpParams, MlpTape};
pub use rng::Rng;
