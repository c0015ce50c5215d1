//! Fully connected layers with analytic backprop.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{gemm, DenseMatrix, Transpose};
use super::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Glorot-uniform draw bound for a layer.
#[inline]
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    /// `in_dim x out_dim`.
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// An ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
}

/// Activations cached by [`MlpParams::forward`]: entry 0 is the input,
/// entry `l + 1` the post-activation output of layer `l`.
#[derive(Debug, Clone)]
pub struct MlpTape {
    activations: Vec<DenseMatrix>,
}

impl MlpTape {
    pub fn output(&self) -> &DenseMatrix {
        self.activations.last().expect("tape holds at least the input")
    }

    pub fn input(&self) -> &DenseMatrix {
        &self.activations[0]
    }
}

/// Gradients congruent with an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}

impl MlpParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::DimensionMismatch {
                    context: "MlpParams::new bias",
                    expected: layer.out_dim(),
                    found: layer.bias.len(),
                });
            }
            if let Some(next) = layers.get(l + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "MlpParams::new layer chain",
                        expected: layer.out_dim(),
                        found: next.in_dim(),
                    });
                }
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite {
                    context: "MlpParams::new",
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights and zero biases for the widths
    /// `dims[0] -> dims[1] -> ... -> dims[L]`; one activation per layer.
    pub fn glorot(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(
                "glorot init needs L+1 widths and L activations".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = glorot_bound(fan_in, fan_out);
                let values = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-bound, bound))
                    .collect();
                DenseLayer {
                    weight: DenseMatrix::from_vec(fan_in, fan_out, values)
                        .expect("glorot draws are finite"),
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Forward pass over a batch (one sample per row), returning the output
    /// and the tape needed by [`MlpParams::backward`].
    pub fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, MlpTape)> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp_forward",
                expected: self.in_dim(),
                found: x.cols(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let input = activations.last().expect("non-empty");
            let out = layer_forward(layer, input);
            activations.push(out);
        }
        let tape = MlpTape { activations };
        Ok((tape.output().clone(), tape))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp_forward",
                expected: self.in_dim(),
                found: x.cols(),
            });
        }
        let mut h = layer_forward(&self.layers[0], x);
        for layer in &self.layers[1..] {
            h = layer_forward(layer, &h);
        }
        Ok(h)
    }

    /// Backprop of `upstream = dLoss/dOutput` through the cached tape.
    /// Returns parameter gradients and `dLoss/dInput`.
    pub fn backward(&self, tape: &MlpTape, upstream: &DenseMatrix) -> Result<(MlpGrads, DenseMatrix)> {
        let out = tape.output();
        if upstream.shape() != out.shape() || tape.activations.len() != self.layers.len() + 1 {
            return Err(Error::ShapeMismatch {
                context: "mlp_backward",
                expected: out.shape(),
                found: upstream.shape(),
            });
        }
        let n = upstream.rows();
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.activations[l + 1];
            if layer.activation != Activation::Linear {
                for (g, &yv) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *g *= layer.activation.derivative_from_output(yv);
                }
            }
            let input = &tape.activations[l];
            let mut dw = DenseMatrix::zeros(layer.in_dim(), layer.out_dim());
            gemm(1.0, input, Transpose::Yes, &grad, Transpose::No, 0.0, &mut dw);
            let db = grad.column_sums();
            let mut dx = DenseMatrix::zeros(n, layer.in_dim());
            gemm(1.0, &grad, Transpose::No, &layer.weight, Transpose::Yes, 0.0, &mut dx);
            weights.push(dw);
            biases.push(db);
            grad = dx;
        }
        weights.reverse();
        biases.reverse();
        Ok((MlpGrads { weights, biases }, grad))
    }

    /// Mutable parameter blocks in the order weight0, bias0, weight1, ...
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    /// All parameters flattened in [`MlpParams::param_slices_mut`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: self.num_params(),
            });
        }
        let mut offset = 0;
        for block in self.param_slices_mut() {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }
}

fn layer_forward(layer: &DenseLayer, input: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(input.rows(), layer.out_dim());
    for r in 0..out.rows() {
        out.row_mut(r).copy_from_slice(&layer.bias);
    }
    gemm(1.0, input, Transpose::No, &layer.weight, Transpose::No, 1.0, &mut out);
    if layer.activation != Activation::Linear {
        let act = layer.activation;
        out.map_inplace(|v| act.apply(v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::{finite_diff_grad, max_relative_error};

    fn single(weight: DenseMatrix, bias: Vec<f64>, activation: Activation) -> MlpParams {
        MlpParams::new(vec![DenseLayer {
            weight,
            bias,
            activation,
        }])
        .unwrap()
    }

    #[test]
    fn zero_sigmoid_layer_gives_half() {
        let p = single(DenseMatrix::zeros(3, 2), vec![0.0; 2], Activation::Sigmoid);
        let x = DenseMatrix::from_rows(&[[1.0, -4.0, 9.0], [0.3, 0.0, -2.0]]).unwrap();
        let (y, _) = p.forward(&x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_linear_layer_is_identity() {
        let p = single(DenseMatrix::identity(3), vec![0.0; 3], Activation::Linear);
        let x = DenseMatrix::from_rows(&[[1.0, -4.0, 9.0], [0.3, 0.0, -2.0]]).unwrap();
        assert_eq!(p.forward(&x).unwrap().0, x);
    }

    #[test]
    fn sigmoid_identity_matches_scalar_oracle() {
        let p = single(DenseMatrix::identity(2), vec![0.0; 2], Activation::Sigmoid);
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let y = p.predict(&x).unwrap();
        // 1/(1+e^-1), 1/(1+e^-2) to 7 decimals
        assert!((y.get(0, 0) - 0.7310586).abs() < 1e-7);
        assert!((y.get(0, 1) - 0.8807971).abs() < 1e-7);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = single(DenseMatrix::identity(3), vec![0.0; 3], Activation::Linear);
        let x = DenseMatrix::zeros(1, 2);
        assert!(matches!(p.forward(&x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn new_rejects_broken_chain() {
        let a = DenseLayer {
            weight: DenseMatrix::zeros(2, 3),
            bias: vec![0.0; 3],
            activation: Activation::Linear,
        };
        let b = DenseLayer {
            weight: DenseMatrix::zeros(4, 1),
            bias: vec![0.0; 1],
            activation: Activation::Linear,
        };
        assert!(MlpParams::new(vec![a, b]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Rng::new(1);
        let p = MlpParams::glorot(&[4, 5, 3], &[Activation::Sigmoid, Activation::Linear], &mut rng).unwrap();
        let x = DenseMatrix::filled(2, 4, 0.7);
        let (y, tape) = p.forward(&x).unwrap();
        let (g, dx) = p.backward(&tape, &DenseMatrix::zeros(y.rows(), y.cols())).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_incongruent_upstream() {
        let mut rng = Rng::new(1);
        let p = MlpParams::glorot(&[4, 3], &[Activation::Linear], &mut rng).unwrap();
        let (_, tape) = p.forward(&DenseMatrix::zeros(2, 4)).unwrap();
        assert!(p.backward(&tape, &DenseMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn linear_sum_loss_weight_grad_is_column_sums() {
        // d/dW sum(XW) = X^T 1, so every output column gets the column sums of X
        let mut rng = Rng::new(2);
        let p = MlpParams::glorot(&[3, 2], &[Activation::Linear], &mut rng).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let (y, tape) = p.forward(&x).unwrap();
        let (g, _) = p.backward(&tape, &DenseMatrix::filled(y.rows(), y.cols(), 1.0)).unwrap();
        let colsums = [5.0, 7.0, 9.0];
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(g.weights[0].get(i, j), colsums[i]);
            }
        }
        assert_eq!(g.biases[0], vec![2.0, 2.0]);
    }

    #[test]
    fn three_layer_gradient_check() {
        let mut rng = Rng::new(17);
        let acts = [Activation::Sigmoid, Activation::Sigmoid, Activation::Linear];
        let p = MlpParams::glorot(&[8, 8, 8, 4], &acts, &mut rng).unwrap();
        let x = DenseMatrix::from_vec(5, 8, (0..40).map(|_| rng.normal()).collect()).unwrap();
        let target = DenseMatrix::from_vec(5, 4, (0..20).map(|_| rng.normal()).collect()).unwrap();
        let loss = |q: &MlpParams| -> f64 {
            let y = q.predict(&x).unwrap();
            y.as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let (y, tape) = p.forward(&x).unwrap();
        let mut up = y.clone();
        for (u, t) in up.as_mut_slice().iter_mut().zip(target.as_slice()) {
            *u = 2.0 * (*u - t);
        }
        let (g, _) = p.backward(&tape, &up).unwrap();
        let analytic: Vec<f64> = g.slices().concat();
        let mut probe = p.clone();
        let numeric = finite_diff_grad(
            |flat| {
                probe.set_flat(flat).unwrap();
                loss(&probe)
            },
            &p.to_flat(),
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = Rng::new(4);
        let p = MlpParams::glorot(&[3, 4, 2], &[Activation::Sigmoid, Activation::Linear], &mut rng).unwrap();
        let mut q = MlpParams::glorot(&[3, 4, 2], &[Activation::Sigmoid, Activation::Linear], &mut rng).unwrap();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
    }
}
