//! 1-D convolution stacks over feature vectors.
//!
//! A batch is a [`DenseMatrix`] with one sample per row; a row holds
//! `channels * length` values, channel-major (`row[c * length + t]`).
//! Plain input rows are sequences with one channel.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{gemm, DenseMatrix, Transpose};
use super::mlp::{glorot_bound, Activation};
use super::rng::Rng;
use crate::{Error, Result};

/// `floor((in_len - width) / stride) + 1`, or `None` when the kernel does
/// not fit.
pub fn conv_output_len(in_len: usize, width: usize, stride: usize) -> Option<usize> {
    if width == 0 || stride == 0 || in_len < width {
        None
    } else {
        Some((in_len - width) / stride + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conv1dLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub stride: usize,
    /// `out_channels x in_channels x width`, row-major.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Transposed convolution; the adjoint geometry of a [`Conv1dLayer`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvTranspose1dLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub stride: usize,
    /// `in_channels x out_channels x width`, row-major.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Gradients for a conv stack: per-layer (kernel, bias).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub kernels: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ConvGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.kernels.len());
        for (k, b) in self.kernels.iter().zip(&self.biases) {
            out.push(k.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}

/// Post-activation outputs per layer; entry 0 is the input batch.
#[derive(Debug, Clone)]
pub struct ConvTape {
    activations: Vec<DenseMatrix>,
}

impl ConvTape {
    pub fn output(&self) -> &DenseMatrix {
        self.activations.last().expect("tape holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conv1dParams {
    input_len: usize,
    layers: Vec<Conv1dLayer>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvTranspose1dParams {
    /// Sequence length at the input of each layer, plus the final output
    /// length.
    lengths: Vec<usize>,
    layers: Vec<ConvTranspose1dLayer>,
}

fn check_block(len: usize, expected: usize, context: &'static str) -> Result<()> {
    if len != expected {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found: len,
        });
    }
    Ok(())
}

fn activate(out: &mut DenseMatrix, act: Activation) {
    if act != Activation::Linear {
        out.map_inplace(|v| act.apply(v));
    }
}

fn deactivate(grad: &mut DenseMatrix, y: &DenseMatrix, act: Activation) {
    if act != Activation::Linear {
        for (g, &yv) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *g *= act.derivative_from_output(yv);
        }
    }
}

impl Conv1dParams {
    pub fn new(input_len: usize, layers: Vec<Conv1dLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a conv stack needs at least one layer".into()));
        }
        let mut len = input_len;
        for (l, layer) in layers.iter().enumerate() {
            check_block(
                layer.kernel.len(),
                layer.out_channels * layer.in_channels * layer.width,
                "Conv1dParams::new kernel",
            )?;
            check_block(layer.bias.len(), layer.out_channels, "Conv1dParams::new bias")?;
            if l > 0 {
                check_block(layer.in_channels, layers[l - 1].out_channels, "Conv1dParams::new channel chain")?;
            }
            len = conv_output_len(len, layer.width, layer.stride).ok_or(Error::DegenerateGeometry {
                layer: l,
                in_len: len,
                kernel_width: layer.width,
                stride: layer.stride,
            })?;
        }
        Ok(Self { input_len, layers })
    }

    /// Glorot-uniform kernels, zero biases. `channels[0]` is the input
    /// channel count; one activation per layer.
    pub fn glorot(
        input_len: usize,
        channels: &[usize],
        width: usize,
        stride: usize,
        activations: &[Activation],
        rng: &mut Rng,
    ) -> Result<Self> {
        if channels.len() < 2 || activations.len() != channels.len() - 1 {
            return Err(Error::InvalidArgument(
                "conv init needs L+1 channel counts and L activations".into(),
            ));
        }
        // check geometry before drawing, so a failure leaves `rng` untouched
        let mut len = input_len;
        for l in 0..activations.len() {
            len = conv_output_len(len, width, stride).ok_or(Error::DegenerateGeometry {
                layer: l,
                in_len: len,
                kernel_width: width,
                stride,
            })?;
        }
        let layers = channels
            .windows(2)
            .zip(activations)
            .map(|(c, &activation)| {
                let bound = glorot_bound(c[0] * width, c[1] * width);
                Conv1dLayer {
                    in_channels: c[0],
                    out_channels: c[1],
                    width,
                    stride,
                    kernel: (0..c[0] * c[1] * width)
                        .map(|_| rng.uniform_range(-bound, bound))
                        .collect(),
                    bias: vec![0.0; c[1]],
                    activation,
                }
            })
            .collect();
        Self::new(input_len, layers)
    }

    pub fn layers(&self) -> &[Conv1dLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Conv1dLayer] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Sequence lengths: the input length followed by each layer's output
    /// length.
    pub fn lengths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut len = self.input_len;
        out.push(len);
        for layer in &self.layers {
            len = conv_output_len(len, layer.width, layer.stride).expect("validated geometry");
            out.push(len);
        }
        out
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_channels * self.input_len
    }

    pub fn out_features(&self) -> usize {
        let lens = self.lengths();
        self.layers[self.layers.len() - 1].out_channels * lens[lens.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, ConvTape)> {
        check_block(x.cols(), self.in_features(), "conv1d_forward")?;
        let lens = self.lengths();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let out = conv_layer_forward(layer, lens[l], lens[l + 1], activations.last().expect("non-empty"));
            activations.push(out);
        }
        let tape = ConvTape { activations };
        Ok((tape.output().clone(), tape))
    }

    pub fn backward(&self, tape: &ConvTape, upstream: &DenseMatrix) -> Result<(ConvGrads, DenseMatrix)> {
        if upstream.shape() != tape.output().shape() {
            return Err(Error::ShapeMismatch {
                context: "conv1d_backward",
                expected: tape.output().shape(),
                found: upstream.shape(),
            });
        }
        let lens = self.lengths();
        let mut kernels = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            deactivate(&mut grad, &tape.activations[l + 1], layer.activation);
            let (dk, db, dx) = conv_layer_backward(layer, lens[l], lens[l + 1], &tape.activations[l], &grad);
            kernels.push(dk);
            biases.push(db);
            grad = dx;
        }
        kernels.reverse();
        biases.reverse();
        Ok((ConvGrads { kernels, biases }, grad))
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.kernel.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.kernel.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_block(flat.len(), self.num_params(), "Conv1dParams::set_flat")?;
        let mut offset = 0;
        for block in self.param_slices_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Patch matrix `(B * out_len) x (in_channels * width)` of a strided conv.
fn im2col(channels: usize, width: usize, stride: usize, in_len: usize, out_len: usize, x: &DenseMatrix) -> DenseMatrix {
    let cw = channels * width;
    let mut p = vec![0.0; x.rows() * out_len * cw];
    for (r, xr) in x.row_iter().enumerate() {
        for t in 0..out_len {
            let dst = &mut p[(r * out_len + t) * cw..(r * out_len + t + 1) * cw];
            for ci in 0..channels {
                let src = ci * in_len + t * stride;
                for j in 0..width {
                    // transposed-conv outputs are cropped at `in_len`
                    if t * stride + j < in_len {
                        dst[ci * width + j] = xr[src + j];
                    }
                }
            }
        }
    }
    DenseMatrix::from_raw(x.rows() * out_len, cw, p)
}

fn conv_layer_forward(layer: &Conv1dLayer, in_len: usize, out_len: usize, x: &DenseMatrix) -> DenseMatrix {
    let b = x.rows();
    let patches = im2col(layer.in_channels, layer.width, layer.stride, in_len, out_len, x);
    let kernel = DenseMatrix::from_raw(layer.out_channels, layer.in_channels * layer.width, layer.kernel.clone());
    let mut y = DenseMatrix::zeros(b * out_len, layer.out_channels);
    gemm(1.0, &patches, Transpose::No, &kernel, Transpose::Yes, 0.0, &mut y);
    let mut out = DenseMatrix::zeros(b, layer.out_channels * out_len);
    for r in 0..b {
        let yr = out.row_mut(r);
        for t in 0..out_len {
            for (co, v) in y.row(r * out_len + t).iter().enumerate() {
                yr[co * out_len + t] = v + layer.bias[co];
            }
        }
    }
    activate(&mut out, layer.activation);
    out
}

/// `(B * len) x channels` view of channel-major rows.
fn positions_by_channel(x: &DenseMatrix, channels: usize, len: usize) -> DenseMatrix {
    let mut p = vec![0.0; x.rows() * len * channels];
    for (r, xr) in x.row_iter().enumerate() {
        for c in 0..channels {
            for t in 0..len {
                p[(r * len + t) * channels + c] = xr[c * len + t];
            }
        }
    }
    DenseMatrix::from_raw(x.rows() * len, channels, p)
}

fn bias_grad(grad: &DenseMatrix, channels: usize, len: usize) -> Vec<f64> {
    let mut db = vec![0.0; channels];
    for gr in grad.row_iter() {
        for (c, d) in db.iter_mut().enumerate() {
            *d += gr[c * len..(c + 1) * len].iter().sum::<f64>();
        }
    }
    db
}

/// `grad` is the gradient w.r.t. the layer's pre-activation output.
fn conv_layer_backward(
    layer: &Conv1dLayer,
    in_len: usize,
    out_len: usize,
    x: &DenseMatrix,
    grad: &DenseMatrix,
) -> (Vec<f64>, Vec<f64>, DenseMatrix) {
    let cw = layer.in_channels * layer.width;
    let patches = im2col(layer.in_channels, layer.width, layer.stride, in_len, out_len, x);
    let g = positions_by_channel(grad, layer.out_channels, out_len);
    let mut dk = DenseMatrix::zeros(layer.out_channels, cw);
    gemm(1.0, &g, Transpose::Yes, &patches, Transpose::No, 0.0, &mut dk);
    let kernel = DenseMatrix::from_raw(layer.out_channels, cw, layer.kernel.clone());
    let mut dp = DenseMatrix::zeros(g.rows(), cw);
    gemm(1.0, &g, Transpose::No, &kernel, Transpose::No, 0.0, &mut dp);
    let mut dx = DenseMatrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let dxr = dx.row_mut(r);
        for t in 0..out_len {
            let src = dp.row(r * out_len + t);
            for ci in 0..layer.in_channels {
                let base = ci * in_len + t * layer.stride;
                for j in 0..layer.width {
                    dxr[base + j] += src[ci * layer.width + j];
                }
            }
        }
    }
    (dk.into_vec(), bias_grad(grad, layer.out_channels, out_len), dx)
}

impl ConvTranspose1dParams {
    /// `lengths[l]` is the input length of layer `l`; the last entry is the
    /// final output length. Each output length must lie in
    /// `[(in - 1) * stride + 1, (in - 1) * stride + width + stride - 1]` so
    /// every input position reaches at least one output.
    pub fn new(lengths: Vec<usize>, layers: Vec<ConvTranspose1dLayer>) -> Result<Self> {
        if layers.is_empty() || lengths.len() != layers.len() + 1 {
            return Err(Error::InvalidArgument(
                "a transposed conv stack needs L layers and L+1 lengths".into(),
            ));
        }
        for (l, layer) in layers.iter().enumerate() {
            check_block(
                layer.kernel.len(),
                layer.in_channels * layer.out_channels * layer.width,
                "ConvTranspose1dParams::new kernel",
            )?;
            check_block(layer.bias.len(), layer.out_channels, "ConvTranspose1dParams::new bias")?;
            if l > 0 {
                check_block(layer.in_channels, layers[l - 1].out_channels, "ConvTranspose1dParams::new channel chain")?;
            }
            let (lin, lout) = (lengths[l], lengths[l + 1]);
            if lin == 0 || layer.stride == 0 || layer.width == 0 || lout < (lin - 1) * layer.stride + 1 {
                return Err(Error::DegenerateGeometry {
                    layer: l,
                    in_len: lin,
                    kernel_width: layer.width,
                    stride: layer.stride,
                });
            }
        }
        Ok(Self { lengths, layers })
    }

    /// The decoder-side mirror of `encoder`: channel counts and sequence
    /// lengths run in reverse so the final output has the encoder's input
    /// geometry.
    pub fn mirror_of(encoder: &Conv1dParams, activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        let n = encoder.layers.len();
        if activations.len() != n {
            return Err(Error::InvalidArgument("one activation per mirrored layer".into()));
        }
        let mut lengths = encoder.lengths();
        lengths.reverse();
        let layers = encoder
            .layers
            .iter()
            .rev()
            .zip(activations)
            .map(|(enc, &activation)| {
                let (cin, cout) = (enc.out_channels, enc.in_channels);
                let bound = glorot_bound(cin * enc.width, cout * enc.width);
                ConvTranspose1dLayer {
                    in_channels: cin,
                    out_channels: cout,
                    width: enc.width,
                    stride: enc.stride,
                    kernel: (0..cin * cout * enc.width)
                        .map(|_| rng.uniform_range(-bound, bound))
                        .collect(),
                    bias: vec![0.0; cout],
                    activation,
                }
            })
            .collect();
        Self::new(lengths, layers)
    }

    pub fn layers(&self) -> &[ConvTranspose1dLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvTranspose1dLayer] {
        &mut self.layers
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_channels * self.lengths[0]
    }

    pub fn out_features(&self) -> usize {
        self.layers[self.layers.len() - 1].out_channels * self.lengths[self.lengths.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, ConvTape)> {
        check_block(x.cols(), self.in_features(), "conv_transpose1d_forward")?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let out = convt_layer_forward(
                layer,
                self.lengths[l],
                self.lengths[l + 1],
                activations.last().expect("non-empty"),
            );
            activations.push(out);
        }
        let tape = ConvTape { activations };
        Ok((tape.output().clone(), tape))
    }

    pub fn backward(&self, tape: &ConvTape, upstream: &DenseMatrix) -> Result<(ConvGrads, DenseMatrix)> {
        if upstream.shape() != tape.output().shape() {
            return Err(Error::ShapeMismatch {
                context: "conv_transpose1d_backward",
                expected: tape.output().shape(),
                found: upstream.shape(),
            });
        }
        let mut kernels = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            deactivate(&mut grad, &tape.activations[l + 1], layer.activation);
            let (dk, db, dx) = convt_layer_backward(
                layer,
                self.lengths[l],
                self.lengths[l + 1],
                &tape.activations[l],
                &grad,
            );
            kernels.push(dk);
            biases.push(db);
            grad = dx;
        }
        kernels.reverse();
        biases.reverse();
        Ok((ConvGrads { kernels, biases }, grad))
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.kernel.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.kernel.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_block(flat.len(), self.num_params(), "ConvTranspose1dParams::set_flat")?;
        let mut offset = 0;
        for block in self.param_slices_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

fn convt_layer_forward(
    layer: &ConvTranspose1dLayer,
    in_len: usize,
    out_len: usize,
    x: &DenseMatrix,
) -> DenseMatrix {
    let b = x.rows();
    let cols = layer.out_channels * layer.width;
    let xp = positions_by_channel(x, layer.in_channels, in_len);
    let kernel = DenseMatrix::from_raw(layer.in_channels, cols, layer.kernel.clone());
    let mut c = DenseMatrix::zeros(b * in_len, cols);
    gemm(1.0, &xp, Transpose::No, &kernel, Transpose::No, 0.0, &mut c);
    let mut out = DenseMatrix::zeros(b, layer.out_channels * out_len);
    for r in 0..b {
        let yr = out.row_mut(r);
        for co in 0..layer.out_channels {
            yr[co * out_len..(co + 1) * out_len].fill(layer.bias[co]);
        }
        for t in 0..in_len {
            let src = c.row(r * in_len + t);
            let start = t * layer.stride;
            for co in 0..layer.out_channels {
                for j in 0..layer.width.min(out_len.saturating_sub(start)) {
                    yr[co * out_len + start + j] += src[co * layer.width + j];
                }
            }
        }
    }
    activate(&mut out, layer.activation);
    out
}

fn convt_layer_backward(
    layer: &ConvTranspose1dLayer,
    in_len: usize,
    out_len: usize,
    x: &DenseMatrix,
    grad: &DenseMatrix,
) -> (Vec<f64>, Vec<f64>, DenseMatrix) {
    let cols = layer.out_channels * layer.width;
    let gcol = im2col(layer.out_channels, layer.width, layer.stride, out_len, in_len, grad);
    let xp = positions_by_channel(x, layer.in_channels, in_len);
    let mut dk = DenseMatrix::zeros(layer.in_channels, cols);
    gemm(1.0, &xp, Transpose::Yes, &gcol, Transpose::No, 0.0, &mut dk);
    let kernel = DenseMatrix::from_raw(layer.in_channels, cols, layer.kernel.clone());
    let mut dxp = DenseMatrix::zeros(xp.rows(), layer.in_channels);
    gemm(1.0, &gcol, Transpose::No, &kernel, Transpose::Yes, 0.0, &mut dxp);
    let mut dx = DenseMatrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let dxr = dx.row_mut(r);
        for t in 0..in_len {
            for (ci, v) in dxp.row(r * in_len + t).iter().enumerate() {
                dxr[ci * in_len + t] = *v;
            }
        }
    }
    (dk.into_vec(), bias_grad(grad, layer.out_channels, out_len), dx)
}
