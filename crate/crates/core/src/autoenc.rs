//! Autoencoders: architecture specs, encode/reconstruct, reconstruction
//! loss and reconstruction-only pretraining.
//!
//! Hidden layers use sigmoid activations. The embedding layer and the final
//! reconstruction layer are linear, so standardized (unbounded) inputs can
//! be reproduced. The optional 1-D convolution front treats each input row
//! as a one-channel sequence; its decoder mirror uses transposed
//! convolutions back to the input length.

use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::{
    adam_step, Activation, AdamConfig, Conv1dParams, ConvGrads, ConvTape, ConvTranspose1dParams, DenseMatrix,
    MlpGrads, MlpParams, MlpTape, OptimizerState, Rng,
};
use crate::train::{guarded_epochs, minibatches};
use crate::{Error, Result};

/// Hidden widths of the fully connected DEC/IDEC/DKM autoencoder.
pub const DEC_HIDDEN: [usize; 3] = [500, 500, 2000];
/// Embedding width shared by DEC, IDEC and DEPICT.
pub const DEC_EMBEDDING_DIM: usize = 10;
/// Fully connected widths behind the DEPICT convolution front.
pub const DEPICT_HIDDEN: [usize; 2] = [50, 50];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AutoencoderKind {
    Mlp,
    Conv1dFront,
}

/// Geometry of the convolution front.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvPlan {
    /// Output channels per layer; the input has one channel.
    pub channels: Vec<usize>,
    pub kernel_width: usize,
    pub stride: usize,
    /// When false the convolution kernels are excluded from optimization.
    pub trainable: bool,
}

impl Default for ConvPlan {
    fn default() -> Self {
        Self {
            channels: vec![16, 32, 64],
            kernel_width: 5,
            stride: 2,
            trainable: true,
        }
    }
}

impl ConvPlan {
    /// Sequence lengths through the stack, or the failing layer.
    pub fn lengths(&self, input_len: usize) -> Result<Vec<usize>> {
        let mut lens = vec![input_len];
        let mut len = input_len;
        for l in 0..self.channels.len() {
            len = crate::numkit::conv1d::conv_output_len(len, self.kernel_width, self.stride).ok_or(
                Error::DegenerateGeometry {
                    layer: l,
                    in_len: len,
                    kernel_width: self.kernel_width,
                    stride: self.stride,
                },
            )?;
            lens.push(len);
        }
        Ok(lens)
    }

    /// Smallest input length the plan accepts.
    pub fn min_input_len(&self) -> usize {
        let mut len = 1;
        for _ in 0..self.channels.len() {
            len = (len - 1) * self.stride + self.kernel_width;
        }
        len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub embedding_dim: usize,
    pub decoder_widths: Vec<usize>,
    pub kind: AutoencoderKind,
    pub conv_plan: Option<ConvPlan>,
}

impl AutoencoderSpec {
    /// Fully connected `d - widths - m - reverse(widths) - d`.
    pub fn mlp(input_dim: usize, widths: &[usize], embedding_dim: usize) -> Self {
        let mut decoder_widths = widths.to_vec();
        decoder_widths.reverse();
        Self {
            input_dim,
            encoder_widths: widths.to_vec(),
            embedding_dim,
            decoder_widths,
            kind: AutoencoderKind::Mlp,
            conv_plan: None,
        }
    }

    /// `d-500-500-2000-10-2000-500-500-d`.
    pub fn dec(input_dim: usize) -> Self {
        Self::mlp(input_dim, &DEC_HIDDEN, DEC_EMBEDDING_DIM)
    }

    /// `d-500-500-2000-k-2000-500-500-d`.
    pub fn dkm(input_dim: usize, k: usize) -> Self {
        Self::mlp(input_dim, &DEC_HIDDEN, k)
    }

    /// Convolution front (channels 16/32/64, width 5, stride 2) followed by
    /// `d'-50-50-10-50-50-d'`, where `d'` is the flattened conv output.
    pub fn depict(input_dim: usize) -> Self {
        Self::conv_front(input_dim, ConvPlan::default(), &DEPICT_HIDDEN, DEC_EMBEDDING_DIM)
    }

    pub fn conv_front(input_dim: usize, plan: ConvPlan, widths: &[usize], embedding_dim: usize) -> Self {
        Self {
            kind: AutoencoderKind::Conv1dFront,
            conv_plan: Some(plan),
            ..Self::mlp(input_dim, widths, embedding_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.encoder_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("autoencoder widths must be positive".into()));
        }
        let mut rev = self.encoder_widths.clone();
        rev.reverse();
        if rev != self.decoder_widths {
            return Err(Error::InvalidArgument(
                "decoder widths must mirror the encoder widths".into(),
            ));
        }
        match (self.kind, &self.conv_plan) {
            (AutoencoderKind::Mlp, None) => Ok(()),
            (AutoencoderKind::Conv1dFront, Some(plan)) => {
                if plan.channels.is_empty() || plan.channels.iter().any(|&c| c == 0) {
                    return Err(Error::InvalidArgument("conv plan needs positive channel counts".into()));
                }
                plan.lengths(self.input_dim).map(|_| ())
            }
            _ => Err(Error::InvalidArgument(
                "conv_plan must be present exactly when kind is conv1d_front".into(),
            )),
        }
    }

    /// Width of the fully connected stack's input: `d`, or the flattened
    /// convolution output.
    pub fn dense_input_dim(&self) -> Result<usize> {
        match &self.conv_plan {
            None => Ok(self.input_dim),
            Some(plan) => {
                let lens = plan.lengths(self.input_dim)?;
                Ok(lens[lens.len() - 1] * plan.channels[plan.channels.len() - 1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Autoencoder {
    pub spec: AutoencoderSpec,
    pub conv_encoder: Option<Conv1dParams>,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub conv_decoder: Option<ConvTranspose1dParams>,
}

/// Which halves of the network a gradient step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamScope {
    EncoderOnly,
    Full,
}

/// Cached forward pass over a batch.
#[derive(Debug, Clone)]
pub struct AeForward {
    pub z: DenseMatrix,
    pub x_hat: DenseMatrix,
    conv_enc: Option<ConvTape>,
    enc: MlpTape,
    dec: Option<MlpTape>,
    conv_dec: Option<ConvTape>,
}

/// Gradients congruent with an [`Autoencoder`].
#[derive(Debug, Clone)]
pub struct AeGrads {
    pub conv_encoder: Option<ConvGrads>,
    pub encoder: MlpGrads,
    pub decoder: Option<MlpGrads>,
    pub conv_decoder: Option<ConvGrads>,
}

impl AeGrads {
    /// Gradient blocks in the order of [`Autoencoder::param_blocks_mut`].
    pub fn blocks(&self, ae: &Autoencoder, scope: ParamScope) -> Vec<&[f64]> {
        let conv_trainable = ae.conv_trainable();
        let mut out = Vec::new();
        if conv_trainable {
            if let Some(g) = &self.conv_encoder {
                out.extend(g.slices());
            }
        }
        out.extend(self.encoder.slices());
        if scope == ParamScope::Full {
            let dec = self.decoder.as_ref().expect("full-scope gradients need the decoder pass");
            out.extend(dec.slices());
            if conv_trainable {
                if let Some(g) = &self.conv_decoder {
                    out.extend(g.slices());
                }
            }
        }
        out
    }
}

fn dense_plan(widths: &[usize], last_linear: bool) -> Vec<Activation> {
    let n = widths.len() - 1;
    (0..n)
        .map(|l| {
            if l + 1 == n && last_linear {
                Activation::Linear
            } else {
                Activation::Sigmoid
            }
        })
        .collect()
}

impl Autoencoder {
    /// Glorot-initialized network for `spec`. Draw order: conv encoder,
    /// encoder, decoder, conv decoder.
    pub fn init(spec: &AutoencoderSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let conv_encoder = match &spec.conv_plan {
            Some(plan) => {
                let mut chans = vec![1];
                chans.extend_from_slice(&plan.channels);
                let acts = vec![Activation::Sigmoid; plan.channels.len()];
                Some(Conv1dParams::glorot(
                    spec.input_dim,
                    &chans,
                    plan.kernel_width,
                    plan.stride,
                    &acts,
                    rng,
                )?)
            }
            None => None,
        };
        let dense_in = spec.dense_input_dim()?;
        let mut enc_dims = vec![dense_in];
        enc_dims.extend_from_slice(&spec.encoder_widths);
        enc_dims.push(spec.embedding_dim);
        let encoder = MlpParams::glorot(&enc_dims, &dense_plan(&enc_dims, true), rng)?;
        let mut dec_dims = vec![spec.embedding_dim];
        dec_dims.extend_from_slice(&spec.decoder_widths);
        dec_dims.push(dense_in);
        let decoder = MlpParams::glorot(&dec_dims, &dense_plan(&dec_dims, conv_encoder.is_none()), rng)?;
        let conv_decoder = match &conv_encoder {
            Some(enc) => {
                let n = enc.layers().len();
                let acts: Vec<Activation> = (0..n)
                    .map(|l| if l + 1 == n { Activation::Linear } else { Activation::Sigmoid })
                    .collect();
                Some(ConvTranspose1dParams::mirror_of(enc, &acts, rng)?)
            }
            None => None,
        };
        Ok(Self {
            spec: spec.clone(),
            conv_encoder,
            encoder,
            decoder,
            conv_decoder,
        })
    }

    /// Assembles an autoencoder from explicit parameters, checking that the
    /// pieces chain to the spec's dimensions.
    pub fn from_parts(
        spec: AutoencoderSpec,
        conv_encoder: Option<Conv1dParams>,
        encoder: MlpParams,
        decoder: MlpParams,
        conv_decoder: Option<ConvTranspose1dParams>,
    ) -> Result<Self> {
        spec.validate()?;
        let dense_in = match &conv_encoder {
            Some(c) => {
                if c.in_features() != spec.input_dim {
                    return Err(Error::DimensionMismatch {
                        context: "Autoencoder::from_parts conv encoder",
                        expected: spec.input_dim,
                        found: c.in_features(),
                    });
                }
                c.out_features()
            }
            None => spec.input_dim,
        };
        let checks = [
            ("Autoencoder::from_parts encoder input", dense_in, encoder.in_dim()),
            ("Autoencoder::from_parts embedding", spec.embedding_dim, encoder.out_dim()),
            ("Autoencoder::from_parts decoder input", spec.embedding_dim, decoder.in_dim()),
            ("Autoencoder::from_parts decoder output", dense_in, decoder.out_dim()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected,
                    found,
                });
            }
        }
        if conv_encoder.is_some() != conv_decoder.is_some() {
            return Err(Error::InvalidArgument("conv encoder and decoder come in pairs".into()));
        }
        if let Some(cd) = &conv_decoder {
            if cd.in_features() != dense_in || cd.out_features() != spec.input_dim {
                return Err(Error::DimensionMismatch {
                    context: "Autoencoder::from_parts conv decoder",
                    expected: spec.input_dim,
                    found: cd.out_features(),
                });
            }
        }
        Ok(Self {
            spec,
            conv_encoder,
            encoder,
            decoder,
            conv_decoder,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim
    }

    fn conv_trainable(&self) -> bool {
        self.spec.conv_plan.as_ref().map_or(false, |p| p.trainable)
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                context: "autoencoder input",
                expected: self.spec.input_dim,
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// `Z = f(theta, X)`.
    pub fn encode(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(x)?;
        match &self.conv_encoder {
            Some(conv) => self.encoder.predict(&conv.forward(x)?.0),
            None => self.encoder.predict(x),
        }
    }

    /// Decoder half applied to an embedding.
    pub fn decode(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let h = self.decoder.predict(z)?;
        match &self.conv_decoder {
            Some(conv) => Ok(conv.forward(&h)?.0),
            None => Ok(h),
        }
    }

    /// `X_hat = g(Phi, f(theta, X))`.
    pub fn reconstruct(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.decode(&self.encode(x)?)
    }

    /// Forward pass keeping every tape. With `with_decoder == false` the
    /// decoder is skipped and `x_hat` is left empty.
    pub fn forward(&self, x: &DenseMatrix, with_decoder: bool) -> Result<AeForward> {
        self.check_input(x)?;
        let (h, conv_enc) = match &self.conv_encoder {
            Some(conv) => {
                let (h, t) = conv.forward(x)?;
                (h, Some(t))
            }
            None => (x.clone(), None),
        };
        let (z, enc) = self.encoder.forward(&h)?;
        if !with_decoder {
            return Ok(AeForward {
                z,
                x_hat: DenseMatrix::zeros(0, self.input_dim()),
                conv_enc,
                enc,
                dec: None,
                conv_dec: None,
            });
        }
        let (g, dec) = self.decoder.forward(&z)?;
        let (x_hat, conv_dec) = match &self.conv_decoder {
            Some(conv) => {
                let (y, t) = conv.forward(&g)?;
                (y, Some(t))
            }
            None => (g, None),
        };
        Ok(AeForward {
            z,
            x_hat,
            conv_enc,
            enc,
            dec: Some(dec),
            conv_dec,
        })
    }

    /// Backprop of `dL/dX_hat` (through the decoder, when given) plus a
    /// direct `dL/dZ` term, down to every parameter.
    pub fn backward(
        &self,
        fwd: &AeForward,
        d_xhat: Option<&DenseMatrix>,
        d_z: Option<&DenseMatrix>,
    ) -> Result<AeGrads> {
        let (decoder, conv_decoder, mut dz) = match d_xhat {
            Some(dx) => {
                let (conv_g, dg) = match (&self.conv_decoder, &fwd.conv_dec) {
                    (Some(conv), Some(tape)) => {
                        let (g, d) = conv.backward(tape, dx)?;
                        (Some(g), d)
                    }
                    _ => (None, dx.clone()),
                };
                let tape = fwd.dec.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("reconstruction gradient needs a forward pass with the decoder".into())
                })?;
                let (dec_g, dz) = self.decoder.backward(tape, &dg)?;
                (Some(dec_g), conv_g, dz)
            }
            None => (None, None, DenseMatrix::zeros(fwd.z.rows(), fwd.z.cols())),
        };
        if let Some(extra) = d_z {
            if extra.shape() != dz.shape() {
                return Err(Error::ShapeMismatch {
                    context: "autoencoder backward dZ",
                    expected: dz.shape(),
                    found: extra.shape(),
                });
            }
            for (a, b) in dz.as_mut_slice().iter_mut().zip(extra.as_slice()) {
                *a += b;
            }
        }
        let (encoder, dh) = self.encoder.backward(&fwd.enc, &dz)?;
        let conv_encoder = match (&self.conv_encoder, &fwd.conv_enc) {
            (Some(conv), Some(tape)) => Some(conv.backward(tape, &dh)?.0),
            _ => None,
        };
        Ok(AeGrads {
            conv_encoder,
            encoder,
            decoder,
            conv_decoder,
        })
    }

    /// Trainable parameter blocks: conv encoder (if trainable), encoder,
    /// then for [`ParamScope::Full`] the decoder and conv decoder.
    pub fn param_blocks_mut(&mut self, scope: ParamScope) -> Vec<&mut [f64]> {
        let conv_trainable = self.conv_trainable();
        let mut out = Vec::new();
        if conv_trainable {
            if let Some(c) = &mut self.conv_encoder {
                out.extend(c.param_slices_mut());
            }
        }
        out.extend(self.encoder.param_slices_mut());
        if scope == ParamScope::Full {
            out.extend(self.decoder.param_slices_mut());
            if conv_trainable {
                if let Some(c) = &mut self.conv_decoder {
                    out.extend(c.param_slices_mut());
                }
            }
        }
        out
    }

    /// Every parameter, trainable or not, in a fixed order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(c) = &self.conv_encoder {
            out.extend(c.to_flat());
        }
        out.extend(self.encoder.to_flat());
        out.extend(self.decoder.to_flat());
        if let Some(c) = &self.conv_decoder {
            out.extend(c.to_flat());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.to_flat().len();
        if flat.len() != total {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: total,
            });
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = &flat[offset..offset + n];
            offset += n;
            s
        };
        if let Some(c) = &mut self.conv_encoder {
            c.set_flat(take(c.num_params()))?;
        }
        self.encoder.set_flat(take(self.encoder.num_params()))?;
        self.decoder.set_flat(take(self.decoder.num_params()))?;
        if let Some(c) = &mut self.conv_decoder {
            c.set_flat(take(c.num_params()))?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// `sum_i ||X_i - X_hat_i||^2` over all rows.
pub fn recon_loss(x: &DenseMatrix, x_hat: &DenseMatrix) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::ShapeMismatch {
            context: "recon_loss",
            expected: x.shape(),
            found: x_hat.shape(),
        });
    }
    Ok(x.as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gradient of the batch-mean reconstruction loss `recon_loss / rows`
/// with respect to `X_hat`.
pub fn recon_mean_grad(x: &DenseMatrix, x_hat: &DenseMatrix) -> DenseMatrix {
    let scale = 2.0 / x.rows().max(1) as f64;
    let mut g = x_hat.clone();
    for (gv, xv) in g.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *gv = scale * (*gv - xv);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            adam: AdamConfig::default(),
        }
    }
}

/// Reconstruction-only training of an initialized autoencoder. Minibatch
/// gradients use the batch mean; the returned per-epoch history is the
/// summed loss over all rows after each epoch.
pub fn pretrain_from(
    ae: Autoencoder,
    x: &DenseMatrix,
    cfg: &PretrainConfig,
    rng: &mut Rng,
) -> Result<(Autoencoder, Vec<f64>)> {
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "pretrain input" });
    }
    ae.check_input(x)?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
    }
    let adam = cfg.adam;
    let mut state = (ae, OptimizerState::new(), rng.clone());
    let history = guarded_epochs(
        &mut state,
        cfg.epochs,
        adam.lr,
        |(ae, opt, rng), _epoch, lr| {
            let step_cfg = AdamConfig { lr, ..adam };
            for batch in minibatches(x.rows(), cfg.batch_size, rng) {
                let xb = x.select_rows(&batch);
                let fwd = ae.forward(&xb, true)?;
                if !fwd.x_hat.is_finite() {
                    return Ok(f64::NAN);
                }
                let grads = ae.backward(&fwd, Some(&recon_mean_grad(&xb, &fwd.x_hat)), None)?;
                let gblocks = grads.blocks(ae, ParamScope::Full);
                adam_step(&mut ae.param_blocks_mut(ParamScope::Full), &gblocks, opt, &step_cfg)?;
            }
            if !ae.is_finite() {
                return Ok(f64::NAN);
            }
            recon_loss(x, &ae.reconstruct(x)?)
        },
        |loss| loss.is_finite(),
    )?;
    *rng = state.2;
    Ok((state.0, history))
}

/// Initializes an autoencoder for `spec` and pretrains it on `x`.
pub fn pretrain(
    spec: &AutoencoderSpec,
    x: &DenseMatrix,
    epochs: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Autoencoder> {
    let ae = Autoencoder::init(spec, rng)?;
    let cfg = PretrainConfig {
        epochs,
        batch_size,
        ..PretrainConfig::default()
    };
    Ok(pretrain_from(ae, x, &cfg, rng)?.0)
}
