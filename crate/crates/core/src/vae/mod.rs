//! Stage I: the mask-only variational autoencoder.
//!
//! The encoder is four kernel-4, stride-2 convolutions with ReLU followed by a
//! linear projection of the flattened feature grid to `(mu, logvar)`. The
//! decoder mirrors it: a linear projection of `z` back to the feature grid,
//! four kernel-4, stride-2 transposed convolutions with ReLU, and a 1x1
//! convolution to per-class logits.

mod loss;
mod train;

pub use loss::{
    kl_divergence, kl_divergence_grad, reconstruction_loss, reconstruction_loss_grad, vae_loss,
    VaeLoss,
};
pub use train::{pixel_accuracy, train_vae, EpochStats, VaeTraining};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{argmax_decode, LabelMap, LogitField, OneHotMask};
use crate::nn::{
    relu_backward, relu_inplace, Conv2d, ConvTranspose2d, FeatureMaps, Linear, Matrix, Param,
    Scalar,
};
use crate::rng;
use crate::store::{Checkpoint, CheckpointKind, NamedTensor};

pub const LOGVAR_MIN: f64 = -30.0;
pub const LOGVAR_MAX: f64 = 20.0;
const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;
const STAGES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub encoder_channels: Vec<usize>,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Save `epoch<N>` every this many epochs (the last epoch is always kept).
    pub checkpoint_every: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 64,
            encoder_channels: vec![32, 64, 128, 256],
            classes: 7,
            height: 64,
            width: 64,
            beta: 0.01,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 30,
            seed: 0,
            checkpoint_every: 1,
        }
    }
}

impl VaeConfig {
    /// Latent size 256 on 256x256 masks.
    pub fn full_scale() -> Self {
        VaeConfig {
            latent_dim: 256,
            height: 256,
            width: 256,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if self.encoder_channels.len() != STAGES || self.encoder_channels.contains(&0) {
            return bad(format!(
                "encoder_channels needs {STAGES} positive widths, got {:?}",
                self.encoder_channels
            ));
        }
        if self.classes < 2 || self.classes > 255 {
            return bad(format!("classes must be in 2..=255, got {}", self.classes));
        }
        let factor = 1 << STAGES;
        if self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(factor)
            || !self.width.is_multiple_of(factor)
        {
            return bad(format!(
                "input {}x{} must be a positive multiple of {factor} in both dimensions",
                self.height, self.width
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return bad("learning_rate and batch_size must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        Ok(())
    }

    /// Shape `(channels, h, w)` of the encoder's final feature grid.
    pub fn feature_grid(&self) -> (usize, usize, usize) {
        let f = 1 << STAGES;
        (
            self.encoder_channels[STAGES - 1],
            self.height / f,
            self.width / f,
        )
    }
}

/// Diagonal Gaussian posterior `(mu, log sigma^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior<F = f32> {
    pub mu: Vec<F>,
    pub logvar: Vec<F>,
}

impl<F: Scalar> GaussianPosterior<F> {
    /// Validates finiteness and clamps `logvar` to `[-30, 20]`.
    pub fn new(mu: Vec<F>, logvar: Vec<F>) -> Result<Self> {
        if mu.len() != logvar.len() {
            return Err(Error::Shape(format!(
                "mu has {} dims, logvar {}",
                mu.len(),
                logvar.len()
            )));
        }
        if mu.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "posterior parameters must be finite".into(),
            ));
        }
        let logvar = logvar.into_iter().map(clamp_logvar).collect();
        Ok(GaussianPosterior { mu, logvar })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

fn clamp_logvar<F: Scalar>(v: F) -> F {
    v.max(F::from_f64_lossy(LOGVAR_MIN))
        .min(F::from_f64_lossy(LOGVAR_MAX))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode<F = f32> {
    pub z: Vec<F>,
}

impl<F: Scalar> LatentCode<F> {
    pub fn new(z: Vec<F>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("latent code must be finite".into()));
        }
        Ok(LatentCode { z })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize<F: Scalar>(q: &GaussianPosterior<F>, eps: &[F]) -> Result<LatentCode<F>> {
    if eps.len() != q.dim() {
        return Err(Error::Shape(format!(
            "eps has {} dims, posterior {}",
            eps.len(),
            q.dim()
        )));
    }
    let half = F::from_f64_lossy(0.5);
    let z =
        q.mu.iter()
            .zip(&q.logvar)
            .zip(eps)
            .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
            .collect();
    LatentCode::new(z)
}

/// Batched one-hot input in `[C, N, H, W]` layout.
fn onehot_maps<F: Scalar>(maps: &[&LabelMap], classes: usize) -> Result<FeatureMaps<F>> {
    let (h, w) = (maps[0].height(), maps[0].width());
    let mut x = FeatureMaps::zeros(classes, maps.len(), h, w);
    let plane = h * w;
    for (n, m) in maps.iter().enumerate() {
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::Shape("batch maps differ in size".into()));
        }
        m.validate(classes)?;
        for (p, &v) in m.as_bytes().iter().enumerate() {
            x.data[(v as usize * maps.len() + n) * plane + p] = F::one();
        }
    }
    Ok(x)
}

/// `[C, N, H, W]` to `[N, C*H*W]`.
fn flatten<F: Scalar>(x: &FeatureMaps<F>) -> Matrix<F> {
    let plane = x.plane();
    let mut out = Matrix::zeros(x.batch, x.channels * plane);
    for c in 0..x.channels {
        for n in 0..x.batch {
            let src = &x.data[(c * x.batch + n) * plane..(c * x.batch + n + 1) * plane];
            out.row_mut(n)[c * plane..(c + 1) * plane].copy_from_slice(src);
        }
    }
    out
}

fn unflatten<F: Scalar>(
    m: &Matrix<F>,
    channels: usize,
    height: usize,
    width: usize,
) -> FeatureMaps<F> {
    let plane = height * width;
    let mut x = FeatureMaps::zeros(channels, m.rows, height, width);
    for c in 0..channels {
        for n in 0..m.rows {
            x.data[(c * m.rows + n) * plane..(c * m.rows + n + 1) * plane]
                .copy_from_slice(&m.row(n)[c * plane..(c + 1) * plane]);
        }
    }
    x
}

struct EncoderTrace<F> {
    /// Input of each conv stage, then the final activated grid.
    maps: Vec<FeatureMaps<F>>,
    flat: Matrix<F>,
    /// Raw projection output `[N, 2D]` before clamping.
    raw: Matrix<F>,
}

struct Pass<F> {
    enc: EncoderTrace<F>,
    posts: Vec<GaussianPosterior<F>>,
    dec: DecoderTrace<F>,
    dlogits: Vec<F>,
}

struct DecoderTrace<F> {
    z: Matrix<F>,
    /// Activated projection output.
    projected: Matrix<F>,
    /// Input of each transposed-conv stage, then the head input.
    maps: Vec<FeatureMaps<F>>,
    logits: FeatureMaps<F>,
}

/// The MaskVAE. Parameters are stored in `F`; checkpoints are always `f32`.
#[derive(Clone, Debug)]
pub struct MaskVae<F = f32> {
    config: VaeConfig,
    encoder: Vec<Conv2d<F>>,
    to_posterior: Linear<F>,
    from_latent: Linear<F>,
    decoder: Vec<ConvTranspose2d<F>>,
    head: Conv2d<F>,
}

impl<F: Scalar> MaskVae<F> {
    pub fn new(config: VaeConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(config.seed, "vae-init", 0);
        let ch = &config.encoder_channels;
        let mut encoder = Vec::with_capacity(STAGES);
        let mut inputs = config.classes;
        for (i, &out) in ch.iter().enumerate() {
            encoder.push(Conv2d::new(
                &format!("encoder.conv{i}"),
                inputs,
                out,
                KERNEL,
                STRIDE,
                PADDING,
                &mut r,
            ));
            inputs = out;
        }
        let (gc, gh, gw) = config.feature_grid();
        let flat = gc * gh * gw;
        let to_posterior = Linear::new("encoder.posterior", flat, 2 * config.latent_dim, &mut r);
        let from_latent = Linear::new("decoder.project", config.latent_dim, flat, &mut r);
        let mut widths: Vec<usize> = ch.iter().rev().copied().collect();
        widths.push(ch[0]);
        let decoder = (0..STAGES)
            .map(|i| {
                ConvTranspose2d::new(
                    &format!("decoder.up{i}"),
                    widths[i],
                    widths[i + 1],
                    KERNEL,
                    STRIDE,
                    PADDING,
                    &mut r,
                )
            })
            .collect();
        let head = Conv2d::new("decoder.head", ch[0], config.classes, 1, 1, 0, &mut r);
        Ok(MaskVae {
            config,
            encoder,
            to_posterior,
            from_latent,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut out = Vec::new();
        for c in &self.encoder {
            out.extend(c.params());
        }
        out.extend(self.to_posterior.params());
        out.extend(self.from_latent.params());
        for c in &self.decoder {
            out.extend(c.params());
        }
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        for c in &mut self.encoder {
            out.extend(c.params_mut());
        }
        out.extend(self.to_posterior.params_mut());
        out.extend(self.from_latent.params_mut());
        for c in &mut self.decoder {
            out.extend(c.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn check_maps(&self, maps: &[&LabelMap]) -> Result<()> {
        if maps.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for m in maps {
            if (m.height(), m.width()) != (self.config.height, self.config.width) {
                return Err(Error::Config(format!(
                    "mask is {}x{} but the model expects {}x{}",
                    m.height(),
                    m.width(),
                    self.config.height,
                    self.config.width
                )));
            }
        }
        Ok(())
    }

    /// Activated encoder feature grid for a batch, `[channels, N, h, w]`.
    pub fn encoder_features(&self, maps: &[&LabelMap]) -> Result<FeatureMaps<F>> {
        self.check_maps(maps)?;
        let mut x = onehot_maps(maps, self.config.classes)?;
        for conv in &self.encoder {
            x = conv.forward(&x);
            relu_inplace(&mut x.data);
        }
        Ok(x)
    }

    fn encode_trace(&self, x: FeatureMaps<F>) -> EncoderTrace<F> {
        let mut maps = vec![x];
        for conv in &self.encoder {
            let mut y = conv.forward(maps.last().unwrap());
            relu_inplace(&mut y.data);
            maps.push(y);
        }
        let flat = flatten(maps.last().unwrap());
        let raw = self.to_posterior.forward(&flat);
        EncoderTrace { maps, flat, raw }
    }

    fn split_posterior(&self, raw: &Matrix<F>) -> Vec<GaussianPosterior<F>> {
        let d = self.config.latent_dim;
        (0..raw.rows)
            .map(|n| {
                let row = raw.row(n);
                GaussianPosterior {
                    mu: row[..d].to_vec(),
                    logvar: row[d..].iter().map(|&v| clamp_logvar(v)).collect(),
                }
            })
            .collect()
    }

    pub fn encode_batch(&self, maps: &[&LabelMap]) -> Result<Vec<GaussianPosterior<F>>> {
        self.check_maps(maps)?;
        let trace = self.encode_trace(onehot_maps(maps, self.config.classes)?);
        let posts = self.split_posterior(&trace.raw);
        if posts
            .iter()
            .any(|q| q.mu.iter().chain(&q.logvar).any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical(
                "encoder produced non-finite posterior".into(),
            ));
        }
        Ok(posts)
    }

    pub fn encode(&self, map: &LabelMap) -> Result<GaussianPosterior<F>> {
        Ok(self.encode_batch(&[map])?.remove(0))
    }

    /// Encodes a one-hot mask (must be exactly one-hot).
    pub fn encode_onehot(&self, x: &OneHotMask) -> Result<GaussianPosterior<F>> {
        if x.classes() != self.config.classes {
            return Err(Error::Config(format!(
                "mask has {} classes, model expects {}",
                x.classes(),
                self.config.classes
            )));
        }
        let mut data = vec![0u8; x.height() * x.width()];
        for c in 0..x.classes() {
            for (p, &b) in x.channel(c).iter().enumerate() {
                if b == 1 {
                    data[p] = c as u8;
                }
            }
        }
        self.encode(&LabelMap::new(x.height(), x.width(), data)?)
    }

    fn decode_trace(&self, z: Matrix<F>) -> DecoderTrace<F> {
        let mut projected = self.from_latent.forward(&z);
        relu_inplace(&mut projected.data);
        let (gc, gh, gw) = self.config.feature_grid();
        let mut maps = vec![unflatten(&projected, gc, gh, gw)];
        for up in &self.decoder {
            let mut y = up.forward(maps.last().unwrap());
            relu_inplace(&mut y.data);
            maps.push(y);
        }
        let logits = self.head.forward(maps.last().unwrap());
        DecoderTrace {
            z,
            projected,
            maps,
            logits,
        }
    }

    fn latent_matrix(&self, codes: &[&LatentCode<F>]) -> Result<Matrix<F>> {
        let d = self.config.latent_dim;
        let mut z = Matrix::zeros(codes.len(), d);
        for (n, c) in codes.iter().enumerate() {
            if c.dim() != d {
                return Err(Error::Shape(format!(
                    "latent has {} dims, model expects {d}",
                    c.dim()
                )));
            }
            z.row_mut(n).copy_from_slice(&c.z);
        }
        Ok(z)
    }

    fn split_logits(&self, logits: &FeatureMaps<F>) -> Vec<LogitField<F>> {
        let plane = logits.plane();
        (0..logits.batch)
            .map(|n| {
                let mut data = Vec::with_capacity(logits.channels * plane);
                for c in 0..logits.channels {
                    let start = (c * logits.batch + n) * plane;
                    data.extend_from_slice(&logits.data[start..start + plane]);
                }
                LogitField::new(logits.channels, logits.height, logits.width, data)
                    .expect("decoder shape")
            })
            .collect()
    }

    pub fn decode_batch(&self, codes: &[&LatentCode<F>]) -> Result<Vec<LogitField<F>>> {
        if codes.is_empty() {
            return Ok(Vec::new());
        }
        let trace = self.decode_trace(self.latent_matrix(codes)?);
        Ok(self.split_logits(&trace.logits))
    }

    pub fn decode(&self, z: &LatentCode<F>) -> Result<LogitField<F>> {
        Ok(self.decode_batch(&[z])?.remove(0))
    }

    /// Posterior-mean reconstructions.
    pub fn reconstruct_batch(&self, maps: &[&LabelMap]) -> Result<Vec<LabelMap>> {
        let posts = self.encode_batch(maps)?;
        let codes: Vec<LatentCode<F>> = posts.into_iter().map(|q| LatentCode { z: q.mu }).collect();
        let refs: Vec<&LatentCode<F>> = codes.iter().collect();
        self.decode_batch(&refs)?
            .iter()
            .map(argmax_decode)
            .collect()
    }

    /// Loss over a batch. `eps` (`N * D`, row-major) selects sampled latents;
    /// `None` decodes the posterior mean.
    pub fn evaluate(&self, maps: &[&LabelMap], eps: Option<&[F]>, beta: f64) -> Result<VaeLoss> {
        Ok(self.forward_pass(maps, eps, beta, false)?.0)
    }

    /// Forward and backward pass; gradients accumulate into the parameters.
    pub fn accumulate_gradients(
        &mut self,
        maps: &[&LabelMap],
        eps: &[F],
        beta: f64,
    ) -> Result<VaeLoss> {
        let (loss, pass) = self.forward_pass(maps, Some(eps), beta, true)?;
        let pass = pass.expect("gradient pass requested");
        let dz = self.backward_decoder(&pass.dec, pass.dlogits);
        self.backward_encoder(&pass.enc, &pass.posts, &dz, eps, beta);
        Ok(loss)
    }

    fn forward_pass(
        &self,
        maps: &[&LabelMap],
        eps: Option<&[F]>,
        beta: f64,
        want_grad: bool,
    ) -> Result<(VaeLoss, Option<Pass<F>>)> {
        self.check_maps(maps)?;
        let n = maps.len();
        let d = self.config.latent_dim;
        if let Some(e) = eps {
            if e.len() != n * d {
                return Err(Error::Shape(format!(
                    "eps has {} values, need {}",
                    e.len(),
                    n * d
                )));
            }
        }
        let enc = self.encode_trace(onehot_maps(maps, self.config.classes)?);
        let posts = self.split_posterior(&enc.raw);
        let half = F::from_f64_lossy(0.5);
        let mut z = Matrix::zeros(n, d);
        for (i, q) in posts.iter().enumerate() {
            for k in 0..d {
                let noise = eps.map_or(F::zero(), |e| e[i * d + k]);
                z.data[i * d + k] = q.mu[k] + (q.logvar[k] * half).exp() * noise;
            }
        }
        let dec = self.decode_trace(z);
        let labels: Vec<&[u8]> = maps.iter().map(|m| m.as_bytes()).collect();
        let plane = self.config.height * self.config.width;
        let mut dlogits = want_grad.then(|| vec![F::zero(); dec.logits.data.len()]);
        let rec = loss::cross_entropy_cnp(
            &dec.logits.data,
            &labels,
            self.config.classes,
            plane,
            dlogits.as_deref_mut(),
        )?;
        let kl = posts.iter().map(kl_divergence).sum::<f64>() / n as f64;
        let out = VaeLoss::compose(rec, kl, beta);
        if !out.total.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss (rec {rec}, kl {kl})"
            )));
        }
        let pass = dlogits.map(|dlogits| Pass {
            enc,
            posts,
            dec,
            dlogits,
        });
        Ok((out, pass))
    }

    fn backward_decoder(&mut self, trace: &DecoderTrace<F>, dlogits: Vec<F>) -> Matrix<F> {
        let logits = &trace.logits;
        let mut grad = FeatureMaps {
            channels: logits.channels,
            batch: logits.batch,
            height: logits.height,
            width: logits.width,
            data: dlogits,
        };
        grad = self.head.backward(trace.maps.last().unwrap(), &grad);
        for (i, up) in self.decoder.iter_mut().enumerate().rev() {
            relu_backward(&trace.maps[i + 1].data, &mut grad.data);
            grad = up.backward(&trace.maps[i], &grad);
        }
        let mut dproj = flatten(&grad);
        relu_backward(&trace.projected.data, &mut dproj.data);
        self.from_latent.backward(&trace.z, &dproj)
    }

    fn backward_encoder(
        &mut self,
        trace: &EncoderTrace<F>,
        posts: &[GaussianPosterior<F>],
        dz: &Matrix<F>,
        eps: &[F],
        beta: f64,
    ) {
        let d = self.config.latent_dim;
        let n = posts.len();
        let half = F::from_f64_lossy(0.5);
        let kl_scale = F::from_f64_lossy(beta / n as f64);
        let lo = F::from_f64_lossy(LOGVAR_MIN);
        let hi = F::from_f64_lossy(LOGVAR_MAX);
        let mut draw = Matrix::zeros(n, 2 * d);
        for (i, q) in posts.iter().enumerate() {
            let (kmu, klv) = kl_divergence_grad(q);
            for k in 0..d {
                let g = dz.data[i * d + k];
                let sigma = (q.logvar[k] * half).exp();
                draw.data[i * 2 * d + k] = g + kl_scale * kmu[k];
                let raw = trace.raw.data[i * 2 * d + d + k];
                draw.data[i * 2 * d + d + k] = if raw < lo || raw > hi {
                    F::zero()
                } else {
                    g * eps[i * d + k] * half * sigma + kl_scale * klv[k]
                };
            }
        }
        let dflat = self.to_posterior.backward(&trace.flat, &draw);
        let last = trace.maps.last().unwrap();
        let mut grad = unflatten(&dflat, last.channels, last.height, last.width);
        for (i, conv) in self.encoder.iter_mut().enumerate().rev() {
            relu_backward(&trace.maps[i + 1].data, &mut grad.data);
            grad = conv.backward(&trace.maps[i], &grad);
        }
    }

    /// Draws `N * D` standard normal values.
    pub fn sample_eps<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<F> {
        (0..n * self.config.latent_dim)
            .map(|_| F::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Checkpoint {
        let mut meta = metadata;
        meta["config"] = serde_json::to_value(&self.config).expect("config serializes");
        let tensors = self
            .params()
            .into_iter()
            .map(|p| {
                NamedTensor::new(
                    &p.name,
                    p.shape.clone(),
                    p.value.iter().map(|v| v.as_f64() as f32).collect(),
                )
            })
            .collect();
        Checkpoint::new(CheckpointKind::Vae, meta, tensors)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(CheckpointKind::Vae)?;
        let config: VaeConfig = serde_json::from_value(
            ckpt.metadata
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("metadata has no config".into()))?,
        )?;
        let mut model = MaskVae::new(config)?;
        for p in model.params_mut() {
            ckpt.load_into(p)?;
        }
        Ok(model)
    }

    pub fn cast<G: Scalar>(&self) -> MaskVae<G> {
        MaskVae {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(|c| cast_conv(c)).collect(),
            to_posterior: cast_linear(&self.to_posterior),
            from_latent: cast_linear(&self.from_latent),
            decoder: self
                .decoder
                .iter()
                .map(|c| ConvTranspose2d {
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                    stride: c.stride,
                    padding: c.padding,
                })
                .collect(),
            head: cast_conv(&self.head),
        }
    }
}

fn cast_conv<F: Scalar, G: Scalar>(c: &Conv2d<F>) -> Conv2d<G> {
    Conv2d {
        weight: c.weight.cast(),
        bias: c.bias.cast(),
        stride: c.stride,
        padding: c.padding,
    }
}

fn cast_linear<F: Scalar, G: Scalar>(l: &Linear<F>) -> Linear<G> {
    Linear {
        weight: l.weight.cast(),
        bias: l.bias.cast(),
    }
}
