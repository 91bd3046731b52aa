use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{forward_noise, DiffusionConfig, DiffusionModel, LatentMode};
use crate::dataset::{load_split, LoadedSplit, Manifest, SamplerWeights, Split, WeightedSampler};
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::nn::{Adam, AdamConfig, Matrix};
use crate::rng::{self, StreamRng};
use crate::store::{self, unix_now};
use crate::vae::{reparameterize, GaussianPosterior, MaskVae};

const ENCODE_CHUNK: usize = 32;
const VAL_ITEMS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Noise-prediction error on a fixed held-out set of `(z_0, t, eps)`.
    pub val_loss: f64,
}

pub struct DiffusionTraining {
    pub model: DiffusionModel<f32>,
    pub history: Vec<DiffusionEpochStats>,
}

/// `n` timesteps uniform on `{0, ..., steps - 1}`.
pub fn sample_timesteps<R: Rng>(rng: &mut R, n: usize, steps: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..steps)).collect()
}

fn normals(rng: &mut StreamRng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

fn encode_all(vae: &MaskVae<f32>, maps: &[&LabelMap]) -> Result<Vec<GaussianPosterior<f32>>> {
    let mut out = Vec::with_capacity(maps.len());
    for chunk in maps.chunks(ENCODE_CHUNK) {
        out.extend(vae.encode_batch(chunk)?);
    }
    Ok(out)
}

fn draw_z0(q: &GaussianPosterior<f32>, mode: LatentMode, rng: &mut StreamRng) -> Result<Vec<f32>> {
    match mode {
        LatentMode::Mean => Ok(q.mu.clone()),
        LatentMode::Sample => {
            let eps = normals(rng, q.dim());
            Ok(reparameterize(q, &eps)?.z)
        }
    }
}

/// Noised batch `(z_t, t, y, eps)` built from posteriors.
struct NoisedBatch {
    zt: Matrix<f32>,
    ts: Vec<usize>,
    ys: Vec<u8>,
    eps: Matrix<f32>,
}

fn noise_batch(
    model: &DiffusionModel<f32>,
    posteriors: &[&GaussianPosterior<f32>],
    ys: Vec<u8>,
    rng: &mut StreamRng,
) -> Result<NoisedBatch> {
    let d = model.latent_dim();
    let n = posteriors.len();
    let ts = sample_timesteps(rng, n, model.steps());
    let mut zt = Vec::with_capacity(n * d);
    let mut eps_all = Vec::with_capacity(n * d);
    for (q, &t) in posteriors.iter().zip(&ts) {
        let z0 = draw_z0(q, model.config.latent_mode, rng)?;
        let eps = normals(rng, d);
        zt.extend(forward_noise(&z0, t, &eps, &model.schedule)?);
        eps_all.extend(eps);
    }
    Ok(NoisedBatch {
        zt: Matrix::from_vec(n, d, zt),
        ts,
        ys,
        eps: Matrix::from_vec(n, d, eps_all),
    })
}

fn fixed_validation(
    vae: &MaskVae<f32>,
    model: &DiffusionModel<f32>,
    val: &LoadedSplit,
    train: &LoadedSplit,
    seed: u64,
) -> Result<NoisedBatch> {
    let source = if val.is_empty() { train } else { val };
    let take = source.len().min(VAL_ITEMS);
    let maps: Vec<&LabelMap> = source.maps[..take].iter().collect();
    let posteriors = encode_all(vae, &maps)?;
    let refs: Vec<&GaussianPosterior<f32>> = posteriors.iter().collect();
    let mut rng = rng::stream(seed, "diffusion-val", 0);
    noise_batch(model, &refs, source.prompts[..take].to_vec(), &mut rng)
}

fn validation_loss(model: &DiffusionModel<f32>, batch: &NoisedBatch) -> Result<f64> {
    let steps = model.steps();
    let mut sum = 0.0;
    let d = model.latent_dim();
    for start in (0..batch.ts.len()).step_by(VAL_ITEMS) {
        let end = (start + VAL_ITEMS).min(batch.ts.len());
        let zt = Matrix::from_vec(end - start, d, batch.zt.data[start * d..end * d].to_vec());
        let out = model.denoiser.predict_batch(
            &zt,
            &batch.ts[start..end],
            steps,
            &batch.ys[start..end],
        )?;
        sum += super::diffusion_loss(&out.data, &batch.eps.data[start * d..end * d])?
            * (end - start) as f64;
    }
    Ok(sum / batch.ts.len() as f64)
}

/// Fits the denoiser on latents of the training split under the frozen VAE.
///
/// Each item gets its own uniform timestep. With `checkpoint_dir`, epochs are
/// saved as `epoch<N>` every `checkpoint_every` epochs and at the end.
pub fn train_diffusion(
    vae: &MaskVae<f32>,
    manifest: &Manifest,
    cfg: &DiffusionConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<DiffusionTraining> {
    let mut cfg = cfg.clone();
    match cfg.latent_dim {
        Some(d) if d != vae.latent_dim() => {
            return Err(Error::Config(format!(
                "diffusion latent_dim {d} does not match the VAE's {}",
                vae.latent_dim()
            )))
        }
        _ => cfg.latent_dim = Some(vae.latent_dim()),
    }
    cfg.validate()?;
    let vcfg = vae.config();
    if manifest.catalog.len() != vcfg.classes {
        return Err(Error::Config(format!(
            "manifest has {} classes, VAE {}",
            manifest.catalog.len(),
            vcfg.classes
        )));
    }
    let size = (vcfg.height, vcfg.width);
    let train = load_split(manifest, Split::Train, size)?;
    if train.is_empty() {
        return Err(Error::Config("manifest has no training records".into()));
    }
    let val = load_split(manifest, Split::Val, size)?;

    let mut model = DiffusionModel::<f32>::new(cfg.clone())?;
    let mut opt = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate));
    let val_batch = fixed_validation(vae, &model, &val, &train, cfg.seed)?;
    let cache = if cfg.cache_posteriors {
        let maps: Vec<&LabelMap> = train.maps.iter().collect();
        Some(encode_all(vae, &maps)?)
    } else {
        None
    };
    let sampler = if cfg.lesion_weighting {
        let flags: Vec<bool> = train.prompts.iter().map(|&y| y == 1).collect();
        Some(WeightedSampler::new(&flags, SamplerWeights::default())?)
    } else {
        None
    };
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut batch_rng = rng::stream(cfg.seed, "diffusion-batches", epoch as u64);
        let mut noise_rng = rng::stream(cfg.seed, "diffusion-noise", epoch as u64);
        let order: Vec<usize> = match &sampler {
            Some(s) => s.draw_many(&mut batch_rng, steps_per_epoch * cfg.batch_size),
            None => {
                let mut idx: Vec<usize> = (0..train.len()).collect();
                idx.shuffle(&mut batch_rng);
                idx
            }
        };
        let mut total = 0.0;
        let mut batches = 0usize;
        for (step, picks) in order.chunks(cfg.batch_size).enumerate() {
            let fresh;
            let posteriors: Vec<&GaussianPosterior<f32>> = match &cache {
                Some(all) => picks.iter().map(|&p| &all[p]).collect(),
                None => {
                    let maps: Vec<&LabelMap> = picks.iter().map(|&p| &train.maps[p]).collect();
                    fresh = vae.encode_batch(&maps)?;
                    fresh.iter().collect()
                }
            };
            let ys = picks.iter().map(|&p| train.prompts[p]).collect();
            let b = noise_batch(&model, &posteriors, ys, &mut noise_rng)?;
            model.denoiser.zero_grad();
            let loss = model
                .denoiser
                .accumulate_gradients(&b.zt, &b.ts, cfg.steps, &b.ys, &b.eps)
                .map_err(|e| match e {
                    Error::Diverged(m) => {
                        Error::Diverged(format!("epoch {epoch}, step {step}: {m}"))
                    }
                    other => other,
                })?;
            opt.step(&mut model.denoiser.params_mut());
            total += loss;
            batches += 1;
        }
        let stats = DiffusionEpochStats {
            epoch,
            train_loss: total / batches as f64,
            val_loss: validation_loss(&model, &val_batch)?,
        };
        info!(
            "diffusion epoch {epoch}: train {:.5} val {:.5}",
            stats.train_loss, stats.val_loss
        );
        if let Some(dir) = checkpoint_dir {
            if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
                let meta = serde_json::json!({
                    "epoch": epoch,
                    "seed": cfg.seed,
                    "created_unix": unix_now(),
                    "stats": stats,
                });
                store::save(
                    &model.to_checkpoint(meta),
                    &dir.join(format!("epoch{epoch}")),
                )?;
            }
        }
        history.push(stats);
    }
    Ok(DiffusionTraining { model, history })
}
