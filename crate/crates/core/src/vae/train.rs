use std::path::Path;

use log::info;
use serde::Serialize;

use super::{MaskVae, VaeConfig};
use crate::dataset::{load_split, LoadedSplit, Manifest, SamplerWeights, Split, WeightedSampler};
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::nn::{Adam, AdamConfig};
use crate::rng;
use crate::store::{self, unix_now};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_rec: f64,
    pub train_kl: f64,
    pub val_loss: Option<f64>,
    pub val_rec: Option<f64>,
    pub val_kl: Option<f64>,
    pub val_accuracy: Option<f64>,
}

impl EpochStats {
    /// Validation loss when a validation split exists, else training loss.
    pub fn selection_loss(&self) -> f64 {
        self.val_loss.unwrap_or(self.train_loss)
    }
}

pub struct VaeTraining {
    pub model: MaskVae<f32>,
    pub best: MaskVae<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Fraction of pixels on which two equally sized maps agree.
pub fn pixel_accuracy(a: &LabelMap, b: &LabelMap) -> f64 {
    let same = a
        .as_bytes()
        .iter()
        .zip(b.as_bytes())
        .filter(|(x, y)| x == y)
        .count();
    same as f64 / a.pixels() as f64
}

struct Validation {
    loss: f64,
    rec: f64,
    kl: f64,
    accuracy: f64,
}

fn validate(
    model: &MaskVae<f32>,
    split: &LoadedSplit,
    batch: usize,
    beta: f64,
) -> Result<Option<Validation>> {
    if split.is_empty() {
        return Ok(None);
    }
    let (mut rec, mut kl, mut acc) = (0.0, 0.0, 0.0);
    for chunk in split.maps.chunks(batch) {
        let refs: Vec<&LabelMap> = chunk.iter().collect();
        let l = model.evaluate(&refs, None, beta)?;
        rec += l.rec * chunk.len() as f64;
        kl += l.kl * chunk.len() as f64;
        for (orig, recon) in chunk.iter().zip(model.reconstruct_batch(&refs)?) {
            acc += pixel_accuracy(orig, &recon);
        }
    }
    let n = split.len() as f64;
    Ok(Some(Validation {
        loss: (rec + beta * kl) / n,
        rec: rec / n,
        kl: kl / n,
        accuracy: acc / n,
    }))
}

/// Minimizes `rec + beta * kl` over batches drawn with replacement from the
/// training split according to `weights`.
///
/// With `checkpoint_dir`, epochs are saved as `epoch<N>` and the best
/// validation epoch is mirrored to `best`.
pub fn train_vae(
    cfg: &VaeConfig,
    manifest: &Manifest,
    weights: SamplerWeights,
    checkpoint_dir: Option<&Path>,
) -> Result<VaeTraining> {
    cfg.validate()?;
    if manifest.catalog.len() != cfg.classes {
        return Err(Error::Config(format!(
            "manifest has {} classes, config {}",
            manifest.catalog.len(),
            cfg.classes
        )));
    }
    let size = (cfg.height, cfg.width);
    let train = load_split(manifest, Split::Train, size)?;
    if train.is_empty() {
        return Err(Error::Config("manifest has no training records".into()));
    }
    let val = load_split(manifest, Split::Val, size)?;
    let flags: Vec<bool> = train.prompts.iter().map(|&y| y == 1).collect();
    let sampler = WeightedSampler::new(&flags, weights)?;
    let steps = train.len().div_ceil(cfg.batch_size);

    let mut model = MaskVae::<f32>::new(cfg.clone())?;
    let mut opt = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_loss = f64::INFINITY;

    for epoch in 1..=cfg.epochs {
        let mut batch_rng = rng::stream(cfg.seed, "vae-batches", epoch as u64);
        let mut eps_rng = rng::stream(cfg.seed, "vae-eps", epoch as u64);
        let (mut total, mut rec, mut kl) = (0.0, 0.0, 0.0);
        for step in 0..steps {
            let picks = sampler.draw_many(&mut batch_rng, cfg.batch_size);
            let maps: Vec<&LabelMap> = picks.iter().map(|&p| &train.maps[p]).collect();
            let eps = model.sample_eps(maps.len(), &mut eps_rng);
            model.zero_grad();
            let loss = model
                .accumulate_gradients(&maps, &eps, cfg.beta)
                .map_err(|e| match e {
                    Error::Diverged(m) => {
                        Error::Diverged(format!("epoch {epoch}, step {step}: {m}"))
                    }
                    other => other,
                })?;
            opt.step(&mut model.params_mut());
            total += loss.total;
            rec += loss.rec;
            kl += loss.kl;
        }
        let s = steps as f64;
        let v = validate(&model, &val, cfg.batch_size, cfg.beta)?;
        let stats = EpochStats {
            epoch,
            train_loss: total / s,
            train_rec: rec / s,
            train_kl: kl / s,
            val_loss: v.as_ref().map(|v| v.loss),
            val_rec: v.as_ref().map(|v| v.rec),
            val_kl: v.as_ref().map(|v| v.kl),
            val_accuracy: v.as_ref().map(|v| v.accuracy),
        };
        info!(
            "vae epoch {epoch}: train {:.4} (rec {:.4}, kl {:.2}) val {:?} acc {:?}",
            stats.train_loss, stats.train_rec, stats.train_kl, stats.val_loss, stats.val_accuracy
        );
        let improved = stats.selection_loss() < best_loss;
        if improved {
            best_loss = stats.selection_loss();
            best_epoch = epoch;
            best = model.clone();
        }
        if let Some(dir) = checkpoint_dir {
            let meta = serde_json::json!({
                "epoch": epoch,
                "seed": cfg.seed,
                "created_unix": unix_now(),
                "stats": stats,
            });
            let ckpt = model.to_checkpoint(meta);
            if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
                store::save(&ckpt, &dir.join(format!("epoch{epoch}")))?;
            }
            if improved {
                store::save(&ckpt, &dir.join("best"))?;
            }
        }
        history.push(stats);
    }
    Ok(VaeTraining {
        model,
        best,
        best_epoch,
        history,
    })
}
