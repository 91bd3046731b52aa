//! Stage II: prompt-conditioned denoising diffusion in the frozen VAE latent
//! space.
//!
//! Forward process `z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps` on a linear
//! beta schedule; an MLP denoiser sees `[z_t ; t/T ; p(y)]` where `p(y)` is a
//! learnable two-row prompt embedding; sampling runs ancestral DDPM updates
//! from `t = T-1` down to `0` and decodes with the frozen VAE.

mod model;
mod sample;
mod schedule;
mod train;

pub use model::{
    denoiser_input, diffusion_loss, diffusion_loss_grad, Denoiser, DiffusionModel, PromptTable,
};
pub use sample::{sample_latents, sample_masks};
pub use schedule::{
    forward_noise, make_schedule, predict_x0, reverse_step, reverse_step_with, NoiseSchedule,
};
pub use train::{sample_timesteps, train_diffusion, DiffusionEpochStats, DiffusionTraining};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How `z_0` is drawn from the frozen encoder during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentMode {
    /// `z_0 ~ q(z | X)` via the reparameterization trick.
    Sample,
    /// `z_0 = mu`.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub prompt_dim: usize,
    pub hidden_width: usize,
    /// Must match the VAE when given.
    pub latent_dim: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Add `sqrt(beta_0) * xi` on the final reverse step too.
    pub final_step_noise: bool,
    pub latent_mode: LatentMode,
    /// Encode the training split once instead of on every batch. The encoder
    /// is frozen, so this only changes cost, not the drawn latents' law.
    pub cache_posteriors: bool,
    /// Draw diffusion batches with the lesion-aware weights as well.
    pub lesion_weighting: bool,
    pub checkpoint_every: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            prompt_dim: 16,
            hidden_width: 1024,
            latent_dim: None,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            final_step_noise: false,
            latent_mode: LatentMode::Sample,
            cache_posteriors: false,
            lesion_weighting: false,
            checkpoint_every: 1,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        make_schedule(self.steps, self.beta_start, self.beta_end)?;
        if self.prompt_dim == 0 || self.hidden_width == 0 {
            return Err(Error::Config(
                "prompt_dim and hidden_width must be positive".into(),
            ));
        }
        if self.latent_dim == Some(0) {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config(
                "learning_rate and batch_size must be positive".into(),
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Validates a prompt value.
pub fn prompt_bit(y: i64) -> Result<u8> {
    match y {
        0 | 1 => Ok(y as u8),
        other => Err(Error::Prompt(other)),
    }
}
