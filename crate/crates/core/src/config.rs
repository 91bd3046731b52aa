//! Whole-run configuration: one JSON document with `data`, `vae`,
//! `diffusion` and `eval` sections plus a mandatory top-level `seed`.
//!
//! Every section field has a default and unknown keys are rejected. The
//! top-level seed replaces the per-section seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{SamplerWeights, SplitRatios};
use crate::diffusion::DiffusionConfig;
use crate::error::{Error, Result};
use crate::label::ClassCatalog;
use crate::phantom::PhantomConfig;
use crate::vae::VaeConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub catalog: ClassCatalog,
    pub height: usize,
    pub width: usize,
    pub split: SplitRatios,
    /// Cranial-height band applied when building a manifest from disk.
    pub selection: Option<(f64, f64)>,
    pub sampler: SamplerWeights,
    pub patients: usize,
    pub phantom: PhantomConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            catalog: ClassCatalog::brain_ct(),
            height: 64,
            width: 64,
            split: SplitRatios::default(),
            selection: None,
            sampler: SamplerWeights::default(),
            patients: 20,
            phantom: PhantomConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Synthetic masks per prompt for class-distribution reports.
    pub samples: usize,
    /// Synthetic masks per checkpoint for FID.
    pub fid_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 400,
            fid_samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub vae: VaeConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = RunConfig {
            seed,
            data: DataConfig::default(),
            vae: VaeConfig::default(),
            diffusion: DiffusionConfig::default(),
            eval: EvalConfig::default(),
        };
        cfg.set_seed(seed);
        cfg
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.data.phantom.seed = seed;
        self.vae.seed = seed;
        self.diffusion.seed = seed;
    }

    /// Parses, applies the seed and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let seed = cfg.seed;
        cfg.set_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Section checks plus agreement of latent size, class count and image
    /// size across sections.
    pub fn validate(&self) -> Result<()> {
        self.data.split.validate()?;
        self.data.phantom.validate()?;
        self.vae.validate()?;
        self.diffusion.validate()?;
        let mismatch = |what: &str, a: String, b: String| {
            Err(Error::Config(format!(
                "{what} disagrees across sections: {a} vs {b}"
            )))
        };
        let c = self.data.catalog.len();
        if c != self.vae.classes {
            return mismatch(
                "class count",
                format!("data {c}"),
                format!("vae {}", self.vae.classes),
            );
        }
        let (h, w) = (self.data.height, self.data.width);
        if (h, w) != (self.vae.height, self.vae.width) {
            return mismatch(
                "image size",
                format!("data {h}x{w}"),
                format!("vae {}x{}", self.vae.height, self.vae.width),
            );
        }
        if self.data.phantom.image_size != h || h != w {
            return mismatch(
                "image size",
                format!("data {h}x{w}"),
                format!("phantom {0}x{0}", self.data.phantom.image_size),
            );
        }
        if let Some(d) = self.diffusion.latent_dim {
            if d != self.vae.latent_dim {
                return mismatch(
                    "latent size",
                    format!("vae {}", self.vae.latent_dim),
                    format!("diffusion {d}"),
                );
            }
        }
        if let Some((lo, hi)) = self.data.selection {
            crate::dataset::select_slices(100, lo, hi)?;
        }
        if self.data.patients < 3 {
            return Err(Error::Config("data.patients must be at least 3".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_json("{}").is_err());
        let cfg = RunConfig::from_json(r#"{"seed": 9}"#).unwrap();
        assert_eq!(cfg.vae.seed, 9);
        assert_eq!(cfg.diffusion.seed, 9);
        assert_eq!(cfg.data.phantom.seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"seed": 1, "extra": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"seed": 1, "vae": {"latnet_dim": 8}}"#).is_err());
    }

    #[test]
    fn cross_section_mismatch() {
        let e =
            RunConfig::from_json(r#"{"seed": 1, "diffusion": {"latent_dim": 32}}"#).unwrap_err();
        assert!(e.to_string().contains("latent size"), "{e}");
        let e =
            RunConfig::from_json(r#"{"seed": 1, "vae": {"height": 32, "width": 32}}"#).unwrap_err();
        assert!(e.to_string().contains("image size"), "{e}");
        let e = RunConfig::from_json(r#"{"seed": 1, "vae": {"classes": 5}}"#).unwrap_err();
        assert!(e.to_string().contains("class count"), "{e}");
    }
}
