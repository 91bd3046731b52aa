use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{Manifest, Split};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Per-slice sampling weights: `lesion_weight` for slices containing any
/// lesion pixel, `base_weight` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct SamplerWeights {
    lesion_weight: f64,
    base_weight: f64,
}

#[derive(Deserialize)]
struct RawWeights {
    lesion_weight: f64,
    base_weight: f64,
}

impl TryFrom<RawWeights> for SamplerWeights {
    type Error = Error;

    fn try_from(r: RawWeights) -> Result<Self> {
        SamplerWeights::new(r.lesion_weight, r.base_weight)
    }
}

impl SamplerWeights {
    pub fn new(lesion_weight: f64, base_weight: f64) -> Result<Self> {
        if !(lesion_weight > 0.0
            && base_weight > 0.0
            && lesion_weight.is_finite()
            && base_weight.is_finite())
        {
            return Err(Error::Config(format!(
                "sampler weights must be positive, got lesion={lesion_weight}, base={base_weight}"
            )));
        }
        Ok(SamplerWeights {
            lesion_weight,
            base_weight,
        })
    }

    /// Every slice weighted equally.
    pub fn uniform() -> Self {
        SamplerWeights {
            lesion_weight: 1.0,
            base_weight: 1.0,
        }
    }

    pub fn lesion_weight(&self) -> f64 {
        self.lesion_weight
    }

    pub fn base_weight(&self) -> f64 {
        self.base_weight
    }

    pub fn weight(&self, lesion: bool) -> f64 {
        if lesion {
            self.lesion_weight
        } else {
            self.base_weight
        }
    }
}

impl Default for SamplerWeights {
    fn default() -> Self {
        SamplerWeights {
            lesion_weight: 5.0,
            base_weight: 1.0,
        }
    }
}

/// With-replacement sampler over positions `0..n` weighted by lesion flags.
#[derive(Clone, Debug)]
pub struct WeightedSampler {
    dist: WeightedIndex<f64>,
    len: usize,
}

impl WeightedSampler {
    pub fn new(lesion_flags: &[bool], weights: SamplerWeights) -> Result<Self> {
        if lesion_flags.is_empty() {
            return Err(Error::Config("cannot sample from an empty set".into()));
        }
        let w: Vec<f64> = lesion_flags.iter().map(|&l| weights.weight(l)).collect();
        let dist = WeightedIndex::new(w).map_err(|e| Error::Config(e.to_string()))?;
        Ok(WeightedSampler {
            dist,
            len: lesion_flags.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn draw(&self, rng: &mut StreamRng) -> usize {
        self.dist.sample(rng)
    }

    pub fn draw_many(&self, rng: &mut StreamRng, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Endless stream of manifest record indices from the train split.
///
/// This is one logical sequence; concurrent consumers should partition it with
/// `step_by`/`skip` rather than share a cursor.
pub struct WeightedStream {
    sampler: WeightedSampler,
    targets: Vec<usize>,
    rng: StreamRng,
}

impl Iterator for WeightedStream {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(self.targets[self.sampler.draw(&mut self.rng)])
    }
}

pub fn weighted_stream(
    manifest: &Manifest,
    weights: SamplerWeights,
    seed: u64,
) -> Result<WeightedStream> {
    let targets = manifest.indices_in(Split::Train);
    if targets.is_empty() {
        return Err(Error::Config("manifest has no training records".into()));
    }
    let flags: Vec<bool> = targets
        .iter()
        .map(|&i| manifest.records[i].lesion == 1)
        .collect();
    Ok(WeightedStream {
        sampler: WeightedSampler::new(&flags, weights)?,
        targets,
        rng: rng::stream(seed, "weighted-stream", 0),
    })
}
