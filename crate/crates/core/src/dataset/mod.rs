//! Corpus ingestion, slice selection, mask fusion, patient-level splitting
//! and lesion-aware batch sampling.

mod manifest;
mod sampler;

pub use manifest::{
    build_manifest, Manifest, ManifestSpec, SliceRecord, Split, SplitSpec, MANIFEST_FILE,
};
pub use sampler::{weighted_stream, SamplerWeights, WeightedSampler, WeightedStream};

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{lesion_flag, onehot, read_label_file, resize_nearest, ClassCatalog, LabelMap};
use crate::nn::Scalar;
use crate::rng;

/// Indices kept by the cranial-height band `[lo, hi)`:
/// `floor(lo * n) <= i < ceil(hi * n)`.
pub fn select_slices(n_slices: usize, lo: f64, hi: f64) -> Result<Range<usize>> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::Selection(format!(
            "need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}"
        )));
    }
    if n_slices == 0 {
        return Err(Error::Selection("volume has no slices".into()));
    }
    let n = n_slices as f64;
    let start = (lo * n).floor() as usize;
    let end = ((hi * n).ceil() as usize).min(n_slices);
    if start >= end {
        return Err(Error::Selection(format!(
            "band [{lo}, {hi}) keeps no slices of a {n_slices}-slice volume"
        )));
    }
    Ok(start..end)
}

/// Binary infarct annotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "binary mask {height}x{width} with {} cells",
                data.len()
            )));
        }
        Ok(BinaryMask {
            height,
            width,
            data,
        })
    }
}

/// Overlays the infarct annotation on a tissue map; infarct takes precedence.
pub fn fuse_masks(
    tissue: &LabelMap,
    infarct: &BinaryMask,
    catalog: &ClassCatalog,
) -> Result<LabelMap> {
    if (tissue.height(), tissue.width()) != (infarct.height, infarct.width) {
        return Err(Error::Fusion(format!(
            "tissue is {}x{} but infarct mask is {}x{}",
            tissue.height(),
            tissue.width(),
            infarct.height,
            infarct.width
        )));
    }
    let lesion = catalog.lesion_class().0;
    let data = tissue
        .as_bytes()
        .iter()
        .zip(&infarct.data)
        .map(|(&t, &inf)| if inf { lesion } else { t })
        .collect();
    LabelMap::new(tissue.height(), tissue.width(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Split(format!(
                "ratios must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Per-split patient counts: floor of `ratio * n`, remainder handed out one at
/// a time in train/val/test order, then every split topped up to at least one
/// patient from the largest split.
pub fn split_counts(n_patients: usize, ratios: &SplitRatios) -> Result<[usize; 3]> {
    ratios.validate()?;
    if n_patients < 3 {
        return Err(Error::Split(format!(
            "{n_patients} patients cannot fill train, val and test with at least one each"
        )));
    }
    let r = ratios.as_array();
    let mut counts = r.map(|x| (x * n_patients as f64 + 1e-9).floor() as usize);
    let mut remainder = n_patients - counts.iter().sum::<usize>();
    let mut k = 0;
    while remainder > 0 {
        counts[k % 3] += 1;
        remainder -= 1;
        k += 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3)
                .max_by_key(|&j| (counts[j], std::cmp::Reverse(j)))
                .unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Ok(counts)
}

/// Deterministic patient-level partition. Ids are deduplicated and sorted
/// before shuffling so the result does not depend on input order.
pub fn split_patients(
    patient_ids: &[String],
    ratios: &SplitRatios,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    let mut ids: Vec<&String> = patient_ids.iter().collect();
    ids.sort();
    ids.dedup();
    let counts = split_counts(ids.len(), ratios)?;
    ids.shuffle(&mut rng::stream(seed, "patient-split", 0));
    let mut out = BTreeMap::new();
    let splits = [Split::Train, Split::Val, Split::Test];
    let mut it = ids.into_iter();
    for (split, count) in splits.into_iter().zip(counts) {
        for id in it.by_ref().take(count) {
            out.insert(id.clone(), split);
        }
    }
    Ok(out)
}

/// A batch of one-hot masks in `[N, C, H, W]` layout with their prompts.
#[derive(Clone, Debug)]
pub struct Batch<F> {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub onehot: Vec<F>,
    pub maps: Vec<LabelMap>,
    pub prompts: Vec<u8>,
}

impl<F: Scalar> Batch<F> {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.len(), self.classes, self.height, self.width]
    }

    pub fn from_maps(maps: Vec<LabelMap>, prompts: Vec<u8>, classes: usize) -> Result<Self> {
        let (height, width) = maps
            .first()
            .map(|m| (m.height(), m.width()))
            .ok_or_else(|| Error::Shape("empty batch".into()))?;
        let plane = height * width;
        let mut data = vec![F::zero(); maps.len() * classes * plane];
        for (n, m) in maps.iter().enumerate() {
            if (m.height(), m.width()) != (height, width) {
                return Err(Error::Shape("batch maps differ in size".into()));
            }
            let x = onehot(m, classes)?;
            for (dst, &b) in data[n * classes * plane..(n + 1) * classes * plane]
                .iter_mut()
                .zip(x.as_bytes())
            {
                *dst = if b == 1 { F::one() } else { F::zero() };
            }
        }
        Ok(Batch {
            classes,
            height,
            width,
            onehot: data,
            maps,
            prompts,
        })
    }
}

fn load_record_map(manifest: &Manifest, index: usize, size: (usize, usize)) -> Result<LabelMap> {
    let record = manifest.records.get(index).ok_or(Error::IndexOutOfRange {
        index,
        len: manifest.records.len(),
    })?;
    let map = read_label_file(&manifest.resolve(record), manifest.catalog.len())?;
    resize_nearest(&map, size.0, size.1)
}

/// Reads the listed records, resizes them to `size` and one-hot encodes them.
pub fn load_batch<F: Scalar>(
    manifest: &Manifest,
    indices: &[usize],
    size: (usize, usize),
) -> Result<Batch<F>> {
    let mut maps = Vec::with_capacity(indices.len());
    let mut prompts = Vec::with_capacity(indices.len());
    for &i in indices {
        maps.push(load_record_map(manifest, i, size)?);
        prompts.push(manifest.records[i].lesion);
    }
    Batch::from_maps(maps, prompts, manifest.catalog.len())
}

/// A split held in memory, used by the training loops.
#[derive(Clone, Debug)]
pub struct LoadedSplit {
    pub record_indices: Vec<usize>,
    pub maps: Vec<LabelMap>,
    pub prompts: Vec<u8>,
}

impl LoadedSplit {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn batch<F: Scalar>(&self, positions: &[usize], classes: usize) -> Result<Batch<F>> {
        let maps = positions.iter().map(|&p| self.maps[p].clone()).collect();
        let prompts = positions.iter().map(|&p| self.prompts[p]).collect();
        Batch::from_maps(maps, prompts, classes)
    }
}

pub fn load_split(manifest: &Manifest, split: Split, size: (usize, usize)) -> Result<LoadedSplit> {
    let record_indices = manifest.indices_in(split);
    let mut maps = Vec::with_capacity(record_indices.len());
    let mut prompts = Vec::with_capacity(record_indices.len());
    for &i in &record_indices {
        let map = load_record_map(manifest, i, size)?;
        prompts.push(lesion_flag(&map, &manifest.catalog));
        maps.push(map);
    }
    Ok(LoadedSplit {
        record_indices,
        maps,
        prompts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::ClassId;

    #[test]
    fn cranial_band_examples() {
        assert_eq!(select_slices(100, 0.20, 0.95).unwrap(), 20..95);
        assert_eq!(select_slices(10, 0.20, 0.95).unwrap(), 2..10);
        assert_eq!(select_slices(37, 0.0, 1.0).unwrap(), 0..37);
        assert!(select_slices(10, 0.5, 0.5).is_err());
        assert!(select_slices(0, 0.2, 0.95).is_err());
        assert!(select_slices(10, -0.1, 0.5).is_err());
    }

    #[test]
    fn fusion_identity_saturation_and_mismatch() {
        let cat = ClassCatalog::brain_ct();
        let tissue = LabelMap::new(2, 3, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let none = BinaryMask::new(2, 3, vec![false; 6]).unwrap();
        assert_eq!(fuse_masks(&tissue, &none, &cat).unwrap(), tissue);
        let all = BinaryMask::new(2, 3, vec![true; 6]).unwrap();
        assert_eq!(
            fuse_masks(&tissue, &all, &cat).unwrap().count(ClassId(6)),
            6
        );
        let wrong = BinaryMask::new(3, 2, vec![false; 6]).unwrap();
        assert!(matches!(
            fuse_masks(&tissue, &wrong, &cat),
            Err(Error::Fusion(_))
        ));
    }

    #[test]
    fn split_counts_follow_reported_cohort() {
        let r = SplitRatios::new(61.0 / 76.0, 8.0 / 76.0, 7.0 / 76.0).unwrap();
        assert_eq!(split_counts(76, &r).unwrap(), [61, 8, 7]);
        let thirds = SplitRatios::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        assert_eq!(split_counts(3, &thirds).unwrap(), [1, 1, 1]);
        assert!(split_counts(2, &thirds).is_err());
        let skewed = SplitRatios::new(0.9, 0.05, 0.05).unwrap();
        assert_eq!(split_counts(5, &skewed).unwrap(), [3, 1, 1]);
        assert!(SplitRatios::new(0.71, 0.09, 0.08).is_err());
    }

    #[test]
    fn split_patients_is_deterministic_and_disjoint() {
        let ids: Vec<String> = (0..20).map(|i| format!("P{i:03}")).collect();
        let r = SplitRatios::default();
        let a = split_patients(&ids, &r, 11).unwrap();
        assert_eq!(a, split_patients(&ids, &r, 11).unwrap());
        let mut reversed = ids.clone();
        reversed.reverse();
        assert_eq!(a, split_patients(&reversed, &r, 11).unwrap());
        assert_eq!(a.len(), 20);
        assert_eq!(a.values().filter(|&&s| s == Split::Train).count(), 16);
        assert_ne!(a, split_patients(&ids, &r, 12).unwrap());
    }
}
