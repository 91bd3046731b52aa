//! Deterministic synthetic brain-like label maps.
//!
//! Slices are nested ellipses (scalp, skull, CSF, gray matter, white matter)
//! with optional elliptical infarct blobs placed strictly inside the
//! parenchyma. Each slice draws from its own named random stream keyed by
//! `(seed, patient, slice)`, so any slice can be regenerated in isolation.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_patients, Manifest, SliceRecord, SplitSpec, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::label::{write_iism, ClassCatalog, ClassId, LabelMap};
use crate::rng::{self, StreamRng};

const BACKGROUND: u8 = 0;
const SOFT_TISSUE: u8 = 1;
const BONE: u8 = 2;
const CSF: u8 = 3;
const GRAY: u8 = 4;
const WHITE: u8 = 5;
const INFARCT: u8 = 6;

const PLACEMENT_ATTEMPTS: usize = 64;

/// Outer boundary of each tissue as a fraction of the half image size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueRadii {
    pub scalp: f64,
    pub bone: f64,
    pub csf: f64,
    pub gray: f64,
    pub white: f64,
}

impl Default for TissueRadii {
    fn default() -> Self {
        TissueRadii {
            scalp: 0.94,
            bone: 0.85,
            csf: 0.77,
            gray: 0.71,
            white: 0.50,
        }
    }
}

impl TissueRadii {
    fn as_array(&self) -> [f64; 5] {
        [self.scalp, self.bone, self.csf, self.gray, self.white]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub image_size: usize,
    pub lesion_probability: f64,
    /// Lesion semi-axis range in pixels.
    pub lesion_radius_range: (f64, f64),
    pub second_lesion_probability: f64,
    pub tissue_radii: TissueRadii,
    pub seed: u64,
    pub slices_per_volume: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            image_size: 64,
            lesion_probability: 0.3,
            lesion_radius_range: (6.0, 12.0),
            second_lesion_probability: 0.15,
            tissue_radii: TissueRadii::default(),
            seed: 0,
            slices_per_volume: 40,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size < 8 {
            return bad(format!(
                "image_size must be at least 8, got {}",
                self.image_size
            ));
        }
        for (name, p) in [
            ("lesion_probability", self.lesion_probability),
            ("second_lesion_probability", self.second_lesion_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        let (lo, hi) = self.lesion_radius_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "lesion_radius_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            ));
        }
        let radii = self.tissue_radii.as_array();
        if radii[0] > 1.0 || radii.windows(2).any(|w| w[0] <= w[1]) || radii[4] <= 0.0 {
            return bad(format!(
                "tissue radii must strictly decrease inward within (0, 1], got {radii:?}"
            ));
        }
        if self.slices_per_volume == 0 {
            return bad("slices_per_volume must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhantomSlice {
    pub map: LabelMap,
    pub has_lesion: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhantomVolume {
    pub patient_id: String,
    pub slices: Vec<PhantomSlice>,
}

impl PhantomVolume {
    pub fn cranial_height(&self) -> usize {
        self.slices.len()
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Normalized elliptical radius of a point; `<= 1` means inside.
    fn rho(&self, y: f64, x: f64) -> f64 {
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = dy * self.cos - dx * self.sin;
        let v = dy * self.sin + dx * self.cos;
        ((u / self.ry).powi(2) + (v / self.rx).powi(2)).sqrt()
    }
}

/// Head geometry for one slice; `scale` shrinks the whole head.
fn tissue_map(cfg: &PhantomConfig, scale: f64, rng: &mut StreamRng) -> LabelMap {
    let n = cfg.image_size;
    let half = n as f64 / 2.0;
    let size = half * scale * rng.gen_range(0.95..1.03);
    let head = Ellipse {
        cy: half + rng.gen_range(-1.5..1.5),
        cx: half + rng.gen_range(-1.5..1.5),
        ry: size,
        rx: size * rng.gen_range(0.80..0.90),
        cos: 0.0,
        sin: 0.0,
    };
    let angle: f64 = rng.gen_range(-0.15..0.15);
    let head = Ellipse {
        cos: angle.cos(),
        sin: angle.sin(),
        ..head
    };
    // Independent boundary jitter, re-sorted so rings stay nested.
    let mut radii = cfg
        .tissue_radii
        .as_array()
        .map(|r| r * rng.gen_range(0.97..1.03));
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let classes = [SOFT_TISSUE, BONE, CSF, GRAY, WHITE];
    let mut data = vec![BACKGROUND; n * n];
    for i in 0..n {
        for j in 0..n {
            let rho = head.rho(i as f64 + 0.5, j as f64 + 0.5);
            let mut label = BACKGROUND;
            for (r, c) in radii.iter().zip(classes) {
                if rho <= *r {
                    label = c;
                }
            }
            data[i * n + j] = label;
        }
    }
    LabelMap::new(n, n, data).expect("square phantom grid")
}

fn is_parenchyma(label: u8) -> bool {
    label == GRAY || label == WHITE
}

/// Pixels of a random lesion fully inside parenchyma, or `None` when no
/// placement fits.
fn place_lesion(cfg: &PhantomConfig, tissue: &LabelMap, rng: &mut StreamRng) -> Option<Vec<usize>> {
    let n = cfg.image_size;
    let (lo, hi) = cfg.lesion_radius_range;
    let ry = rng.gen_range(lo..=hi);
    let rx = rng.gen_range(lo..=hi);
    let angle = rng.gen_range(0.0..PI);
    let candidates: Vec<usize> = (0..n * n)
        .filter(|&p| is_parenchyma(tissue.as_bytes()[p]))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = candidates[rng.gen_range(0..candidates.len())];
        let blob = Ellipse {
            cy: (p / n) as f64 + rng.gen_range(0.0..1.0),
            cx: (p % n) as f64 + rng.gen_range(0.0..1.0),
            ry,
            rx,
            cos: angle.cos(),
            sin: angle.sin(),
        };
        let reach = ry.max(rx).ceil() as isize + 1;
        let (ci, cj) = (blob.cy as isize, blob.cx as isize);
        let mut pixels = Vec::new();
        let mut fits = true;
        'scan: for i in (ci - reach)..=(ci + reach) {
            for j in (cj - reach)..=(cj + reach) {
                if blob.rho(i as f64 + 0.5, j as f64 + 0.5) > 1.0 {
                    continue;
                }
                if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                    fits = false;
                    break 'scan;
                }
                let idx = i as usize * n + j as usize;
                if !is_parenchyma(tissue.as_bytes()[idx]) {
                    fits = false;
                    break 'scan;
                }
                pixels.push(idx);
            }
        }
        if fits && !pixels.is_empty() {
            return Some(pixels);
        }
    }
    None
}

fn render_slice(cfg: &PhantomConfig, scale: f64, rng: &mut StreamRng) -> PhantomSlice {
    let tissue = tissue_map(cfg, scale, rng);
    let mut blobs = Vec::new();
    if rng.gen_bool(cfg.lesion_probability) {
        if let Some(b) = place_lesion(cfg, &tissue, rng) {
            blobs.push(b);
            if rng.gen_bool(cfg.second_lesion_probability) {
                blobs.extend(place_lesion(cfg, &tissue, rng));
            }
        }
    }
    let has_lesion = !blobs.is_empty();
    let mut data = tissue.into_bytes();
    for p in blobs.into_iter().flatten() {
        data[p] = INFARCT;
    }
    let n = cfg.image_size;
    PhantomSlice {
        map: LabelMap::new(n, n, data).expect("square phantom grid"),
        has_lesion,
    }
}

/// One full-size slice drawn from `rng`.
pub fn generate_slice(cfg: &PhantomConfig, rng: &mut StreamRng) -> Result<PhantomSlice> {
    cfg.validate()?;
    Ok(render_slice(cfg, 1.0, rng))
}

/// Head scale along the volume axis: smallest at the ends, 1 mid-volume.
pub fn volume_profile(slice: usize, slices: usize) -> f64 {
    let s = (slice as f64 + 0.5) / slices as f64;
    0.6 + 0.4 * (PI * s).sin()
}

pub fn generate_volume(cfg: &PhantomConfig, patient_id: &str) -> Result<PhantomVolume> {
    cfg.validate()?;
    let slices = (0..cfg.slices_per_volume)
        .map(|k| {
            let mut r = rng::stream2(cfg.seed, "phantom", patient_id, k as u64);
            render_slice(cfg, volume_profile(k, cfg.slices_per_volume), &mut r)
        })
        .collect();
    Ok(PhantomVolume {
        patient_id: patient_id.to_string(),
        slices,
    })
}

pub fn patient_id(index: usize) -> String {
    format!("P{index:04}")
}

pub fn slice_file_name(index: usize) -> String {
    format!("{index:04}.iism")
}

/// Writes `n_patients` volumes as IISM1 files under `out_dir` together with a
/// manifest and returns the manifest.
pub fn generate_corpus(
    cfg: &PhantomConfig,
    n_patients: usize,
    out_dir: &Path,
    split: &SplitSpec,
) -> Result<Manifest> {
    cfg.validate()?;
    let catalog = ClassCatalog::brain_ct();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ids: Vec<String> = (0..n_patients).map(patient_id).collect();
    let assignment = if ids.is_empty() {
        Default::default()
    } else {
        split_patients(&ids, &split.ratios, split.seed)?
    };
    let mut records = Vec::with_capacity(n_patients * cfg.slices_per_volume);
    for id in &ids {
        let volume = generate_volume(cfg, id)?;
        for (k, slice) in volume.slices.iter().enumerate() {
            let rel = format!("{id}/{}", slice_file_name(k));
            write_iism(&out_dir.join(&rel), &slice.map, catalog.len())?;
            records.push(SliceRecord {
                patient_id: id.clone(),
                slice_index: k as u32,
                path: rel,
                lesion: slice.has_lesion as u8,
                split: assignment[id],
            });
        }
    }
    let manifest = Manifest::new(catalog, (cfg.image_size, cfg.image_size), records, out_dir)?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Class id helper for tests and callers that build phantoms by hand.
pub fn infarct_class() -> ClassId {
    ClassId(INFARCT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{lesion_flag, onehot};

    fn cfg(p: f64) -> PhantomConfig {
        PhantomConfig {
            lesion_probability: p,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_lesion_probabilities() {
        let cat = ClassCatalog::brain_ct();
        for k in 0..30 {
            let mut r = rng::stream(1, "t", k);
            let s = generate_slice(&cfg(0.0), &mut r).unwrap();
            assert_eq!(s.map.count(cat.lesion_class()), 0);
            assert!(!s.has_lesion);
            let mut r = rng::stream(1, "t", k);
            let s = generate_slice(&cfg(1.0), &mut r).unwrap();
            assert!(s.has_lesion);
            assert_eq!(lesion_flag(&s.map, &cat), 1);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_slice(&cfg(0.5), &mut rng::stream(9, "s", 0)).unwrap();
        let b = generate_slice(&cfg(0.5), &mut rng::stream(9, "s", 0)).unwrap();
        assert_eq!(a.map.as_bytes(), b.map.as_bytes());
    }

    #[test]
    fn lesion_that_cannot_fit_is_skipped() {
        let c = PhantomConfig {
            lesion_probability: 1.0,
            lesion_radius_range: (40.0, 50.0),
            ..cfg(1.0)
        };
        let s = generate_slice(&c, &mut rng::stream(2, "big", 0)).unwrap();
        assert!(!s.has_lesion);
        assert_eq!(s.map.count(infarct_class()), 0);
    }

    #[test]
    fn lesions_stay_inside_parenchyma() {
        let with = cfg(1.0);
        for k in 0..20 {
            let mut r = rng::stream(5, "inside", k);
            let slice = generate_slice(&with, &mut r).unwrap();
            // Same stream prefix, so the tissue geometry is identical.
            let mut r = rng::stream(5, "inside", k);
            let tissue = tissue_map(&with, 1.0, &mut r);
            for (p, &v) in slice.map.as_bytes().iter().enumerate() {
                if v == INFARCT {
                    assert!(is_parenchyma(tissue.as_bytes()[p]));
                } else {
                    assert_eq!(v, tissue.as_bytes()[p]);
                }
            }
            assert!(onehot(&slice.map, 7).is_ok());
        }
    }

    #[test]
    fn volume_profile_peaks_mid_volume() {
        let v = generate_volume(
            &PhantomConfig {
                slices_per_volume: 100,
                ..cfg(0.0)
            },
            "A",
        )
        .unwrap();
        assert_eq!(v.cranial_height(), 100);
        let brain = |s: &PhantomSlice| {
            s.map
                .as_bytes()
                .iter()
                .filter(|&&x| is_parenchyma(x))
                .count()
        };
        assert!(brain(&v.slices[50]) >= brain(&v.slices[0]));
        assert!(brain(&v.slices[50]) >= brain(&v.slices[99]));
        assert!(v
            .slices
            .iter()
            .all(|s| s.map.height() == 64 && s.map.width() == 64));
    }

    #[test]
    fn patient_id_changes_volume() {
        let c = PhantomConfig {
            slices_per_volume: 5,
            ..cfg(0.3)
        };
        let a = generate_volume(&c, "P0000").unwrap();
        let b = generate_volume(&c, "P0001").unwrap();
        assert_ne!(a.slices, b.slices);
        assert_eq!(a, generate_volume(&c, "P0000").unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(PhantomConfig {
            lesion_probability: 1.5,
            ..cfg(0.0)
        }
        .validate()
        .is_err());
        let mut radii = TissueRadii::default();
        radii.csf = radii.bone;
        assert!(PhantomConfig {
            tissue_radii: radii,
            ..cfg(0.0)
        }
        .validate()
        .is_err());
        assert!(PhantomConfig {
            slices_per_volume: 0,
            ..cfg(0.0)
        }
        .validate()
        .is_err());
        assert!(PhantomConfig {
            lesion_radius_range: (5.0, 2.0),
            ..cfg(0.0)
        }
        .validate()
        .is_err());
    }
}
