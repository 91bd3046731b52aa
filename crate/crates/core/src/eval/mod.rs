//! Real-vs-synthetic comparison: pixel-wise class distributions and a
//! Fréchet distance over mask feature embeddings.

mod fid;

pub use fid::{
    checkpoint_selection, extract_features, fid, fid_with, frechet_distance, FeatureExtractor,
    FeatureStats, FidRow, GeometricFeatures, SelectionReport, FID_JITTER,
};

use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::label::{encode_png, lesion_flag, ClassCatalog, ClassId, LabelMap};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub fractions: Vec<f64>,
}

impl ClassDistribution {
    pub fn classes(&self) -> usize {
        self.fractions.len()
    }
}

/// Fraction of all pixels in the corpus carrying each class.
pub fn class_distribution(masks: &[LabelMap], classes: usize) -> Result<ClassDistribution> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Eval("class distribution of an empty corpus".into()))?;
    let shape = (first.height(), first.width());
    let mut counts = vec![0u64; classes];
    for m in masks {
        if (m.height(), m.width()) != shape {
            return Err(Error::Shape(format!(
                "corpus mixes {}x{} and {}x{} masks",
                shape.0,
                shape.1,
                m.height(),
                m.width()
            )));
        }
        m.validate(classes)?;
        for (c, n) in m.histogram(classes).into_iter().enumerate() {
            counts[c] += n as u64;
        }
    }
    let total = (masks.len() * first.pixels()) as f64;
    Ok(ClassDistribution {
        fractions: counts.iter().map(|&n| n as f64 / total).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDelta {
    pub class: u8,
    pub name: Option<String>,
    pub real: f64,
    pub synth: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionReport {
    pub classes: Vec<ClassDelta>,
    pub total_variation: f64,
}

/// `0.5 * sum_c |p_c - q_c|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn distribution_report(
    real: &ClassDistribution,
    synth: &ClassDistribution,
    catalog: Option<&ClassCatalog>,
) -> Result<DistributionReport> {
    if real.classes() != synth.classes() {
        return Err(Error::Shape(format!(
            "distributions over {} and {} classes",
            real.classes(),
            synth.classes()
        )));
    }
    let classes = real
        .fractions
        .iter()
        .zip(&synth.fractions)
        .enumerate()
        .map(|(c, (&r, &s))| ClassDelta {
            class: c as u8,
            name: catalog
                .and_then(|k| k.name(ClassId(c as u8)))
                .map(str::to_string),
            real: r,
            synth: s,
            delta: s - r,
        })
        .collect();
    Ok(DistributionReport {
        classes,
        total_variation: total_variation(&real.fractions, &synth.fractions),
    })
}

const BAR_W: u32 = 18;
const GROUP_GAP: u32 = 14;
const CHART_H: u32 = 240;
const MARGIN: u32 = 10;

/// Paired bars per class, real on the left in grey, synthetic on the right in
/// the class color. Heights are on a square-root scale so rare classes stay
/// visible.
pub fn render_bar_chart(report: &DistributionReport, catalog: &ClassCatalog) -> Result<Vec<u8>> {
    let n = report.classes.len() as u32;
    let width = 2 * MARGIN + n * (2 * BAR_W + GROUP_GAP);
    let height = CHART_H + 2 * MARGIN;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let base = MARGIN + CHART_H;
    let mut bar = |x0: u32, frac: f64, color: [u8; 3]| {
        let h = (frac.clamp(0.0, 1.0).sqrt() * CHART_H as f64).round() as u32;
        for x in x0..x0 + BAR_W {
            for y in base - h..base {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    };
    for (k, row) in report.classes.iter().enumerate() {
        let x = MARGIN + k as u32 * (2 * BAR_W + GROUP_GAP);
        let color = catalog.color(ClassId(row.class)).unwrap_or([0, 0, 0]);
        bar(x, row.real, [150, 150, 150]);
        bar(x + BAR_W, row.synth, color);
    }
    for x in MARGIN..width - MARGIN {
        img.put_pixel(x, base, Rgb([0, 0, 0]));
    }
    encode_png(image::DynamicImage::ImageRgb8(img))
}

/// Splits a corpus into (lesion-free, lesion-bearing) cohorts.
pub fn split_by_prompt(
    masks: &[LabelMap],
    catalog: &ClassCatalog,
) -> (Vec<LabelMap>, Vec<LabelMap>) {
    masks
        .iter()
        .cloned()
        .partition(|m| lesion_flag(m, catalog) == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_only() {
        let d = class_distribution(&[LabelMap::filled(4, 4, ClassId(0)).unwrap()], 7).unwrap();
        assert_eq!(d.fractions, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(class_distribution(&[], 7).is_err());
    }

    #[test]
    fn half_and_half() {
        let mut m = LabelMap::filled(2, 2, ClassId(0)).unwrap();
        m.set(1, 0, ClassId(4));
        m.set(1, 1, ClassId(4));
        let d = class_distribution(&[m], 7).unwrap();
        assert_eq!(d.fractions[0], 0.5);
        assert_eq!(d.fractions[4], 0.5);
    }

    #[test]
    fn tv_extremes() {
        let a = ClassDistribution {
            fractions: vec![1.0, 0.0, 0.0],
        };
        let b = ClassDistribution {
            fractions: vec![0.0, 1.0, 0.0],
        };
        assert_eq!(
            distribution_report(&a, &a, None).unwrap().total_variation,
            0.0
        );
        assert_eq!(
            distribution_report(&a, &b, None).unwrap().total_variation,
            1.0
        );
    }

    #[test]
    fn chart_renders() {
        let cat = ClassCatalog::brain_ct();
        let d = class_distribution(&[LabelMap::filled(4, 4, ClassId(2)).unwrap()], 7).unwrap();
        let r = distribution_report(&d, &d, Some(&cat)).unwrap();
        let png = render_bar_chart(&r, &cat).unwrap();
        assert_eq!(&png[1..4], b"PNG");
        assert_eq!(r.classes[2].name.as_deref(), Some("bone"));
    }
}
