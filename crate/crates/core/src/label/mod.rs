//! The discrete label space and mask-level primitives.

mod catalog;
mod format;

pub use catalog::{ClassCatalog, ClassEntry};
pub(crate) use format::encode_png;
pub use format::{
    decode_iism, encode_iism, read_label_file, read_label_png, render_png, write_iism,
    write_label_png, IISM_MAGIC, IISM_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Number of classes in the default brain CT label space.
pub const DEFAULT_CLASSES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An `H x W` grid of class ids, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "label map must be at least 1x1, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "label map {height}x{width} needs {} cells, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class: ClassId) -> Result<Self> {
        Self::new(height, width, vec![class.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, row: usize, col: usize) -> ClassId {
        ClassId(self.data[row * self.width + col])
    }

    pub fn set(&mut self, row: usize, col: usize, class: ClassId) {
        self.data[row * self.width + col] = class.0;
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    /// Checks every cell against a class count.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self.data.iter().position(|&v| v as usize >= classes) {
            None => Ok(()),
            Some(p) => Err(Error::LabelOutOfRange {
                row: p / self.width,
                col: p % self.width,
                label: self.data[p],
                classes,
            }),
        }
    }

    pub fn count(&self, class: ClassId) -> usize {
        self.data.iter().filter(|&&v| v == class.0).count()
    }

    pub fn histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes.max(1)];
        for &v in &self.data {
            if (v as usize) < h.len() {
                h[v as usize] += 1;
            }
        }
        h
    }
}

/// `C x H x W` one-hot encoding of a [`LabelMap`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotMask {
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl OneHotMask {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, channel: usize) -> &[u8] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Dense logits equal to `scale` on the active channel and 0 elsewhere.
    pub fn as_logits<F: Scalar>(&self, scale: F) -> LogitField<F> {
        LogitField {
            classes: self.classes,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&b| if b == 1 { scale } else { F::zero() })
                .collect(),
        }
    }
}

/// Per-pixel class logits, `C x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitField<F = f32> {
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> LogitField<F> {
    pub fn new(classes: usize, height: usize, width: usize, data: Vec<F>) -> Result<Self> {
        if classes == 0 || height == 0 || width == 0 || data.len() != classes * height * width {
            return Err(Error::Shape(format!(
                "logit field {classes}x{height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(LogitField {
            classes,
            height,
            width,
            data,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> F {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }
}

pub fn onehot(map: &LabelMap, classes: usize) -> Result<OneHotMask> {
    map.validate(classes)?;
    let plane = map.pixels();
    let mut data = vec![0u8; classes * plane];
    for (p, &v) in map.data.iter().enumerate() {
        data[v as usize * plane + p] = 1;
    }
    Ok(OneHotMask {
        classes,
        height: map.height,
        width: map.width,
        data,
    })
}

/// Pixel-wise argmax over channels; ties go to the lowest channel index.
pub fn argmax_decode<F: Scalar>(logits: &LogitField<F>) -> Result<LabelMap> {
    let plane = logits.height * logits.width;
    let mut out = vec![0u8; plane];
    for (p, slot) in out.iter_mut().enumerate() {
        let mut best = 0usize;
        let mut best_value = F::neg_infinity();
        for c in 0..logits.classes {
            let v = logits.data[c * plane + p];
            if !v.is_finite() {
                return Err(Error::InvalidLogit {
                    channel: c,
                    row: p / logits.width,
                    col: p % logits.width,
                    value: v.as_f64(),
                });
            }
            if v > best_value {
                best = c;
                best_value = v;
            }
        }
        *slot = best as u8;
    }
    LabelMap::new(logits.height, logits.width, out)
}

/// Nearest-neighbour resize with pixel-centre sampling: output `(i, j)` reads
/// source `(floor((i + 0.5) * H / h), floor((j + 0.5) * W / w))`.
pub fn resize_nearest(map: &LabelMap, height: usize, width: usize) -> Result<LabelMap> {
    if height == 0 || width == 0 {
        return Err(Error::Shape(format!("cannot resize to {height}x{width}")));
    }
    if (height, width) == (map.height, map.width) {
        return Ok(map.clone());
    }
    let cols: Vec<usize> = (0..width)
        .map(|j| (2 * j + 1) * map.width / (2 * width))
        .collect();
    let mut data = Vec::with_capacity(height * width);
    for i in 0..height {
        let si = (2 * i + 1) * map.height / (2 * height);
        let row = &map.data[si * map.width..(si + 1) * map.width];
        data.extend(cols.iter().map(|&sj| row[sj]));
    }
    LabelMap::new(height, width, data)
}

/// The binary prompt: 1 iff any pixel carries the catalog's lesion class.
pub fn lesion_flag(map: &LabelMap, catalog: &ClassCatalog) -> u8 {
    let lesion = catalog.lesion_class().0;
    map.data.contains(&lesion) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(rows: &[&[u8]]) -> LabelMap {
        let h = rows.len();
        let w = rows[0].len();
        LabelMap::new(h, w, rows.concat()).unwrap()
    }

    #[test]
    fn onehot_small_example() {
        let m = map(&[&[0, 6], &[2, 0]]);
        let x = onehot(&m, 7).unwrap();
        assert_eq!(x.channel(0), &[1, 0, 0, 1]);
        assert_eq!(x.channel(6), &[0, 1, 0, 0]);
        assert_eq!(x.channel(2), &[0, 0, 1, 0]);
        for c in [1, 3, 4, 5] {
            assert!(x.channel(c).iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn onehot_single_class() {
        let x = onehot(&LabelMap::filled(4, 4, ClassId(0)).unwrap(), 7).unwrap();
        assert!(x.channel(0).iter().all(|&v| v == 1));
        assert!((1..7).all(|c| x.channel(c).iter().all(|&v| v == 0)));
    }

    #[test]
    fn onehot_rejects_out_of_range_label() {
        let m = map(&[&[0, 1], &[7, 0]]);
        match onehot(&m, 7) {
            Err(Error::LabelOutOfRange {
                row: 1,
                col: 0,
                label: 7,
                classes: 7,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn argmax_unique_max_and_ties() {
        let l = LogitField::new(7, 1, 1, vec![0.1f64, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(argmax_decode(&l).unwrap().get(0, 0), ClassId(1));
        let tie = LogitField::new(7, 1, 1, vec![0.3f32; 7]).unwrap();
        assert_eq!(argmax_decode(&tie).unwrap().get(0, 0), ClassId(0));
    }

    #[test]
    fn argmax_rejects_nan() {
        let l = LogitField::new(3, 1, 2, vec![0.0f32, 1.0, f32::NAN, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            argmax_decode(&l),
            Err(Error::InvalidLogit {
                channel: 1,
                col: 0,
                ..
            })
        ));
    }

    #[test]
    fn argmax_of_scaled_onehot_is_identity() {
        let m = map(&[&[0, 1, 2], &[3, 4, 5], &[6, 6, 0]]);
        let x = onehot(&m, 7).unwrap();
        assert_eq!(argmax_decode(&x.as_logits(10.0f32)).unwrap(), m);
    }

    #[test]
    fn resize_block_replicates_on_upscale() {
        let m = map(&[&[0, 1], &[2, 3]]);
        let r = resize_nearest(&m, 4, 4).unwrap();
        // center-sampling oracle: source = floor((i + 0.5) * 2 / 4)
        let mut expect = vec![0u8; 16];
        for i in 0..4 {
            for j in 0..4 {
                let si = ((i as f64 + 0.5) * 2.0 / 4.0).floor() as usize;
                let sj = ((j as f64 + 0.5) * 2.0 / 4.0).floor() as usize;
                expect[i * 4 + j] = m.get(si, sj).0;
            }
        }
        assert_eq!(r.as_bytes(), expect.as_slice());
        assert_eq!(
            r,
            map(&[&[0, 0, 1, 1], &[0, 0, 1, 1], &[2, 2, 3, 3], &[2, 2, 3, 3]])
        );
    }

    #[test]
    fn resize_identity_and_constant() {
        let m = map(&[&[0, 1, 2], &[3, 4, 5]]);
        assert_eq!(resize_nearest(&m, 2, 3).unwrap(), m);
        let c = LabelMap::filled(5, 3, ClassId(4)).unwrap();
        let r = resize_nearest(&c, 11, 2).unwrap();
        assert_eq!((r.height(), r.width()), (11, 2));
        assert_eq!(r.count(ClassId(4)), 22);
    }

    #[test]
    fn zero_sized_map_rejected() {
        assert!(LabelMap::new(0, 4, vec![]).is_err());
        assert!(LabelMap::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn lesion_flag_definition() {
        let cat = ClassCatalog::brain_ct();
        let mut m = LabelMap::filled(8, 8, ClassId(0)).unwrap();
        assert_eq!(lesion_flag(&m, &cat), 0);
        m.set(3, 5, cat.lesion_class());
        assert_eq!(lesion_flag(&m, &cat), 1);
    }

    fn arb_map(max: usize, classes: u8) -> impl Strategy<Value = LabelMap> {
        (1..=max, 1..=max).prop_flat_map(move |(h, w)| {
            proptest::collection::vec(0..classes, h * w)
                .prop_map(move |d| LabelMap::new(h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn onehot_argmax_roundtrip(m in arb_map(12, 7)) {
            let x = onehot(&m, 7).unwrap();
            prop_assert_eq!(argmax_decode(&x.as_logits(1.0f32)).unwrap(), m.clone());
            for i in 0..m.height() {
                for j in 0..m.width() {
                    let s: u32 = (0..7).map(|c| x.get(c, i, j) as u32).sum();
                    prop_assert_eq!(s, 1);
                }
            }
        }

        #[test]
        fn resize_preserves_label_set(m in arb_map(10, 7), h in 1usize..20, w in 1usize..20) {
            let r = resize_nearest(&m, h, w).unwrap();
            let src = m.histogram(7);
            for (c, &n) in r.histogram(7).iter().enumerate() {
                prop_assert!(n == 0 || src[c] > 0);
            }
        }

        #[test]
        fn argmax_invariant_to_shift_and_positive_scale(
            vals in proptest::collection::vec(-5.0f64..5.0, 7 * 6),
            shifts in proptest::collection::vec(-100.0f64..100.0, 6),
            scale in 0.01f64..50.0,
        ) {
            let base = LogitField::new(7, 2, 3, vals.clone()).unwrap();
            let mut moved = vals.clone();
            for c in 0..7 {
                for p in 0..6 {
                    moved[c * 6 + p] = vals[c * 6 + p] * scale + shifts[p];
                }
            }
            let moved = LogitField::new(7, 2, 3, moved).unwrap();
            prop_assert_eq!(argmax_decode(&base).unwrap(), argmax_decode(&moved).unwrap());
        }
    }
}
