use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::label::LabelMap;

/// Added to both covariance diagonals before the Fréchet distance in [`fid`].
pub const FID_JITTER: f64 = 1e-6;
const EIGEN_TOLERANCE: f64 = 1e-8;

/// Maps a label map to a fixed-length feature vector.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, map: &LabelMap) -> Result<Vec<f64>>;
}

/// Per class: area fraction, centroid row and column, and row and column
/// variance, all on coordinates normalized by the image size. Absent classes
/// get centroid `(0.5, 0.5)` and zero variance. `5 * classes` values.
#[derive(Clone, Copy, Debug)]
pub struct GeometricFeatures {
    pub classes: usize,
}

impl FeatureExtractor for GeometricFeatures {
    fn dim(&self) -> usize {
        5 * self.classes
    }

    fn extract(&self, map: &LabelMap) -> Result<Vec<f64>> {
        map.validate(self.classes)?;
        let c = self.classes;
        let (h, w) = (map.height(), map.width());
        let mut count = vec![0f64; c];
        let mut sum = vec![[0f64; 2]; c];
        let mut sq = vec![[0f64; 2]; c];
        for i in 0..h {
            let r = i as f64 / h as f64;
            for j in 0..w {
                let col = j as f64 / w as f64;
                let k = map.get(i, j).index();
                count[k] += 1.0;
                sum[k][0] += r;
                sum[k][1] += col;
                sq[k][0] += r * r;
                sq[k][1] += col * col;
            }
        }
        let total = (h * w) as f64;
        let mut f = vec![0.0; 5 * c];
        for k in 0..c {
            f[k] = count[k] / total;
            if count[k] > 0.0 {
                for a in 0..2 {
                    let mean = sum[k][a] / count[k];
                    f[c + 2 * k + a] = mean;
                    f[3 * c + 2 * k + a] = (sq[k][a] / count[k] - mean * mean).max(0.0);
                }
            } else {
                f[c + 2 * k] = 0.5;
                f[c + 2 * k + 1] = 0.5;
            }
        }
        Ok(f)
    }
}

/// [`GeometricFeatures`] of one map.
pub fn extract_features(map: &LabelMap, classes: usize) -> Result<Vec<f64>> {
    GeometricFeatures { classes }.extract(map)
}

/// Gaussian summary of a feature corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

fn pairwise_sum(rows: &[Vec<f64>], f: &dyn Fn(&[f64], &mut [f64]), dim: usize) -> Vec<f64> {
    if rows.len() <= 8 {
        let mut acc = vec![0.0; dim];
        for r in rows {
            f(r, &mut acc);
        }
        return acc;
    }
    let (a, b) = rows.split_at(rows.len() / 2);
    let mut left = pairwise_sum(a, f, dim);
    for (l, r) in left.iter_mut().zip(pairwise_sum(b, f, dim)) {
        *l += r;
    }
    left
}

impl FeatureStats {
    /// Sample mean and unbiased covariance. Sums are reduced pairwise.
    pub fn from_features(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Eval(format!(
                "feature statistics need at least 2 samples, got {n}"
            )));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("feature rows differ in length".into()));
        }
        let mean: Vec<f64> = pairwise_sum(
            rows,
            &|r, acc| acc.iter_mut().zip(r).for_each(|(a, v)| *a += v),
            dim,
        )
        .into_iter()
        .map(|s| s / n as f64)
        .collect();
        let centered = |r: &[f64], acc: &mut [f64]| {
            for i in 0..dim {
                let di = r[i] - mean[i];
                for j in i..dim {
                    acc[i * dim + j] += di * (r[j] - mean[j]);
                }
            }
        };
        let upper = pairwise_sum(rows, &centered, dim * dim);
        let mut cov = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = upper[i * dim + j] / (n - 1) as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(FeatureStats {
            mean: DVector::from_vec(mean),
            covariance: cov,
            count: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn with_jitter(&self, jitter: f64) -> Self {
        let mut s = self.clone();
        for i in 0..s.dim() {
            s.covariance[(i, i)] += jitter;
        }
        s
    }
}

/// Eigenvalues below `-tol * scale` are an error; the rest are clamped at 0.
fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -EIGEN_TOLERANCE * scale {
            return Err(Error::Numerical(format!(
                "{what} is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
///
/// The trace of the product root is taken as `tr((A^{1/2} S_b A^{1/2})^{1/2})`
/// with `A^{1/2}` the symmetric root of `S_a`, which has the same eigenvalues
/// as `S_a S_b` but stays symmetric.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "feature sizes {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let root_a = psd_sqrt(&a.covariance, "first covariance")?;
    let inner = &root_a * &b.covariance * &root_a;
    let cross = psd_sqrt(&inner, "covariance product")?.trace();
    let d = diff + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Fréchet distance between the feature statistics of two corpora.
pub fn fid_with(
    extractor: &dyn FeatureExtractor,
    real: &[LabelMap],
    synth: &[LabelMap],
) -> Result<f64> {
    let need = extractor.dim() + 1;
    for (name, corpus) in [("real", real), ("synthetic", synth)] {
        if corpus.len() < need {
            return Err(Error::Eval(format!(
                "{name} corpus has {} masks; FID over {} features needs at least {need}",
                corpus.len(),
                extractor.dim()
            )));
        }
    }
    let stats = |corpus: &[LabelMap]| -> Result<FeatureStats> {
        let rows = corpus
            .iter()
            .map(|m| extractor.extract(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureStats::from_features(&rows)?.with_jitter(FID_JITTER))
    };
    frechet_distance(&stats(real)?, &stats(synth)?)
}

/// [`fid_with`] on [`GeometricFeatures`].
pub fn fid(real: &[LabelMap], synth: &[LabelMap], classes: usize) -> Result<f64> {
    fid_with(&GeometricFeatures { classes }, real, synth)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidRow {
    pub epoch: u64,
    pub fid: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    /// Sorted by epoch.
    pub rows: Vec<FidRow>,
    pub best_epoch: u64,
    pub best_fid: f64,
}

impl SelectionReport {
    /// Plain-text table, best row marked with `*`.
    pub fn table(&self) -> String {
        let mut s = String::from("epoch\tFID\n");
        for r in &self.rows {
            let mark = if r.epoch == self.best_epoch {
                "\t*"
            } else {
                ""
            };
            s.push_str(&format!("{}\t{:.2}{}\n", r.epoch, r.fid, mark));
        }
        s
    }
}

/// Samples `n` masks from every checkpoint with the same seed and scores each
/// against `real`. Ties go to the earlier epoch.
pub fn checkpoint_selection<C, S>(
    checkpoints: &[(u64, C)],
    real: &[LabelMap],
    classes: usize,
    n: usize,
    seed: u64,
    mut sample: S,
) -> Result<SelectionReport>
where
    S: FnMut(&C, usize, u64) -> Result<Vec<LabelMap>>,
{
    if checkpoints.is_empty() {
        return Err(Error::Eval(
            "checkpoint selection needs at least one checkpoint".into(),
        ));
    }
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by_key(|&i| checkpoints[i].0);
    let mut rows = Vec::with_capacity(order.len());
    for i in order {
        let (epoch, ckpt) = &checkpoints[i];
        let synth = sample(ckpt, n, seed)?;
        rows.push(FidRow {
            epoch: *epoch,
            fid: fid(real, &synth, classes)?,
        });
    }
    let best = rows
        .iter()
        .fold(&rows[0], |b, r| if r.fid < b.fid { r } else { b })
        .clone();
    Ok(SelectionReport {
        rows,
        best_epoch: best.epoch,
        best_fid: best.fid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats1(mean: f64, var: f64) -> FeatureStats {
        FeatureStats {
            mean: DVector::from_vec(vec![mean]),
            covariance: DMatrix::from_vec(1, 1, vec![var]),
            count: 10,
        }
    }

    #[test]
    fn one_dimensional_closed_forms() {
        let d = frechet_distance(&stats1(0.0, 1.0), &stats1(0.3, 1.0)).unwrap();
        assert!((d - 0.09).abs() < 1e-9);
        let d = frechet_distance(&stats1(0.0, 1.0), &stats1(0.0, 9.0)).unwrap();
        assert!((d - 4.0).abs() < 1e-9);
    }

    #[test]
    fn background_features() {
        let m = LabelMap::filled(4, 4, crate::label::ClassId(0)).unwrap();
        let f = extract_features(&m, 7).unwrap();
        assert_eq!(f.len(), 35);
        assert_eq!(f[0], 1.0);
        assert!(f[1..7].iter().all(|&v| v == 0.0));
        assert!((f[7] - 0.375).abs() < 1e-15);
        assert!((f[8] - 0.375).abs() < 1e-15);
        assert_eq!(f[9], 0.5);
    }

    #[test]
    fn unbiased_covariance() {
        let s = FeatureStats::from_features(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(s.mean[0], 2.0);
        assert_eq!(s.covariance[(0, 0)], 2.0);
        assert!(FeatureStats::from_features(&[vec![1.0]]).is_err());
    }

    #[test]
    fn selection_argmin_and_order() {
        let real: Vec<LabelMap> = (0..40)
            .map(|k| {
                let mut m = LabelMap::filled(8, 8, crate::label::ClassId(0)).unwrap();
                m.set(k % 8, (k / 8) % 8, crate::label::ClassId(1));
                m
            })
            .collect();
        let ckpts = vec![(800u64, 0usize), (100, 3), (400, 1)];
        let report = checkpoint_selection(&ckpts, &real, 2, 40, 0, |&shift, _, _| {
            Ok(real
                .iter()
                .map(|m| {
                    let mut out = m.clone();
                    if shift > 0 {
                        for i in 0..8 {
                            out.set(i, shift.min(7), crate::label::ClassId(1));
                        }
                    }
                    out
                })
                .collect())
        })
        .unwrap();
        assert_eq!(
            report.rows.iter().map(|r| r.epoch).collect::<Vec<_>>(),
            vec![100, 400, 800]
        );
        assert_eq!(report.best_epoch, 800);
        assert!(report.table().contains("800\t0.00\t*"));
    }
}
