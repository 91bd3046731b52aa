//! VAE objective terms and their gradients.

use super::GaussianPosterior;
use crate::error::{Error, Result};
use crate::label::{LabelMap, LogitField};
use crate::nn::Scalar;

/// Mean categorical cross-entropy over `batch * plane` pixels.
///
/// `logits` is channel-major `[C, N, P]`; `labels[n]` holds the `P` class ids
/// of item `n`. When `grad` is given it receives `d loss / d logits`.
pub(crate) fn cross_entropy_cnp<F: Scalar>(
    logits: &[F],
    labels: &[&[u8]],
    classes: usize,
    plane: usize,
    mut grad: Option<&mut [F]>,
) -> Result<f64> {
    let batch = labels.len();
    debug_assert_eq!(logits.len(), classes * batch * plane);
    let norm = 1.0 / (batch * plane) as f64;
    let scale = F::from_f64_lossy(norm);
    let mut total = 0.0f64;
    let mut probs = vec![F::zero(); classes];
    for (n, item) in labels.iter().enumerate() {
        for (p, &label) in item.iter().enumerate() {
            let label = label as usize;
            if label >= classes {
                return Err(Error::LabelOutOfRange {
                    row: p,
                    col: 0,
                    label: label as u8,
                    classes,
                });
            }
            let at = |c: usize| (c * batch + n) * plane + p;
            let mut max = F::neg_infinity();
            for c in 0..classes {
                max = max.max(logits[at(c)]);
            }
            let mut sum = F::zero();
            for (c, slot) in probs.iter_mut().enumerate() {
                *slot = (logits[at(c)] - max).exp();
                sum += *slot;
            }
            total += (sum.ln() + max - logits[at(label)]).as_f64();
            if let Some(g) = grad.as_deref_mut() {
                for (c, &e) in probs.iter().enumerate() {
                    let target = if c == label { F::one() } else { F::zero() };
                    g[at(c)] = (e / sum - target) * scale;
                }
            }
        }
    }
    Ok(total * norm)
}

/// Mean over pixels of the cross-entropy between `softmax(logits)` and `target`.
pub fn reconstruction_loss<F: Scalar>(logits: &LogitField<F>, target: &LabelMap) -> Result<f64> {
    check_shapes(logits, target)?;
    cross_entropy_cnp(
        logits.as_slice(),
        &[target.as_bytes()],
        logits.classes(),
        target.pixels(),
        None,
    )
}

/// Loss and its gradient with respect to the logits.
pub fn reconstruction_loss_grad<F: Scalar>(
    logits: &LogitField<F>,
    target: &LabelMap,
) -> Result<(f64, LogitField<F>)> {
    check_shapes(logits, target)?;
    let mut grad = vec![F::zero(); logits.as_slice().len()];
    let loss = cross_entropy_cnp(
        logits.as_slice(),
        &[target.as_bytes()],
        logits.classes(),
        target.pixels(),
        Some(&mut grad),
    )?;
    Ok((
        loss,
        LogitField::new(logits.classes(), logits.height(), logits.width(), grad)?,
    ))
}

fn check_shapes<F: Scalar>(logits: &LogitField<F>, target: &LabelMap) -> Result<()> {
    if (logits.height(), logits.width()) != (target.height(), target.width()) {
        return Err(Error::Shape(format!(
            "logits are {}x{} but target is {}x{}",
            logits.height(),
            logits.width(),
            target.height(),
            target.width()
        )));
    }
    target.validate(logits.classes())
}

/// `KL(q || N(0, I)) = 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)`.
pub fn kl_divergence<F: Scalar>(q: &GaussianPosterior<F>) -> f64 {
    q.mu.iter()
        .zip(&q.logvar)
        .map(|(&m, &lv)| {
            let (m, lv) = (m.as_f64(), lv.as_f64());
            0.5 * (m * m + lv.exp() - 1.0 - lv)
        })
        .sum()
}

/// Gradients of [`kl_divergence`] with respect to `(mu, logvar)`.
pub fn kl_divergence_grad<F: Scalar>(q: &GaussianPosterior<F>) -> (Vec<F>, Vec<F>) {
    let half = F::from_f64_lossy(0.5);
    let dmu = q.mu.clone();
    let dlv = q
        .logvar
        .iter()
        .map(|&lv| half * (lv.exp() - F::one()))
        .collect();
    (dmu, dlv)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub rec: f64,
    pub kl: f64,
}

impl VaeLoss {
    pub fn compose(rec: f64, kl: f64, beta: f64) -> Self {
        VaeLoss {
            total: rec + beta * kl,
            rec,
            kl,
        }
    }
}

/// `rec + beta * kl` for a single mask.
pub fn vae_loss<F: Scalar>(
    logits: &LogitField<F>,
    target: &LabelMap,
    q: &GaussianPosterior<F>,
    beta: f64,
) -> Result<VaeLoss> {
    Ok(VaeLoss::compose(
        reconstruction_loss(logits, target)?,
        kl_divergence(q),
        beta,
    ))
}
