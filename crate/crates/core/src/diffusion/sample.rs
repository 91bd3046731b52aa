use rand::Rng;
use rand_distr::StandardNormal;

use super::{prompt_bit, reverse_step_with, DiffusionModel};
use crate::error::{Error, Result};
use crate::label::{argmax_decode, LabelMap};
use crate::nn::{Matrix, Scalar};
use crate::rng::{self, StreamRng};
use crate::vae::{LatentCode, MaskVae};

const CHUNK: usize = 256;
const DECODE_CHUNK: usize = 32;

fn normals<F: Scalar>(rng: &mut StreamRng, n: usize) -> Vec<F> {
    (0..n)
        .map(|_| F::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Runs the reverse chain from `z_T ~ N(0, I)` to `z_0` for `n` items.
///
/// Item `i` draws only from stream `("sample", i)` under `seed`, so its result
/// does not depend on `n` or on how items are batched.
pub fn sample_latents<F: Scalar>(
    model: &DiffusionModel<F>,
    y: i64,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<F>>> {
    let y = prompt_bit(y)?;
    let d = model.latent_dim();
    let steps = model.steps();
    let final_noise = model.config.final_step_noise;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let mut rngs: Vec<StreamRng> = (start..end)
            .map(|i| rng::stream(seed, "sample", i as u64))
            .collect();
        let rows = rngs.len();
        let mut z: Vec<Vec<F>> = rngs.iter_mut().map(|r| normals(r, d)).collect();
        let ys = vec![y; rows];
        for t in (0..steps).rev() {
            let flat = Matrix::from_vec(rows, d, z.concat());
            let eps_hat = model
                .denoiser
                .predict_batch(&flat, &vec![t; rows], steps, &ys)?;
            for (r, (zi, rng)) in z.iter_mut().zip(rngs.iter_mut()).enumerate() {
                let xi = normals(rng, d);
                *zi = reverse_step_with(zi, t, eps_hat.row(r), &model.schedule, &xi, final_noise)?;
            }
        }
        if z.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "reverse chain produced a non-finite latent".into(),
            ));
        }
        out.extend(z);
    }
    Ok(out)
}

/// Samples `n` masks for prompt `y` and decodes them with the frozen VAE.
pub fn sample_masks<F: Scalar>(
    vae: &MaskVae<F>,
    model: &DiffusionModel<F>,
    y: i64,
    n: usize,
    seed: u64,
) -> Result<Vec<LabelMap>> {
    prompt_bit(y)?;
    if vae.latent_dim() != model.latent_dim() {
        return Err(Error::Config(format!(
            "checkpoint mismatch: VAE latent size {}, denoiser latent size {}",
            vae.latent_dim(),
            model.latent_dim()
        )));
    }
    let latents = sample_latents(model, y, n, seed)?;
    let mut masks = Vec::with_capacity(n);
    for chunk in latents.chunks(DECODE_CHUNK) {
        let codes: Vec<LatentCode<F>> = chunk
            .iter()
            .map(|z| LatentCode::new(z.clone()))
            .collect::<Result<_>>()?;
        let refs: Vec<&LatentCode<F>> = codes.iter().collect();
        for logits in vae.decode_batch(&refs)? {
            masks.push(argmax_decode(&logits)?);
        }
    }
    Ok(masks)
}
