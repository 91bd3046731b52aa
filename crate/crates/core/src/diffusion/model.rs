use rand::Rng;
use rand_distr::StandardNormal;

use super::{make_schedule, prompt_bit, DiffusionConfig, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::{silu, silu_backward, Linear, Matrix, Param, Scalar};
use crate::rng;
use crate::store::{Checkpoint, CheckpointKind, NamedTensor};

const PROMPT_INIT_STD: f64 = 0.1;

/// Learnable two-row table mapping the lesion prompt to a vector.
#[derive(Clone, Debug)]
pub struct PromptTable<F = f32> {
    pub embedding: Param<F>,
}

impl<F: Scalar> PromptTable<F> {
    pub fn new<R: Rng>(prompt_dim: usize, rng: &mut R) -> Self {
        let mut embedding = Param::zeros("prompt.embedding", &[2, prompt_dim]);
        for v in &mut embedding.value {
            *v = F::from_f64_lossy(PROMPT_INIT_STD * rng.sample::<f64, _>(StandardNormal));
        }
        PromptTable { embedding }
    }

    pub fn dim(&self) -> usize {
        self.embedding.shape[1]
    }

    pub fn embed(&self, y: i64) -> Result<&[F]> {
        let row = prompt_bit(y)? as usize;
        let d = self.dim();
        Ok(&self.embedding.value[row * d..(row + 1) * d])
    }
}

/// `[z_t ; t/T ; p]`.
pub fn denoiser_input<F: Scalar>(zt: &[F], t: usize, steps: usize, prompt: &[F]) -> Result<Vec<F>> {
    if t >= steps {
        return Err(Error::Timestep { t, steps });
    }
    let mut v = Vec::with_capacity(zt.len() + 1 + prompt.len());
    v.extend_from_slice(zt);
    v.push(F::from_f64_lossy(t as f64 / steps as f64));
    v.extend_from_slice(prompt);
    Ok(v)
}

/// Mean squared error over every element.
pub fn diffusion_loss<F: Scalar>(eps_hat: &[F], eps: &[F]) -> Result<f64> {
    if eps_hat.len() != eps.len() || eps.is_empty() {
        return Err(Error::Shape(format!(
            "noise estimate has {} values, target {}",
            eps_hat.len(),
            eps.len()
        )));
    }
    let sum: f64 = eps_hat
        .iter()
        .zip(eps)
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    Ok(sum / eps.len() as f64)
}

pub fn diffusion_loss_grad<F: Scalar>(eps_hat: &[F], eps: &[F]) -> Vec<F> {
    let scale = F::from_f64_lossy(2.0 / eps.len() as f64);
    eps_hat
        .iter()
        .zip(eps)
        .map(|(&a, &b)| scale * (a - b))
        .collect()
}

struct Trace<F> {
    input: Matrix<F>,
    pre1: Matrix<F>,
    act1: Matrix<F>,
    pre2: Matrix<F>,
    act2: Matrix<F>,
}

/// Noise predictor: two SiLU hidden layers over `[z_t ; t/T ; p(y)]`.
#[derive(Clone, Debug)]
pub struct Denoiser<F = f32> {
    pub fc: [Linear<F>; 3],
    pub prompts: PromptTable<F>,
}

impl<F: Scalar> Denoiser<F> {
    pub fn new<R: Rng>(latent_dim: usize, prompt_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let width = latent_dim + 1 + prompt_dim;
        let fc = [
            Linear::new("denoiser.fc0", width, hidden, rng),
            Linear::new("denoiser.fc1", hidden, hidden, rng),
            Linear::new("denoiser.fc2", hidden, latent_dim, rng),
        ];
        let prompts = PromptTable::new(prompt_dim, rng);
        Denoiser { fc, prompts }
    }

    pub fn latent_dim(&self) -> usize {
        self.fc[2].outputs()
    }

    pub fn input_width(&self) -> usize {
        self.fc[0].inputs()
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut v: Vec<&Param<F>> = self.fc.iter().flat_map(|l| l.params()).collect();
        v.push(&self.prompts.embedding);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v: Vec<&mut Param<F>> = self.fc.iter_mut().flat_map(|l| l.params_mut()).collect();
        v.push(&mut self.prompts.embedding);
        v
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Stacks per-item inputs; `ts` and `ys` have one entry per row of `zt`.
    pub fn build_input(
        &self,
        zt: &Matrix<F>,
        ts: &[usize],
        steps: usize,
        ys: &[u8],
    ) -> Result<Matrix<F>> {
        let d = self.latent_dim();
        if zt.cols != d || ts.len() != zt.rows || ys.len() != zt.rows {
            return Err(Error::Shape(format!(
                "denoiser batch: latents {}x{}, {} timesteps, {} prompts, latent dim {d}",
                zt.rows,
                zt.cols,
                ts.len(),
                ys.len()
            )));
        }
        let mut data = Vec::with_capacity(zt.rows * self.input_width());
        for r in 0..zt.rows {
            let p = self.prompts.embed(ys[r] as i64)?;
            data.extend(denoiser_input(zt.row(r), ts[r], steps, p)?);
        }
        Ok(Matrix::from_vec(zt.rows, self.input_width(), data))
    }

    fn trace(&self, input: Matrix<F>) -> (Trace<F>, Matrix<F>) {
        let pre1 = self.fc[0].forward(&input);
        let act1 = Matrix::from_vec(pre1.rows, pre1.cols, silu(&pre1.data));
        let pre2 = self.fc[1].forward(&act1);
        let act2 = Matrix::from_vec(pre2.rows, pre2.cols, silu(&pre2.data));
        let out = self.fc[2].forward(&act2);
        (
            Trace {
                input,
                pre1,
                act1,
                pre2,
                act2,
            },
            out,
        )
    }

    fn backward(&mut self, trace: &Trace<F>, dout: &Matrix<F>) -> Matrix<F> {
        let mut g = self.fc[2].backward(&trace.act2, dout);
        silu_backward(&trace.pre2.data, &mut g.data);
        let mut g = self.fc[1].backward(&trace.act1, &g);
        silu_backward(&trace.pre1.data, &mut g.data);
        self.fc[0].backward(&trace.input, &g)
    }

    /// Runs the MLP on already assembled inputs.
    pub fn forward_input(&self, input: &Matrix<F>) -> Matrix<F> {
        self.trace(input.clone()).1
    }

    /// Vector-Jacobian product of the MLP with respect to its input.
    pub fn input_gradient(&self, input: &Matrix<F>, dout: &Matrix<F>) -> Matrix<F> {
        let mut scratch = self.clone();
        let (trace, _) = scratch.trace(input.clone());
        scratch.backward(&trace, dout)
    }

    pub fn predict_batch(
        &self,
        zt: &Matrix<F>,
        ts: &[usize],
        steps: usize,
        ys: &[u8],
    ) -> Result<Matrix<F>> {
        let input = self.build_input(zt, ts, steps, ys)?;
        Ok(self.trace(input).1)
    }

    pub fn predict_noise(&self, zt: &[F], t: usize, steps: usize, y: i64) -> Result<Vec<F>> {
        let y = prompt_bit(y)?;
        let z = Matrix::from_vec(1, zt.len(), zt.to_vec());
        Ok(self.predict_batch(&z, &[t], steps, &[y])?.data)
    }

    /// Adds the gradients of the mean squared noise error and returns it.
    pub fn accumulate_gradients(
        &mut self,
        zt: &Matrix<F>,
        ts: &[usize],
        steps: usize,
        ys: &[u8],
        eps: &Matrix<F>,
    ) -> Result<f64> {
        let input = self.build_input(zt, ts, steps, ys)?;
        let (trace, out) = self.trace(input);
        let loss = diffusion_loss(&out.data, &eps.data)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("diffusion loss is {loss}")));
        }
        let dout = Matrix::from_vec(
            out.rows,
            out.cols,
            diffusion_loss_grad(&out.data, &eps.data),
        );
        let dinput = self.backward(&trace, &dout);
        let (d, dp) = (self.latent_dim(), self.prompts.dim());
        for (r, &y) in ys.iter().enumerate() {
            let row = y as usize;
            let src = &dinput.row(r)[d + 1..];
            let dst = &mut self.prompts.embedding.grad[row * dp..(row + 1) * dp];
            for (g, &s) in dst.iter_mut().zip(src) {
                *g += s;
            }
        }
        Ok(loss)
    }

    pub fn cast<G: Scalar>(&self) -> Denoiser<G> {
        let lin = |l: &Linear<F>| Linear {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        Denoiser {
            fc: [lin(&self.fc[0]), lin(&self.fc[1]), lin(&self.fc[2])],
            prompts: PromptTable {
                embedding: self.prompts.embedding.cast(),
            },
        }
    }
}

/// Schedule plus denoiser; everything stage II needs at sampling time.
#[derive(Clone, Debug)]
pub struct DiffusionModel<F = f32> {
    pub config: DiffusionConfig,
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser<F>,
}

impl<F: Scalar> DiffusionModel<F> {
    /// `config.latent_dim` must be set.
    pub fn new(config: DiffusionConfig) -> Result<Self> {
        config.validate()?;
        let latent_dim = config
            .latent_dim
            .ok_or_else(|| Error::Config("diffusion latent_dim is not set".into()))?;
        let schedule = make_schedule(config.steps, config.beta_start, config.beta_end)?;
        let mut rng = rng::stream(config.seed, "diffusion-init", 0);
        let denoiser = Denoiser::new(latent_dim, config.prompt_dim, config.hidden_width, &mut rng);
        Ok(DiffusionModel {
            config,
            schedule,
            denoiser,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.denoiser.latent_dim()
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps()
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Checkpoint {
        let mut meta = metadata;
        meta["config"] = serde_json::to_value(&self.config).expect("config serializes");
        let tensors = self
            .denoiser
            .params()
            .into_iter()
            .map(|p| {
                NamedTensor::new(
                    &p.name,
                    p.shape.clone(),
                    p.value.iter().map(|v| v.as_f64() as f32).collect(),
                )
            })
            .collect();
        Checkpoint::new(CheckpointKind::Diffusion, meta, tensors)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(CheckpointKind::Diffusion)?;
        let config: DiffusionConfig = serde_json::from_value(
            ckpt.metadata
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("metadata has no config".into()))?,
        )?;
        let mut model = DiffusionModel::new(config)?;
        for p in model.denoiser.params_mut() {
            ckpt.load_into(p)?;
        }
        Ok(model)
    }

    pub fn cast<G: Scalar>(&self) -> DiffusionModel<G> {
        DiffusionModel {
            config: self.config.clone(),
            schedule: self.schedule.clone(),
            denoiser: self.denoiser.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Denoiser<f64> {
        let mut rng = rng::stream(1, "toy", 0);
        Denoiser::new(3, 2, 8, &mut rng)
    }

    #[test]
    fn input_layout() {
        let v = denoiser_input(&[1.0f64, 2.0], 25, 100, &[7.0, 8.0, 9.0]).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 0.25, 7.0, 8.0, 9.0]);
        assert!(denoiser_input(&[1.0f64], 100, 100, &[]).is_err());
    }

    #[test]
    fn prompt_lookup() {
        let d = toy();
        assert_eq!(
            d.prompts.embed(1).unwrap(),
            &d.prompts.embedding.value[2..4]
        );
        assert!(matches!(d.prompts.embed(2), Err(Error::Prompt(2))));
        assert!(matches!(d.prompts.embed(-1), Err(Error::Prompt(-1))));
    }

    #[test]
    fn loss_values() {
        assert_eq!(diffusion_loss(&[1.0f64, 3.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert!(diffusion_loss(&[1.0f64], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn parameter_gradient_matches_finite_difference() {
        let mut d = toy();
        let zt = Matrix::from_vec(2, 3, vec![0.3, -0.2, 0.5, 1.0, 0.1, -0.7]);
        let eps = Matrix::from_vec(2, 3, vec![0.2, 0.1, -0.4, 0.0, 0.9, 0.3]);
        let (ts, ys) = ([3usize, 7], [0u8, 1]);
        d.zero_grad();
        d.accumulate_gradients(&zt, &ts, 10, &ys, &eps).unwrap();
        let loss = |d: &Denoiser<f64>| {
            let out = d.predict_batch(&zt, &ts, 10, &ys).unwrap();
            diffusion_loss(&out.data, &eps.data).unwrap()
        };
        let h = 1e-6;
        let n_params = d.params().len();
        for pi in 0..n_params {
            for idx in [0usize, 1] {
                let analytic = d.params()[pi].grad[idx];
                let mut plus = d.clone();
                plus.params_mut()[pi].value[idx] += h;
                let mut minus = d.clone();
                minus.params_mut()[pi].value[idx] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!(
                    (analytic - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "param {pi}[{idx}]: {analytic} vs {numeric}"
                );
            }
        }
    }
}
