use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Linear beta schedule and its derived products.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::Timestep {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }

    /// Reverse-step noise scale: `sqrt(beta_t)` for `t >= 1`; at `t = 0` zero
    /// unless `final_step_noise` is set.
    pub fn sigma(&self, t: usize, final_step_noise: bool) -> f64 {
        if t == 0 && !final_step_noise {
            0.0
        } else {
            self.betas[t].sqrt()
        }
    }
}

/// `beta_t = start + t * (end - start) / (T - 1)`, `abar_t = prod_{i<=t} (1 - beta_i)`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Schedule("need at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Schedule(format!(
            "need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let betas: Vec<f64> = if steps == 1 {
        vec![beta_start]
    } else {
        let step = (beta_end - beta_start) / (steps - 1) as f64;
        (0..steps).map(|t| beta_start + t as f64 * step).collect()
    };
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        betas,
        alphas,
        alpha_bars,
    })
}

fn check_len<F>(a: &[F], b: &[F], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{what}: lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps`.
pub fn forward_noise<F: Scalar>(
    z0: &[F],
    t: usize,
    eps: &[F],
    schedule: &NoiseSchedule,
) -> Result<Vec<F>> {
    schedule.check(t)?;
    check_len(z0, eps, "forward_noise")?;
    let ab = schedule.alpha_bars[t];
    let signal = F::from_f64_lossy(ab.sqrt());
    let noise = F::from_f64_lossy((1.0 - ab).sqrt());
    Ok(z0
        .iter()
        .zip(eps)
        .map(|(&z, &e)| signal * z + noise * e)
        .collect())
}

/// Inverts the forward process given a noise estimate.
pub fn predict_x0<F: Scalar>(
    zt: &[F],
    t: usize,
    eps: &[F],
    schedule: &NoiseSchedule,
) -> Result<Vec<F>> {
    schedule.check(t)?;
    check_len(zt, eps, "predict_x0")?;
    let ab = schedule.alpha_bars[t];
    let noise = F::from_f64_lossy((1.0 - ab).sqrt());
    let inv = F::from_f64_lossy(1.0 / ab.sqrt());
    Ok(zt
        .iter()
        .zip(eps)
        .map(|(&z, &e)| (z - noise * e) * inv)
        .collect())
}

/// Ancestral DDPM update
/// `z_{t-1} = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t * xi`
/// with `sigma_t = sqrt(beta_t)` and no noise at `t = 0`.
pub fn reverse_step<F: Scalar>(
    zt: &[F],
    t: usize,
    eps_hat: &[F],
    schedule: &NoiseSchedule,
    xi: &[F],
) -> Result<Vec<F>> {
    reverse_step_with(zt, t, eps_hat, schedule, xi, false)
}

pub fn reverse_step_with<F: Scalar>(
    zt: &[F],
    t: usize,
    eps_hat: &[F],
    schedule: &NoiseSchedule,
    xi: &[F],
    final_step_noise: bool,
) -> Result<Vec<F>> {
    schedule.check(t)?;
    check_len(zt, eps_hat, "reverse_step")?;
    check_len(zt, xi, "reverse_step")?;
    let beta = schedule.betas[t];
    let coef = F::from_f64_lossy(beta / (1.0 - schedule.alpha_bars[t]).sqrt());
    let inv = F::from_f64_lossy(1.0 / schedule.alphas[t].sqrt());
    let sigma = F::from_f64_lossy(schedule.sigma(t, final_step_noise));
    Ok(zt
        .iter()
        .zip(eps_hat)
        .zip(xi)
        .map(|((&z, &e), &x)| (z - coef * e) * inv + sigma * x)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_schedule_endpoints() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        assert_eq!(s.steps(), 100);
        assert!((s.betas[0] - 1e-4).abs() < 1e-15);
        assert!((s.betas[99] - 0.02).abs() < 1e-15);
        assert!((s.alpha_bars[0] - 0.9999).abs() < 1e-15);
        let mut prod = 1.0;
        for b in &s.betas {
            prod *= 1.0 - b;
        }
        assert!((s.alpha_bars[99] - prod).abs() < 1e-15);
    }

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, 0.3, 0.5).unwrap();
        assert_eq!(s.betas, vec![0.3]);
        assert!((s.alpha_bars[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn invalid_schedules() {
        assert!(make_schedule(0, 1e-4, 0.02).is_err());
        assert!(make_schedule(10, 0.0, 0.02).is_err());
        assert!(make_schedule(10, 0.03, 0.02).is_err());
        assert!(make_schedule(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn forward_noise_cases() {
        let s = make_schedule(10, 1e-4, 0.02).unwrap();
        let z0 = [1.0f64, -2.0];
        let zero = [0.0f64, 0.0];
        let e = [0.5f64, 0.25];
        let ab = s.alpha_bars[4];
        let out = forward_noise(&z0, 4, &zero, &s).unwrap();
        assert!((out[1] - ab.sqrt() * -2.0).abs() < 1e-15);
        let out = forward_noise(&zero, 4, &e, &s).unwrap();
        assert!((out[0] - (1.0 - ab).sqrt() * 0.5).abs() < 1e-15);
        assert!(matches!(
            forward_noise(&z0, 10, &e, &s),
            Err(Error::Timestep { t: 10, steps: 10 })
        ));
    }

    #[test]
    fn hand_evaluated_forward_and_reverse() {
        let s = NoiseSchedule {
            betas: vec![0.1],
            alphas: vec![0.9],
            alpha_bars: vec![0.25],
        };
        let zt = forward_noise(&[2.0f64], 0, &[1.0], &s).unwrap()[0];
        assert!((zt - (1.0 + 0.75f64.sqrt())).abs() < 1e-12);
        assert!((zt - 1.8660).abs() < 1e-4);
        // Reverse update at a noisy step, xi = 0.
        let s2 = NoiseSchedule {
            betas: vec![0.05, 0.1],
            alphas: vec![0.95, 0.9],
            alpha_bars: vec![0.5, 0.25],
        };
        let expect = (1.866 - 0.1 / 0.75f64.sqrt()) / 0.9f64.sqrt();
        let got = reverse_step(&[1.866f64], 1, &[1.0], &s2, &[0.0]).unwrap()[0];
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 1.8452).abs() < 1e-3);
    }

    #[test]
    fn final_step_ignores_xi_unless_enabled() {
        let s = make_schedule(5, 1e-3, 0.05).unwrap();
        let a = reverse_step(&[0.3f64, -0.1], 0, &[0.2, 0.4], &s, &[0.0, 0.0]).unwrap();
        let b = reverse_step(&[0.3f64, -0.1], 0, &[0.2, 0.4], &s, &[5.0, -7.0]).unwrap();
        assert_eq!(a, b);
        let c = reverse_step_with(&[0.3f64, -0.1], 0, &[0.2, 0.4], &s, &[5.0, -7.0], true).unwrap();
        assert_ne!(a, c);
        assert!(reverse_step(&[0.3f64], 5, &[0.2], &s, &[0.0]).is_err());
    }
}
