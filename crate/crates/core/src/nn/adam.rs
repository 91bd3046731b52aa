use serde::{Deserialize, Serialize};

use super::{Param, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are keyed by parameter order,
/// so the same parameter list must be passed to every `step`.
pub struct Adam<F> {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param<F>]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![F::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(
            self.first.len(),
            params.len(),
            "parameter list changed between steps"
        );
        self.step += 1;
        let c = self.config;
        let b1 = F::from_f64_lossy(c.beta1);
        let b2 = F::from_f64_lossy(c.beta2);
        let one = F::one();
        let correction1 = 1.0 - c.beta1.powi(self.step as i32);
        let correction2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = F::from_f64_lossy(c.learning_rate * correction2.sqrt() / correction1);
        let eps = F::from_f64_lossy(c.epsilon * correction2.sqrt());
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                p.value[i] -= lr * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::<f64>::zeros("x", &[2]);
        p.value = vec![3.0, -2.0];
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.1));
        for _ in 0..500 {
            p.grad = p.value.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut [&mut p]);
        }
        assert!(p.value.iter().all(|v| v.abs() < 1e-3), "{:?}", p.value);
        assert_eq!(opt.steps_taken(), 500);
    }
}
