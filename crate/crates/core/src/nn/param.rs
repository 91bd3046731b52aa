use rand::Rng;

use super::Scalar;

/// A named trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub grad: Vec<F>,
}

impl<F: Scalar> Param<F> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Param {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![F::zero(); len],
            grad: vec![F::zero(); len],
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng>(
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(name, shape);
        for v in &mut p.value {
            *v = F::from_f64_lossy(rng.gen_range(-bound..=bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = F::zero());
    }

    pub fn cast<G: Scalar>(&self) -> Param<G> {
        Param {
            name: self.name.clone(),
            shape: self.shape.clone(),
            value: self
                .value
                .iter()
                .map(|v| G::from_f64_lossy(v.as_f64()))
                .collect(),
            grad: vec![G::zero(); self.value.len()],
        }
    }
}
