use super::Scalar;

pub fn relu_inplace<F: Scalar>(x: &mut [F]) {
    for v in x {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Gradient through ReLU given its output.
pub fn relu_backward<F: Scalar>(output: &[F], grad: &mut [F]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= F::zero() {
            *g = F::zero();
        }
    }
}

pub fn silu<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Gradient through SiLU given its input.
pub fn silu_backward<F: Scalar>(input: &[F], grad: &mut [F]) {
    for (g, &x) in grad.iter_mut().zip(input) {
        let s = sigmoid(x);
        *g *= s * (F::one() + x * (F::one() - s));
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
