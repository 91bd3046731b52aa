use rand::Rng;

use super::{matmul, Param, Scalar};

/// Row-major matrix, one row per batch item.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Fully connected layer, `y = x W^T + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn new<R: Rng>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Linear {
            weight: Param::uniform(format!("{name}.weight"), &[outputs, inputs], bound, rng),
            bias: Param::uniform(format!("{name}.bias"), &[outputs], bound, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &Matrix<F>) -> Matrix<F> {
        assert_eq!(x.cols, self.inputs(), "linear input width");
        let mut y = Matrix::zeros(x.rows, self.outputs());
        for r in 0..x.rows {
            y.row_mut(r).copy_from_slice(&self.bias.value);
        }
        matmul(
            &x.data,
            false,
            &self.weight.value,
            true,
            &mut y.data,
            x.rows,
            self.inputs(),
            self.outputs(),
            F::one(),
        );
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Matrix<F>, dy: &Matrix<F>) -> Matrix<F> {
        let (n, i, o) = (x.rows, self.inputs(), self.outputs());
        assert_eq!((dy.rows, dy.cols), (n, o), "linear output gradient shape");
        matmul(
            &dy.data,
            true,
            &x.data,
            false,
            &mut self.weight.grad,
            o,
            n,
            i,
            F::one(),
        );
        for r in 0..n {
            for (g, &d) in self.bias.grad.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        let mut dx = Matrix::zeros(n, i);
        matmul(
            &dy.data,
            false,
            &self.weight.value,
            false,
            &mut dx.data,
            n,
            o,
            i,
            F::zero(),
        );
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param<F>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<F>; 2] {
        [&self.weight, &self.bias]
    }
}
