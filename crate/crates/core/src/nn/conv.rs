use rand::Rng;

use super::{matmul, Param, Scalar};

/// Activations in channel-major `[C, N, H, W]` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps<F> {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> FeatureMaps<F> {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        FeatureMaps {
            channels,
            batch,
            height,
            width,
            data: vec![F::zero(); channels * batch * height * width],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, c: usize, n: usize, i: usize, j: usize) -> usize {
        ((c * self.batch + n) * self.height + i) * self.width + j
    }
}

#[derive(Clone, Copy, Debug)]
struct Window {
    channels: usize,
    batch: usize,
    image_h: usize,
    image_w: usize,
    grid_h: usize,
    grid_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.batch * self.grid_h * self.grid_w
    }

    fn source(&self, grid: usize, offset: usize, limit: usize) -> Option<usize> {
        let pos = (grid * self.stride + offset) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

fn im2col<F: Scalar>(image: &[F], w: Window) -> Vec<F> {
    let mut cols = vec![F::zero(); w.rows() * w.cols()];
    let plane = w.image_h * w.image_w;
    let grid = w.grid_h * w.grid_w;
    for c in 0..w.channels {
        for ki in 0..w.kernel {
            for kj in 0..w.kernel {
                let row = (c * w.kernel + ki) * w.kernel + kj;
                let dst_row = &mut cols[row * w.cols()..(row + 1) * w.cols()];
                for n in 0..w.batch {
                    let src = &image[(c * w.batch + n) * plane..(c * w.batch + n + 1) * plane];
                    for gi in 0..w.grid_h {
                        let Some(si) = w.source(gi, ki, w.image_h) else {
                            continue;
                        };
                        let dst =
                            &mut dst_row[n * grid + gi * w.grid_w..n * grid + (gi + 1) * w.grid_w];
                        let src_row = &src[si * w.image_w..(si + 1) * w.image_w];
                        for (gj, d) in dst.iter_mut().enumerate() {
                            if let Some(sj) = w.source(gj, kj, w.image_w) {
                                *d = src_row[sj];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<F: Scalar>(cols: &[F], w: Window) -> Vec<F> {
    let plane = w.image_h * w.image_w;
    let grid = w.grid_h * w.grid_w;
    let mut image = vec![F::zero(); w.channels * w.batch * plane];
    for c in 0..w.channels {
        for ki in 0..w.kernel {
            for kj in 0..w.kernel {
                let row = (c * w.kernel + ki) * w.kernel + kj;
                let src_row = &cols[row * w.cols()..(row + 1) * w.cols()];
                for n in 0..w.batch {
                    let dst = &mut image[(c * w.batch + n) * plane..(c * w.batch + n + 1) * plane];
                    for gi in 0..w.grid_h {
                        let Some(si) = w.source(gi, ki, w.image_h) else {
                            continue;
                        };
                        let src =
                            &src_row[n * grid + gi * w.grid_w..n * grid + (gi + 1) * w.grid_w];
                        let dst_row = &mut dst[si * w.image_w..(si + 1) * w.image_w];
                        for (gj, &s) in src.iter().enumerate() {
                            if let Some(sj) = w.source(gj, kj, w.image_w) {
                                dst_row[sj] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    image
}

fn add_channel_bias<F: Scalar>(data: &mut [F], bias: &[F]) {
    let per = data.len() / bias.len();
    for (chunk, &b) in data.chunks_mut(per).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_channel_sums<F: Scalar>(grad: &mut [F], dy: &[F]) {
    let per = dy.len() / grad.len();
    for (g, chunk) in grad.iter_mut().zip(dy.chunks(per)) {
        *g += chunk.iter().copied().sum::<F>();
    }
}

/// 2-D convolution, weight stored `[out, in, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub stride: usize,
    pub padding: usize,
}

impl<F: Scalar> Conv2d<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (inputs * kernel * kernel) as f64;
        Conv2d {
            weight: Param::uniform(
                format!("{name}.weight"),
                &[outputs, inputs, kernel, kernel],
                (6.0 / fan_in).sqrt(),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
            stride,
            padding,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn output_size(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel()) / self.stride + 1
    }

    fn window(&self, x: &FeatureMaps<F>) -> Window {
        Window {
            channels: x.channels,
            batch: x.batch,
            image_h: x.height,
            image_w: x.width,
            grid_h: self.output_size(x.height),
            grid_w: self.output_size(x.width),
            kernel: self.kernel(),
            stride: self.stride,
            padding: self.padding,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel() == 1 && self.stride == 1 && self.padding == 0
    }

    pub fn forward(&self, x: &FeatureMaps<F>) -> FeatureMaps<F> {
        assert_eq!(x.channels, self.inputs(), "conv input channels");
        let w = self.window(x);
        let mut y = FeatureMaps::zeros(self.outputs(), x.batch, w.grid_h, w.grid_w);
        let owned;
        let cols: &[F] = if self.is_pointwise() {
            &x.data
        } else {
            owned = im2col(&x.data, w);
            &owned
        };
        matmul(
            &self.weight.value,
            false,
            cols,
            false,
            &mut y.data,
            self.outputs(),
            w.rows(),
            w.cols(),
            F::zero(),
        );
        add_channel_bias(&mut y.data, &self.bias.value);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &FeatureMaps<F>, dy: &FeatureMaps<F>) -> FeatureMaps<F> {
        let w = self.window(x);
        assert_eq!(
            (dy.channels, dy.height, dy.width),
            (self.outputs(), w.grid_h, w.grid_w)
        );
        let owned;
        let cols: &[F] = if self.is_pointwise() {
            &x.data
        } else {
            owned = im2col(&x.data, w);
            &owned
        };
        let outputs = self.outputs();
        matmul(
            &dy.data,
            false,
            cols,
            true,
            &mut self.weight.grad,
            outputs,
            w.cols(),
            w.rows(),
            F::one(),
        );
        accumulate_channel_sums(&mut self.bias.grad, &dy.data);
        let mut dcols = vec![F::zero(); w.rows() * w.cols()];
        matmul(
            &self.weight.value,
            true,
            &dy.data,
            false,
            &mut dcols,
            w.rows(),
            self.outputs(),
            w.cols(),
            F::zero(),
        );
        let data = if self.is_pointwise() {
            dcols
        } else {
            col2im(&dcols, w)
        };
        FeatureMaps {
            channels: x.channels,
            batch: x.batch,
            height: x.height,
            width: x.width,
            data,
        }
    }

    pub fn params_mut(&mut self) -> [&mut Param<F>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<F>; 2] {
        [&self.weight, &self.bias]
    }
}

/// Transposed 2-D convolution (the adjoint of [`Conv2d`]), weight stored
/// `[in, out, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub stride: usize,
    pub padding: usize,
}

impl<F: Scalar> ConvTranspose2d<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        // Each output pixel sees roughly in * (k / stride)^2 inputs.
        let fan_in = (inputs * kernel * kernel) as f64 / (stride * stride) as f64;
        ConvTranspose2d {
            weight: Param::uniform(
                format!("{name}.weight"),
                &[inputs, outputs, kernel, kernel],
                (6.0 / fan_in).sqrt(),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
            stride,
            padding,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn output_size(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.kernel() - 2 * self.padding
    }

    fn window(&self, x: &FeatureMaps<F>) -> Window {
        Window {
            channels: self.outputs(),
            batch: x.batch,
            image_h: self.output_size(x.height),
            image_w: self.output_size(x.width),
            grid_h: x.height,
            grid_w: x.width,
            kernel: self.kernel(),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn forward(&self, x: &FeatureMaps<F>) -> FeatureMaps<F> {
        assert_eq!(x.channels, self.inputs(), "transposed conv input channels");
        let w = self.window(x);
        let mut cols = vec![F::zero(); w.rows() * w.cols()];
        matmul(
            &self.weight.value,
            true,
            &x.data,
            false,
            &mut cols,
            w.rows(),
            self.inputs(),
            w.cols(),
            F::zero(),
        );
        let mut data = col2im(&cols, w);
        add_channel_bias(&mut data, &self.bias.value);
        FeatureMaps {
            channels: self.outputs(),
            batch: x.batch,
            height: w.image_h,
            width: w.image_w,
            data,
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &FeatureMaps<F>, dy: &FeatureMaps<F>) -> FeatureMaps<F> {
        let w = self.window(x);
        assert_eq!(
            (dy.channels, dy.height, dy.width),
            (self.outputs(), w.image_h, w.image_w)
        );
        let dcols = im2col(&dy.data, w);
        let inputs = self.inputs();
        matmul(
            &x.data,
            false,
            &dcols,
            true,
            &mut self.weight.grad,
            inputs,
            w.cols(),
            w.rows(),
            F::one(),
        );
        accumulate_channel_sums(&mut self.bias.grad, &dy.data);
        let mut dx = FeatureMaps::zeros(x.channels, x.batch, x.height, x.width);
        matmul(
            &self.weight.value,
            false,
            &dcols,
            false,
            &mut dx.data,
            self.inputs(),
            w.rows(),
            w.cols(),
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
