//! Minimal f64 layers with explicit backward passes.
//!
//! Each layer caches what its backward pass needs from the most recent
//! forward call. Gradients accumulate into [`Param::grad`] until zeroed.

use rand::Rng;

/// NCHW activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Tensor { n, c, h, w, data }
    }

    /// Features per sample.
    pub fn features(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Same data viewed as `(n, features, 1, 1)`.
    pub fn flatten(self) -> Tensor {
        let f = self.features();
        Tensor {
            n: self.n,
            c: f,
            h: 1,
            w: 1,
            data: self.data,
        }
    }

    pub fn reshape(self, c: usize, h: usize, w: usize) -> Tensor {
        assert_eq!(self.features(), c * h * w, "reshape must keep feature count");
        Tensor {
            n: self.n,
            c,
            h,
            w,
            data: self.data,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

/// A trainable parameter and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Param { value, grad }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform(len: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Param::new((0..len).map(|_| rng.random_range(-bound..=bound)).collect())
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Output length of a strided convolution along one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(input + 2 * pad >= kernel, "kernel larger than padded input");
    (input + 2 * pad - kernel) / stride + 1
}

/// Output length of a transposed convolution along one axis.
pub fn conv_transpose_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    ((input - 1) * stride + kernel)
        .checked_sub(2 * pad)
        .expect("transposed convolution padding too large")
}

#[inline]
fn offset(base: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
    (base + k).checked_sub(pad).filter(|&v| v < limit)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: (usize, usize),
    /// `[out_c, in_c, kh, kw]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_c * kernel.0 * kernel.1;
        Conv2d {
            in_c,
            out_c,
            kernel,
            stride,
            pad,
            weight: Param::uniform(out_c * in_c * kernel.0 * kernel.1, fan_in, rng),
            bias: Param::uniform(out_c, fan_in, rng),
            input: None,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_len(h, self.kernel.0, self.stride, self.pad.0),
            conv_out_len(w, self.kernel.1, self.stride, self.pad.1),
        )
    }

    pub fn forward(&mut self, x: Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (kh, kw) = self.kernel;
        let (oh, ow) = self.out_dims(x.h, x.w);
        let s = self.stride;
        let mut out = Tensor::zeros(x.n, self.out_c, oh, ow);
        for n in 0..x.n {
            for oc in 0..self.out_c {
                let o_base = ((n * self.out_c) + oc) * oh * ow;
                let b = self.bias.value[oc];
                out.data[o_base..o_base + oh * ow].iter_mut().for_each(|v| *v = b);
                for ic in 0..self.in_c {
                    let x_base = ((n * self.in_c) + ic) * x.h * x.w;
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let wv = self.weight.value[((oc * self.in_c + ic) * kh + ki) * kw + kj];
                            for oi in 0..oh {
                                let Some(ii) = offset(oi * s, ki, self.pad.0, x.h) else {
                                    continue;
                                };
                                for oj in 0..ow {
                                    if let Some(jj) = offset(oj * s, kj, self.pad.1, x.w) {
                                        out.data[o_base + oi * ow + oj] += wv * x.data[x_base + ii * x.w + jj];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(x);
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("backward before forward");
        let (kh, kw) = self.kernel;
        let (oh, ow) = (dout.h, dout.w);
        let s = self.stride;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        for n in 0..x.n {
            for oc in 0..self.out_c {
                let o_base = ((n * self.out_c) + oc) * oh * ow;
                self.bias.grad[oc] += dout.data[o_base..o_base + oh * ow].iter().sum::<f64>();
                for ic in 0..self.in_c {
                    let x_base = ((n * self.in_c) + ic) * x.h * x.w;
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let widx = ((oc * self.in_c + ic) * kh + ki) * kw + kj;
                            let wv = self.weight.value[widx];
                            let mut gw = 0.0;
                            for oi in 0..oh {
                                let Some(ii) = offset(oi * s, ki, self.pad.0, x.h) else {
                                    continue;
                                };
                                for oj in 0..ow {
                                    if let Some(jj) = offset(oj * s, kj, self.pad.1, x.w) {
                                        let g = dout.data[o_base + oi * ow + oj];
                                        let xi = x_base + ii * x.w + jj;
                                        gw += g * x.data[xi];
                                        dx.data[xi] += g * wv;
                                    }
                                }
                            }
                            self.weight.grad[widx] += gw;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: (usize, usize),
    /// `[in_c, out_c, kh, kw]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = out_c * kernel.0 * kernel.1;
        ConvTranspose2d {
            in_c,
            out_c,
            kernel,
            stride,
            pad,
            weight: Param::uniform(in_c * out_c * kernel.0 * kernel.1, fan_in, rng),
            bias: Param::uniform(out_c, fan_in, rng),
            input: None,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_transpose_out_len(h, self.kernel.0, self.stride, self.pad.0),
            conv_transpose_out_len(w, self.kernel.1, self.stride, self.pad.1),
        )
    }

    pub fn forward(&mut self, x: Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "transposed conv input channels");
        let (kh, kw) = self.kernel;
        let (oh, ow) = self.out_dims(x.h, x.w);
        let s = self.stride;
        let mut out = Tensor::zeros(x.n, self.out_c, oh, ow);
        for n in 0..x.n {
            for oc in 0..self.out_c {
                let o_base = ((n * self.out_c) + oc) * oh * ow;
                let b = self.bias.value[oc];
                out.data[o_base..o_base + oh * ow].iter_mut().for_each(|v| *v = b);
                for ic in 0..self.in_c {
                    let x_base = ((n * self.in_c) + ic) * x.h * x.w;
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let wv = self.weight.value[((ic * self.out_c + oc) * kh + ki) * kw + kj];
                            for i in 0..x.h {
                                let Some(oi) = offset(i * s, ki, self.pad.0, oh) else {
                                    continue;
                                };
                                for j in 0..x.w {
                                    if let Some(oj) = offset(j * s, kj, self.pad.1, ow) {
                                        out.data[o_base + oi * ow + oj] += wv * x.data[x_base + i * x.w + j];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(x);
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("backward before forward");
        let (kh, kw) = self.kernel;
        let (oh, ow) = (dout.h, dout.w);
        let s = self.stride;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        for n in 0..x.n {
            for oc in 0..self.out_c {
                let o_base = ((n * self.out_c) + oc) * oh * ow;
                self.bias.grad[oc] += dout.data[o_base..o_base + oh * ow].iter().sum::<f64>();
                for ic in 0..self.in_c {
                    let x_base = ((n * self.in_c) + ic) * x.h * x.w;
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let widx = ((ic * self.out_c + oc) * kh + ki) * kw + kj;
                            let wv = self.weight.value[widx];
                            let mut gw = 0.0;
                            for i in 0..x.h {
                                let Some(oi) = offset(i * s, ki, self.pad.0, oh) else {
                                    continue;
                                };
                                for j in 0..x.w {
                                    if let Some(oj) = offset(j * s, kj, self.pad.1, ow) {
                                        let g = dout.data[o_base + oi * ow + oj];
                                        let xi = x_base + i * x.w + j;
                                        gw += g * x.data[xi];
                                        dx.data[xi] += g * wv;
                                    }
                                }
                            }
                            self.weight.grad[widx] += gw;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

/// Per-channel batch normalization over `(n, h, w)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub training: bool,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    cached_shape: [usize; 4],
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::new(vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            training: true,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            cached_shape: [0; 4],
        }
    }

    pub fn forward(&mut self, mut x: Tensor) -> Tensor {
        assert_eq!(x.c, self.channels, "batch norm channels");
        let plane = x.h * x.w;
        let m = (x.n * plane) as f64;
        self.inv_std = vec![0.0; x.c];
        self.xhat = vec![0.0; x.data.len()];
        for c in 0..x.c {
            let (mean, inv_std) = if self.training {
                let mut sum = 0.0;
                for n in 0..x.n {
                    let base = (n * x.c + c) * plane;
                    sum += x.data[base..base + plane].iter().sum::<f64>();
                }
                let mean = sum / m;
                let mut sq = 0.0;
                for n in 0..x.n {
                    let base = (n * x.c + c) * plane;
                    sq += x.data[base..base + plane]
                        .iter()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>();
                }
                let var = sq / m;
                let unbiased = if m > 1.0 { sq / (m - 1.0) } else { var };
                self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
                self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
                (mean, 1.0 / (var + self.eps).sqrt())
            } else {
                (self.running_mean[c], 1.0 / (self.running_var[c] + self.eps).sqrt())
            };
            self.inv_std[c] = inv_std;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            for n in 0..x.n {
                let base = (n * x.c + c) * plane;
                for i in base..base + plane {
                    let xh = (x.data[i] - mean) * inv_std;
                    self.xhat[i] = xh;
                    x.data[i] = g * xh + b;
                }
            }
        }
        self.cached_shape = x.shape();
        x
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let [n_, c_, h_, w_] = self.cached_shape;
        assert_eq!(dout.shape(), self.cached_shape, "batch norm backward shape");
        let plane = h_ * w_;
        let m = (n_ * plane) as f64;
        let mut dx = Tensor::zeros(n_, c_, h_, w_);
        for c in 0..c_ {
            let g = self.gamma.value[c];
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for n in 0..n_ {
                let base = (n * c_ + c) * plane;
                for i in base..base + plane {
                    sum_dy += dout.data[i];
                    sum_dy_xhat += dout.data[i] * self.xhat[i];
                }
            }
            self.beta.grad[c] += sum_dy;
            self.gamma.grad[c] += sum_dy_xhat;
            let inv_std = self.inv_std[c];
            for n in 0..n_ {
                let base = (n * c_ + c) * plane;
                for i in base..base + plane {
                    dx.data[i] = if self.training {
                        g * inv_std / m * (m * dout.data[i] - sum_dy - self.xhat[i] * sum_dy_xhat)
                    } else {
                        g * inv_std * dout.data[i]
                    };
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }
}

/// Fully connected layer on `(n, features, 1, 1)` tensors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    /// `[out_f, in_f]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(in_f: usize, out_f: usize, rng: &mut impl Rng) -> Self {
        Linear {
            in_f,
            out_f,
            weight: Param::uniform(in_f * out_f, in_f, rng),
            bias: Param::uniform(out_f, in_f, rng),
            input: None,
        }
    }

    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let x = x.flatten();
        assert_eq!(x.c, self.in_f, "linear input features");
        let mut out = Tensor::zeros(x.n, self.out_f, 1, 1);
        for n in 0..x.n {
            let xs = &x.data[n * self.in_f..(n + 1) * self.in_f];
            for o in 0..self.out_f {
                let ws = &self.weight.value[o * self.in_f..(o + 1) * self.in_f];
                out.data[n * self.out_f + o] = self.bias.value[o] + ws.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.input = Some(x);
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("backward before forward");
        let mut dx = Tensor::zeros(x.n, self.in_f, 1, 1);
        for n in 0..x.n {
            let xs = &x.data[n * self.in_f..(n + 1) * self.in_f];
            for o in 0..self.out_f {
                let g = dout.data[n * self.out_f + o];
                if g == 0.0 {
                    continue;
                }
                self.bias.grad[o] += g;
                let row = o * self.in_f;
                for (i, &x) in xs.iter().enumerate() {
                    self.weight.grad[row + i] += g * x;
                    dx.data[n * self.in_f + i] += g * self.weight.value[row + i];
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

/// Leaky ReLU (slope 0 gives a plain ReLU). Caches the sign mask.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    positive: Vec<bool>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope,
            positive: Vec::new(),
        }
    }

    pub fn forward(&mut self, mut x: Tensor) -> Tensor {
        self.positive = x.data.iter().map(|&v| v > 0.0).collect();
        for v in &mut x.data {
            if *v <= 0.0 {
                *v *= self.slope;
            }
        }
        x
    }

    pub fn backward(&self, mut dout: Tensor) -> Tensor {
        for (g, &p) in dout.data.iter_mut().zip(&self.positive) {
            if !p {
                *g *= self.slope;
            }
        }
        dout
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(
            n,
            c,
            h,
            w,
            (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn shape_arithmetic() {
        assert_eq!(conv_out_len(11, 3, 2, 1), 6);
        assert_eq!(conv_out_len(6, 3, 2, 1), 3);
        assert_eq!(conv_transpose_out_len(3, 4, 2, 1), 6);
        assert_eq!(conv_out_len(12, 4, 1, 1), 11);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::new(2, 3, (3, 2), 2, (1, 0), &mut rng);
        let x = rand_tensor(&mut rng, 2, 2, 5, 4);
        let y = conv.forward(x.clone());
        let (oh, ow) = (y.h, y.w);
        assert_eq!((oh, ow), (3, 2));
        for n in 0..2 {
            for oc in 0..3 {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut acc = conv.bias.value[oc];
                        for ic in 0..2 {
                            for ki in 0..3 {
                                for kj in 0..2 {
                                    let ii = (oi * 2 + ki) as isize - 1;
                                    let jj = (oj * 2 + kj) as isize;
                                    if !(0..5).contains(&ii) || jj >= 4 {
                                        continue;
                                    }
                                    acc += conv.weight.value[((oc * 2 + ic) * 3 + ki) * 2 + kj]
                                        * x.data[((n * 2 + ic) * 5 + ii as usize) * 4 + jj as usize];
                                }
                            }
                        }
                        let got = y.data[((n * 3 + oc) * oh + oi) * ow + oj];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when both share weights and have no bias
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(2, 3, (4, 4), 2, (1, 1), &mut rng);
        conv.bias.value.iter_mut().for_each(|b| *b = 0.0);
        let mut convt = ConvTranspose2d::new(3, 2, (4, 4), 2, (1, 1), &mut rng);
        convt.bias.value.iter_mut().for_each(|b| *b = 0.0);
        convt.weight.value = conv.weight.value.clone();
        let x = rand_tensor(&mut rng, 1, 2, 6, 6);
        let cx = conv.forward(x.clone());
        let y = rand_tensor(&mut rng, 1, 3, cx.h, cx.w);
        let ty = convt.forward(y.clone());
        assert_eq!((ty.h, ty.w), (6, 6));
        let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&ty.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn batch_norm_normalizes_in_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::new(2);
        let y = bn.forward(rand_tensor(&mut rng, 4, 2, 3, 3));
        for c in 0..2 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|n| y.data[(n * 2 + c) * 9..(n * 2 + c) * 9 + 9].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }
}
