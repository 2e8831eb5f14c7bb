//! Trainable layers and activations. Each layer caches what its backward
//! pass needs during forward; backward consumes the cache and accumulates
//! parameter gradients in place.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops;
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{Mode, NnError};

/// A trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Param<S: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub grad: Vec<S>,
    pub m: Vec<S>,
    pub v: Vec<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<S>) -> Self {
        let n = data.len();
        assert_eq!(shape.iter().product::<usize>(), n);
        Param {
            name: name.to_string(),
            shape,
            data,
            grad: vec![S::ZERO; n],
            m: vec![S::ZERO; n],
            v: vec![S::ZERO; n],
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::ZERO);
    }
}

/// Draw from N(0, 0.02), the initialization used for all conv kernels.
pub fn init_normal<S: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<S> {
    let dist = Normal::new(0.0f64, 0.02).unwrap();
    (0..n).map(|_| S::from_f64(dist.sample(rng))).collect()
}

/// Strided convolution layer (kernel 4 everywhere in this codebase).
#[derive(Debug, Clone)]
pub struct Conv2d<S: Scalar> {
    pub w: Param<S>,
    pub b: Param<S>,
    pub stride: usize,
    pub pad: usize,
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Conv2d {
            w: Param::new(
                &format!("{name}.weight"),
                vec![out_ch, in_ch, k, k],
                init_normal(rng, out_ch * in_ch * k * k),
            ),
            b: Param::new(&format!("{name}.bias"), vec![out_ch], vec![S::ZERO; out_ch]),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let w = Tensor::from_vec(
            [self.w.shape[0], self.w.shape[1], self.w.shape[2], self.w.shape[3]],
            self.w.data.clone(),
        );
        let y = ops::conv2d(x, &w, &self.b.data, self.stride, self.pad);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let x = self.cache.take().ok_or(NnError::NoForwardCache)?;
        let w = Tensor::from_vec(
            [self.w.shape[0], self.w.shape[1], self.w.shape[2], self.w.shape[3]],
            self.w.data.clone(),
        );
        let (gx, gw, gb) = ops::conv2d_backward(&x, &w, gy, self.stride, self.pad);
        for (a, b) in self.w.grad.iter_mut().zip(&gw.data) {
            *a += *b;
        }
        for (a, b) in self.b.grad.iter_mut().zip(&gb) {
            *a += *b;
        }
        Ok(gx)
    }
}

/// Transposed convolution layer; weight layout (in_ch, out_ch, k, k).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<S: Scalar> {
    pub w: Param<S>,
    pub b: Param<S>,
    pub stride: usize,
    pub pad: usize,
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> ConvTranspose2d<S> {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ConvTranspose2d {
            w: Param::new(
                &format!("{name}.weight"),
                vec![in_ch, out_ch, k, k],
                init_normal(rng, in_ch * out_ch * k * k),
            ),
            b: Param::new(&format!("{name}.bias"), vec![out_ch], vec![S::ZERO; out_ch]),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let w = Tensor::from_vec(
            [self.w.shape[0], self.w.shape[1], self.w.shape[2], self.w.shape[3]],
            self.w.data.clone(),
        );
        let y = ops::conv2d_transpose(x, &w, &self.b.data, self.stride, self.pad);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let x = self.cache.take().ok_or(NnError::NoForwardCache)?;
        let w = Tensor::from_vec(
            [self.w.shape[0], self.w.shape[1], self.w.shape[2], self.w.shape[3]],
            self.w.data.clone(),
        );
        let (gx, gw, gb) = ops::conv2d_transpose_backward(&x, &w, gy, self.stride, self.pad);
        for (a, b) in self.w.grad.iter_mut().zip(&gw.data) {
            *a += *b;
        }
        for (a, b) in self.b.grad.iter_mut().zip(&gb) {
            *a += *b;
        }
        Ok(gx)
    }
}

/// Batch normalization over (batch, height, width) per channel. Training
/// uses biased batch statistics and maintains running estimates for eval.
#[derive(Debug, Clone)]
pub struct BatchNorm<S: Scalar> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<S>>,
}

#[derive(Debug, Clone)]
struct BnCache<S: Scalar> {
    xhat: Tensor<S>,
    inv_std: Vec<S>,
    mode: Mode,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(name: &str, ch: usize) -> Self {
        BatchNorm {
            gamma: Param::new(&format!("{name}.gamma"), vec![ch], vec![S::ONE; ch]),
            beta: Param::new(&format!("{name}.beta"), vec![ch], vec![S::ZERO; ch]),
            running_mean: vec![S::ZERO; ch],
            running_var: vec![S::ONE; ch],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Tensor<S> {
        let [n, c, h, w] = x.shape;
        let plane = h * w;
        let count = S::from_f64((n * plane) as f64);
        let mut out = Tensor::zeros(x.shape);
        let mut xhat = Tensor::zeros(x.shape);
        let mut inv_std = vec![S::ZERO; c];
        for ci in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = S::ZERO;
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for &v in &x.data[base..base + plane] {
                            sum += v;
                        }
                    }
                    let mean = sum / count;
                    let mut ss = S::ZERO;
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for &v in &x.data[base..base + plane] {
                            let d = v - mean;
                            ss += d * d;
                        }
                    }
                    let var = ss / count;
                    let mom = S::from_f64(self.momentum);
                    self.running_mean[ci] =
                        (S::ONE - mom) * self.running_mean[ci] + mom * mean;
                    self.running_var[ci] = (S::ONE - mom) * self.running_var[ci] + mom * var;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean[ci], self.running_var[ci]),
            };
            let istd = S::ONE / (var + S::from_f64(self.eps)).sqrt();
            inv_std[ci] = istd;
            let g = self.gamma.data[ci];
            let bt = self.beta.data[ci];
            for b in 0..n {
                let base = (b * c + ci) * plane;
                for i in base..base + plane {
                    let xh = (x.data[i] - mean) * istd;
                    xhat.data[i] = xh;
                    out.data[i] = g * xh + bt;
                }
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        out
    }

    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let cache = self.cache.take().ok_or(NnError::NoForwardCache)?;
        let [n, c, h, w] = gy.shape;
        let plane = h * w;
        let count = S::from_f64((n * plane) as f64);
        let mut gx = Tensor::zeros(gy.shape);
        for ci in 0..c {
            let g = self.gamma.data[ci];
            let istd = cache.inv_std[ci];
            let mut sum_gy = S::ZERO;
            let mut sum_gy_xh = S::ZERO;
            for b in 0..n {
                let base = (b * c + ci) * plane;
                for i in base..base + plane {
                    sum_gy += gy.data[i];
                    sum_gy_xh += gy.data[i] * cache.xhat.data[i];
                }
            }
            self.beta.grad[ci] += sum_gy;
            self.gamma.grad[ci] += sum_gy_xh;
            match cache.mode {
                Mode::Train => {
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for i in base..base + plane {
                            gx.data[i] = g * istd / count
                                * (count * gy.data[i]
                                    - sum_gy
                                    - cache.xhat.data[i] * sum_gy_xh);
                        }
                    }
                }
                Mode::Eval => {
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for i in base..base + plane {
                            gx.data[i] = g * istd * gy.data[i];
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Leaky ReLU with the given negative slope; caches the input sign pattern.
#[derive(Debug, Clone)]
pub struct LeakyRelu<S: Scalar> {
    pub slope: f64,
    cache: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> LeakyRelu<S> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope,
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let s = S::from_f64(self.slope);
        let neg: Vec<bool> = x.data.iter().map(|&v| v < S::ZERO).collect();
        let data = x
            .data
            .iter()
            .map(|&v| if v < S::ZERO { v * s } else { v })
            .collect();
        self.cache = Some(neg);
        Tensor::from_vec(x.shape, data)
    }

    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let neg = self.cache.take().ok_or(NnError::NoForwardCache)?;
        let s = S::from_f64(self.slope);
        let data = gy
            .data
            .iter()
            .zip(&neg)
            .map(|(&g, &isneg)| if isneg { g * s } else { g })
            .collect();
        Ok(Tensor::from_vec(gy.shape, data))
    }
}

/// Scaled tanh activation mapping to (0, 1): y = (tanh(x) + 1) / 2.
#[derive(Debug, Clone)]
pub struct Tanh01<S: Scalar> {
    cache: Option<Vec<S>>,
}

impl<S: Scalar> Tanh01<S> {
    pub fn new() -> Self {
        Tanh01 { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let half = S::from_f64(0.5);
        let t: Vec<S> = x.data.iter().map(|&v| v.tanh()).collect();
        let data = t.iter().map(|&tv| (tv + S::ONE) * half).collect();
        self.cache = Some(t);
        Tensor::from_vec(x.shape, data)
    }

    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let t = self.cache.take().ok_or(NnError::NoForwardCache)?;
        let half = S::from_f64(0.5);
        let data = gy
            .data
            .iter()
            .zip(&t)
            .map(|(&g, &tv)| g * (S::ONE - tv * tv) * half)
            .collect();
        Ok(Tensor::from_vec(gy.shape, data))
    }
}

impl<S: Scalar> Default for Tanh01<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Elementwise logistic sigmoid (no cache; used on detached values only).
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::ZERO {
        S::ONE / (S::ONE + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::ONE + e)
    }
}

/// Inverted-scaling dropout: kept units are multiplied by 1/(1-rate) during
/// training; eval mode is the identity.
#[derive(Debug, Clone)]
pub struct Dropout<S: Scalar> {
    pub rate: f64,
    cache: Option<Vec<S>>,
}

impl<S: Scalar> Dropout<S> {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate));
        Dropout { rate, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor<S> {
        match mode {
            Mode::Eval => {
                self.cache = Some(Vec::new());
                x.clone()
            }
            Mode::Train => {
                let scale = S::from_f64(1.0 / (1.0 - self.rate));
                let mask: Vec<S> = (0..x.numel())
                    .map(|_| {
                        if rng.gen::<f64>() < self.rate {
                            S::ZERO
                        } else {
                            scale
                        }
                    })
                    .collect();
                let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                self.cache = Some(mask);
                Tensor::from_vec(x.shape, data)
            }
        }
    }

    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let mask = self.cache.take().ok_or(NnError::NoForwardCache)?;
        if mask.is_empty() {
            return Ok(gy.clone());
        }
        let data = gy.data.iter().zip(&mask).map(|(&g, &m)| g * m).collect();
        Ok(Tensor::from_vec(gy.shape, data))
    }
}
