use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Tensor, TensorError};
use super::Mode;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Layer kinds, with the codes used in checkpoint manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LayerKind {
    Conv1d = 1,
    MaxPool1d = 2,
    Dense = 3,
    Flatten = 4,
    Dropout = 5,
    Activation = 6,
    Concatenate = 7,
}

impl LayerKind {
    pub fn from_code(code: u8) -> Option<Self> {
        use LayerKind::*;
        [
            Conv1d,
            MaxPool1d,
            Dense,
            Flatten,
            Dropout,
            Activation,
            Concatenate,
        ]
        .into_iter()
        .find(|k| *k as u8 == code)
    }
}

/// Intermediates saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Input(Tensor),
    Output(Tensor),
    Argmax {
        input_shape: Vec<usize>,
        indices: Vec<usize>,
    },
    Mask(Option<Vec<f64>>),
    Shape(Vec<usize>),
    Empty,
}

fn lecun_normal<R: Rng + ?Sized>(tensor: &mut Tensor, fan_in: usize, rng: &mut R) {
    let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive fan-in");
    for v in tensor.data_mut() {
        *v = normal.sample(rng);
    }
}

/// Valid (unpadded), stride-1 convolution over `[batch, length, in]`.
/// Weights are `[kernel, in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Conv1d {
            weight: Tensor::zeros(&[kernel, in_channels, out_channels]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = self.kernel() * self.in_channels();
        lecun_normal(&mut self.weight, fan_in, rng);
        self.bias.fill(0.0);
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize, usize), TensorError> {
        x.expect_rank(3, "conv1d input")?;
        let (batch, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if cin != self.in_channels() || len < self.kernel() {
            return Err(TensorError::ShapeMismatch {
                context: "conv1d input",
                expected: vec![batch, len.max(self.kernel()), self.in_channels()],
                found: x.shape().to_vec(),
            });
        }
        Ok((batch, len, len - self.kernel() + 1))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let (batch, len, out_len) = self.dims(x)?;
        let cin = self.in_channels();
        let cout = self.out_channels();
        let patch = self.kernel() * cin;
        let w = self.weight.data();
        let mut out = Tensor::zeros(&[batch, out_len, cout]);
        for (xb, ob) in x
            .data()
            .chunks_exact(len * cin)
            .zip(out.data_mut().chunks_exact_mut(out_len * cout))
        {
            for (t, orow) in ob.chunks_exact_mut(cout).enumerate() {
                orow.copy_from_slice(self.bias.data());
                let xpatch = &xb[t * cin..t * cin + patch];
                for (xv, wrow) in xpatch.iter().zip(w.chunks_exact(cout)) {
                    for (o, wv) in orow.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates `d weight` into `grads[0]` and `d bias` into `grads[1]`.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor, TensorError> {
        let (batch, len, out_len) = self.dims(x)?;
        let cin = self.in_channels();
        let cout = self.out_channels();
        grad_out.expect_shape(&[batch, out_len, cout], "conv1d upstream gradient")?;
        let patch = self.kernel() * cin;
        let w = self.weight.data();
        let mut dx = Tensor::zeros(x.shape());
        let [dw, db] = grads else {
            return Err(TensorError::MissingForwardCache("conv1d"));
        };
        let (dw, db) = (dw.data_mut(), db.data_mut());
        for ((xb, gb), dxb) in x
            .data()
            .chunks_exact(len * cin)
            .zip(grad_out.data().chunks_exact(out_len * cout))
            .zip(dx.data_mut().chunks_exact_mut(len * cin))
        {
            for (t, grow) in gb.chunks_exact(cout).enumerate() {
                for (d, g) in db.iter_mut().zip(grow) {
                    *d += g;
                }
                let xpatch = &xb[t * cin..t * cin + patch];
                let dxpatch = &mut dxb[t * cin..t * cin + patch];
                for (((xv, dxv), wrow), dwrow) in xpatch
                    .iter()
                    .zip(dxpatch.iter_mut())
                    .zip(w.chunks_exact(cout))
                    .zip(dw.chunks_exact_mut(cout))
                {
                    let mut acc = 0.0;
                    for ((g, wv), dwv) in grow.iter().zip(wrow).zip(dwrow.iter_mut()) {
                        *dwv += xv * g;
                        acc += wv * g;
                    }
                    *dxv += acc;
                }
            }
        }
        Ok(dx)
    }
}

/// Non-overlapping max pooling along the length axis; a trailing remainder
/// shorter than the pool is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub pool: usize,
}

impl MaxPool1d {
    pub fn new(pool: usize) -> Self {
        assert!(pool >= 1, "pool size must be positive");
        MaxPool1d { pool }
    }

    /// Returns the pooled tensor and, for every output element, the flat
    /// input index of the (first) maximum.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>), TensorError> {
        x.expect_rank(3, "maxpool1d input")?;
        let (batch, len, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let out_len = len / self.pool;
        let mut out = Tensor::zeros(&[batch, out_len, ch]);
        let mut indices = vec![0; batch * out_len * ch];
        let data = x.data();
        for b in 0..batch {
            for t in 0..out_len {
                for c in 0..ch {
                    let mut best = (b * len + t * self.pool) * ch + c;
                    for j in 1..self.pool {
                        let idx = (b * len + t * self.pool + j) * ch + c;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    let o = (b * out_len + t) * ch + c;
                    out.data_mut()[o] = data[best];
                    indices[o] = best;
                }
            }
        }
        Ok((out, indices))
    }

    pub fn backward(
        input_shape: &[usize],
        indices: &[usize],
        grad_out: &Tensor,
    ) -> Result<Tensor, TensorError> {
        if grad_out.len() != indices.len() {
            return Err(TensorError::ShapeMismatch {
                context: "maxpool1d upstream gradient",
                expected: vec![indices.len()],
                found: grad_out.shape().to_vec(),
            });
        }
        let mut dx = Tensor::zeros(input_shape);
        for (&i, g) in indices.iter().zip(grad_out.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }
}

/// Fully connected layer over `[batch, in]`; weights are `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(inputs: usize, units: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[inputs, units]),
            bias: Tensor::zeros(&[units]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = self.inputs();
        lecun_normal(&mut self.weight, fan_in, rng);
        self.bias.fill(0.0);
    }

    fn batch(&self, x: &Tensor) -> Result<usize, TensorError> {
        x.expect_rank(2, "dense input")?;
        if x.shape()[1] != self.inputs() {
            return Err(TensorError::ShapeMismatch {
                context: "dense input",
                expected: vec![x.shape()[0], self.inputs()],
                found: x.shape().to_vec(),
            });
        }
        Ok(x.shape()[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let batch = self.batch(x)?;
        let units = self.units();
        let mut out = Tensor::zeros(&[batch, units]);
        for (xrow, orow) in x
            .data()
            .chunks_exact(self.inputs())
            .zip(out.data_mut().chunks_exact_mut(units))
        {
            orow.copy_from_slice(self.bias.data());
            for (xv, wrow) in xrow.iter().zip(self.weight.data().chunks_exact(units)) {
                if *xv == 0.0 {
                    continue;
                }
                for (o, w) in orow.iter_mut().zip(wrow) {
                    *o += xv * w;
                }
            }
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor, TensorError> {
        let batch = self.batch(x)?;
        let units = self.units();
        grad_out.expect_shape(&[batch, units], "dense upstream gradient")?;
        let [dw, db] = grads else {
            return Err(TensorError::MissingForwardCache("dense"));
        };
        let (dw, db) = (dw.data_mut(), db.data_mut());
        let mut dx = Tensor::zeros(x.shape());
        for ((xrow, grow), dxrow) in x
            .data()
            .chunks_exact(self.inputs())
            .zip(grad_out.data().chunks_exact(units))
            .zip(dx.data_mut().chunks_exact_mut(self.inputs()))
        {
            for (d, g) in db.iter_mut().zip(grow) {
                *d += g;
            }
            for ((xv, dxv), (wrow, dwrow)) in xrow.iter().zip(dxrow.iter_mut()).zip(
                self.weight
                    .data()
                    .chunks_exact(units)
                    .zip(dw.chunks_exact_mut(units)),
            ) {
                let mut acc = 0.0;
                for ((g, w), dwv) in grow.iter().zip(wrow).zip(dwrow.iter_mut()) {
                    *dwv += xv * g;
                    acc += w * g;
                }
                *dxv = acc;
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` in training so
/// evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout { rate }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> (Tensor, Option<Vec<f64>>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let mut out = x.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        (out, Some(mask))
    }

    pub fn backward(mask: Option<&[f64]>, grad_out: &Tensor) -> Tensor {
        let mut dx = grad_out.clone();
        if let Some(mask) = mask {
            for (g, m) in dx.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Activation {
    Identity = 0,
    Selu = 1,
    Sigmoid = 2,
    /// Softmax over the last axis of a `[batch, classes]` tensor.
    Softmax = 3,
}

impl Activation {
    pub fn from_code(code: u8) -> Option<Self> {
        use Activation::*;
        [Identity, Selu, Sigmoid, Softmax]
            .into_iter()
            .find(|a| *a as u8 == code)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = x.clone();
        match self {
            Activation::Identity => {}
            Activation::Selu => out.data_mut().iter_mut().for_each(|v| *v = selu(*v)),
            Activation::Sigmoid => out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                x.expect_rank(2, "softmax input")?;
                let classes = x.shape()[1];
                out.data_mut()
                    .chunks_exact_mut(classes)
                    .for_each(softmax_in_place);
            }
        }
        Ok(out)
    }

    /// `cached` is the input for SeLU and the output for sigmoid/softmax.
    pub fn backward(&self, cached: &Tensor, grad_out: &Tensor) -> Result<Tensor, TensorError> {
        grad_out.expect_shape(cached.shape(), "activation upstream gradient")?;
        let mut dx = grad_out.clone();
        match self {
            Activation::Identity => {}
            Activation::Selu => {
                for (g, x) in dx.data_mut().iter_mut().zip(cached.data()) {
                    *g *= selu_grad(*x);
                }
            }
            Activation::Sigmoid => {
                for (g, y) in dx.data_mut().iter_mut().zip(cached.data()) {
                    *g *= y * (1.0 - y);
                }
            }
            Activation::Softmax => {
                let classes = cached.shape()[1];
                for (grow, yrow) in dx
                    .data_mut()
                    .chunks_exact_mut(classes)
                    .zip(cached.data().chunks_exact(classes))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    for (g, y) in grow.iter_mut().zip(yrow) {
                        *g = y * (*g - dot);
                    }
                }
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    Dense(Dense),
    /// `[batch, length, channels]` to `[batch, length * channels]`.
    Flatten,
    Dropout(Dropout),
    Activation(Activation),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv1d(_) => LayerKind::Conv1d,
            Layer::MaxPool1d(_) => LayerKind::MaxPool1d,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Activation(_) => LayerKind::Activation,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self {
            Layer::Conv1d(c) => c.init(rng),
            Layer::Dense(d) => d.init(rng),
            _ => {}
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, Cache), TensorError> {
        Ok(match self {
            Layer::Conv1d(c) => (c.forward(x)?, Cache::Input(x.clone())),
            Layer::Dense(d) => (d.forward(x)?, Cache::Input(x.clone())),
            Layer::MaxPool1d(p) => {
                let (out, indices) = p.forward(x)?;
                let input_shape = x.shape().to_vec();
                (
                    out,
                    Cache::Argmax {
                        input_shape,
                        indices,
                    },
                )
            }
            Layer::Flatten => {
                x.expect_rank(3, "flatten input")?;
                let shape = x.shape().to_vec();
                let out = x.clone().reshape(&[shape[0], shape[1] * shape[2]])?;
                (out, Cache::Shape(shape))
            }
            Layer::Dropout(d) => {
                let (out, mask) = d.forward(x, mode, rng);
                (out, Cache::Mask(mask))
            }
            Layer::Activation(a) => {
                let out = a.forward(x)?;
                let cache = match a {
                    Activation::Identity => Cache::Empty,
                    Activation::Selu => Cache::Input(x.clone()),
                    Activation::Sigmoid | Activation::Softmax => Cache::Output(out.clone()),
                };
                (out, cache)
            }
        })
    }

    /// Forward pass without keeping a cache, for inference.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        match self {
            Layer::Conv1d(c) => c.forward(x),
            Layer::Dense(d) => d.forward(x),
            Layer::MaxPool1d(p) => Ok(p.forward(x)?.0),
            Layer::Flatten => {
                x.expect_rank(3, "flatten input")?;
                let s = x.shape();
                x.clone().reshape(&[s[0], s[1] * s[2]])
            }
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Activation(a) => a.forward(x),
        }
    }

    /// `grads` holds this layer's parameter gradient buffers in `params()`
    /// order; they are accumulated into.
    pub fn backward(
        &self,
        cache: &Cache,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor, TensorError> {
        let missing = || TensorError::MissingForwardCache(self.name());
        match (self, cache) {
            (Layer::Conv1d(c), Cache::Input(x)) => c.backward(x, grad_out, grads),
            (Layer::Dense(d), Cache::Input(x)) => d.backward(x, grad_out, grads),
            (
                Layer::MaxPool1d(_),
                Cache::Argmax {
                    input_shape,
                    indices,
                },
            ) => MaxPool1d::backward(input_shape, indices, grad_out),
            (Layer::Flatten, Cache::Shape(shape)) => grad_out.clone().reshape(shape),
            (Layer::Dropout(_), Cache::Mask(mask)) => {
                Ok(Dropout::backward(mask.as_deref(), grad_out))
            }
            (Layer::Activation(Activation::Identity), Cache::Empty) => Ok(grad_out.clone()),
            (Layer::Activation(a @ Activation::Selu), Cache::Input(x)) => a.backward(x, grad_out),
            (
                Layer::Activation(a @ (Activation::Sigmoid | Activation::Softmax)),
                Cache::Output(y),
            ) => a.backward(y, grad_out),
            _ => Err(missing()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::Dense(_) => "dense",
            Layer::Flatten => "flatten",
            Layer::Dropout(_) => "dropout",
            Layer::Activation(_) => "activation",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_output_length() {
        let conv = Conv1d::new(3, 1, 8);
        let out = conv.forward(&Tensor::zeros(&[2, 100, 1])).unwrap();
        assert_eq!(out.shape(), &[2, 98, 8]);
        assert!(conv.forward(&Tensor::zeros(&[1, 2, 1])).is_err());
        assert!(conv.forward(&Tensor::zeros(&[1, 10, 2])).is_err());
    }

    #[test]
    fn unit_kernel_conv_is_identity() {
        let mut conv = Conv1d::new(1, 1, 1);
        conv.weight.data_mut()[0] = 1.0;
        let x = Tensor::from_vec(&[1, 4, 1], vec![3.0, -1.0, 2.5, 0.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn conv_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[1, 7, 2], &mut rng);
        let mut conv = Conv1d::new(3, 2, 4);
        conv.weight = random(&[3, 2, 4], &mut rng);
        conv.bias = random(&[4], &mut rng);
        let out = conv.forward(&x).unwrap();
        assert_eq!(out.shape(), &[1, 5, 4]);
        for t in 0..5 {
            for o in 0..4 {
                let mut expected = conv.bias.data()[o];
                for j in 0..3 {
                    for c in 0..2 {
                        expected +=
                            x.data()[(t + j) * 2 + c] * conv.weight.data()[(j * 2 + c) * 4 + o];
                    }
                }
                assert!((out.data()[t * 4 + o] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maxpool_values_and_routing() {
        let pool = MaxPool1d::new(2);
        let x = Tensor::from_vec(&[1, 4, 1], vec![1.0, 3.0, 2.0, 8.0]).unwrap();
        let (out, idx) = pool.forward(&x).unwrap();
        assert_eq!(out.data(), &[3.0, 8.0]);
        let g = Tensor::from_vec(&[1, 2, 1], vec![0.5, -2.0]).unwrap();
        let dx = MaxPool1d::backward(x.shape(), &idx, &g).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.5, 0.0, -2.0]);

        let odd = Tensor::from_vec(&[1, 5, 1], vec![4.0; 5]).unwrap();
        let (out, _) = pool.forward(&odd).unwrap();
        assert_eq!(out.data(), &[4.0, 4.0]);
        let (out, _) = pool.forward(&Tensor::zeros(&[1, 98, 3])).unwrap();
        assert_eq!(out.shape(), &[1, 49, 3]);
    }

    #[test]
    fn maxpool_backward_conserves_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[3, 11, 4], &mut rng);
        let pool = MaxPool1d::new(3);
        let (out, idx) = pool.forward(&x).unwrap();
        let g = random(out.shape(), &mut rng);
        let dx = MaxPool1d::backward(x.shape(), &idx, &g).unwrap();
        let sum_in: f64 = dx.data().iter().sum();
        let sum_up: f64 = g.data().iter().sum();
        assert!((sum_in - sum_up).abs() < 1e-12);
        assert_eq!(dx.data().iter().filter(|v| **v != 0.0).count(), g.len());
    }

    #[test]
    fn selu_constants() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.050_700_987_4).abs() < 1e-10);
        assert!((selu(-50.0) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_normalized_for_large_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut row: Vec<f64> = (0..5).map(|_| rng.gen_range(-500.0..500.0)).collect();
            softmax_in_place(&mut row);
            assert!(row.iter().all(|p| *p >= 0.0 && p.is_finite()));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut flat = vec![0.0; 5];
        softmax_in_place(&mut flat);
        assert!(flat.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 10], &mut rng);
        let (y, mask) = Dropout::new(0.0).forward(&x, Mode::Train, &mut rng);
        assert_eq!((y, mask), (x.clone(), None));
        let (y, mask) = Dropout::new(0.5).forward(&x, Mode::Eval, &mut rng);
        assert_eq!((y, mask), (x.clone(), None));
        let (y, mask) = Dropout::new(0.5).forward(&x, Mode::Train, &mut rng);
        let mask = mask.unwrap();
        for ((yv, xv), m) in y.data().iter().zip(x.data()).zip(&mask) {
            assert!(*m == 0.0 || *m == 2.0);
            assert_eq!(*yv, xv * m);
        }
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = Tensor::from_vec(&[1, 4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let trials = 20_000;
        let mut sums = [0.0; 4];
        for _ in 0..trials {
            let (y, _) = Dropout::new(0.5).forward(&x, Mode::Train, &mut rng);
            for (s, v) in sums.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, v) in sums.iter().zip(x.data()) {
            let mean = s / trials as f64;
            // Each sample is v * {0, 2}: sd |v|, so 5 standard errors is 5|v|/sqrt(n).
            let tol = 5.0 * v.abs() / (trials as f64).sqrt();
            assert!((mean - v).abs() < tol, "mean {mean} vs {v}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = Conv1d::new(3, 2, 3);
        conv.init(&mut rng);
        let layer = Layer::Conv1d(conv);
        let x = random(&[2, 6, 2], &mut rng);
        let (y, cache) = layer.forward(&x, Mode::Train, &mut rng).unwrap();
        let mut grads = vec![Tensor::zeros(&[3, 2, 3]), Tensor::zeros(&[3])];
        let dx = layer
            .backward(&cache, &Tensor::zeros(y.shape()), &mut grads)
            .unwrap();
        assert!(dx.data().iter().all(|v| *v == 0.0));
        assert!(grads.iter().all(|g| g.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn backward_without_cache_fails() {
        let layer = Layer::Dense(Dense::new(3, 2));
        let err = layer
            .backward(&Cache::Empty, &Tensor::zeros(&[1, 2]), &mut [])
            .unwrap_err();
        assert_eq!(err, TensorError::MissingForwardCache("dense"));
    }
}
