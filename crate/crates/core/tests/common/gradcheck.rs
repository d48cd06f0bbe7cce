//! Central finite-difference checks of the analytic gradients.

use gaitnet::autodiff::{
    binary_cross_entropy, categorical_cross_entropy, Activation, Conv1d, Dense, Dropout, Layer,
    MaxPool1d,
};
use gaitnet::{Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// `||a - n|| / (||a|| + ||n||)`, zero when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a) + norm(n);
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn numeric(f: &mut dyn FnMut(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + H;
            let up = f(&x);
            x[i] = orig - H;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Checks one layer under the objective `sum(y * r)` for a fixed random `r`.
/// Returns the worst relative error over the input and every parameter.
pub fn check_layer(layer: &Layer, x: &Tensor, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let forward = |layer: &Layer, x: &Tensor| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
        layer.forward(x, Mode::Train, &mut mask_rng).unwrap()
    };
    let (y, cache) = forward(layer, x);
    let r = random_tensor(y.shape(), -1.0, 1.0, &mut rng);
    let objective = |y: &Tensor| {
        y.data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };

    let mut grads: Vec<Tensor> = layer
        .params()
        .iter()
        .map(|p| Tensor::zeros(p.shape()))
        .collect();
    let dx = layer.backward(&cache, &r, &mut grads).unwrap();

    let shape = x.shape().to_vec();
    let mut fx =
        |v: &[f64]| objective(&forward(layer, &Tensor::from_vec(&shape, v.to_vec()).unwrap()).0);
    let mut worst = rel_err(dx.data(), &numeric(&mut fx, x.data()));

    for (pi, grad) in grads.iter().enumerate() {
        let base = layer.params()[pi].data().to_vec();
        let mut fp = |v: &[f64]| {
            let mut l = layer.clone();
            l.params_mut()[pi].data_mut().copy_from_slice(v);
            objective(&forward(&l, x).0)
        };
        worst = worst.max(rel_err(grad.data(), &numeric(&mut fp, &base)));
    }
    worst
}

pub fn conv_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv1d::new(3, 3, 4);
    conv.init(&mut rng);
    for b in conv.bias.data_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x = random_tensor(&[2, 7, 3], -2.0, 2.0, &mut rng);
    check_layer(&Layer::Conv1d(conv), &x, seed)
}

pub fn dense_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense = Dense::new(5, 4);
    dense.init(&mut rng);
    for b in dense.bias.data_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x = random_tensor(&[3, 5], -2.0, 2.0, &mut rng);
    check_layer(&Layer::Dense(dense), &x, seed)
}

pub fn maxpool_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 8 + (seed % 2) as usize;
    let x = random_tensor(&[2, len, 3], -2.0, 2.0, &mut rng);
    check_layer(&Layer::MaxPool1d(MaxPool1d::new(2)), &x, seed)
}

pub fn activation_case(activation: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&[3, 5], -3.0, 3.0, &mut rng);
    check_layer(&Layer::Activation(activation), &x, seed)
}

pub fn dropout_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&[4, 6], -2.0, 2.0, &mut rng);
    check_layer(&Layer::Dropout(Dropout::new(0.5)), &x, seed)
}

pub fn flatten_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&[2, 4, 3], -2.0, 2.0, &mut rng);
    check_layer(&Layer::Flatten, &x, seed)
}

/// Softmax followed by categorical cross-entropy, checked end to end from
/// the logits.
pub fn softmax_cce_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 4;
    let logits = random_tensor(&[batch, 5], -3.0, 3.0, &mut rng);
    let targets: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..5)).collect();
    let softmax = Layer::Activation(Activation::Softmax);
    let loss = |z: &Tensor| {
        let p = softmax.infer(z).unwrap();
        categorical_cross_entropy(&p, &targets).unwrap().0
    };
    let (p, cache) = softmax.forward(&logits, Mode::Eval, &mut rng).unwrap();
    let (_, dp) = categorical_cross_entropy(&p, &targets).unwrap();
    let dz = softmax.backward(&cache, &dp, &mut []).unwrap();
    let mut f = |v: &[f64]| loss(&Tensor::from_vec(&[batch, 5], v.to_vec()).unwrap());
    rel_err(dz.data(), &numeric(&mut f, logits.data()))
}

/// Binary cross-entropy with respect to probabilities away from the clamp.
pub fn bce_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 6;
    let p = random_tensor(&[batch, 1], 0.05, 0.95, &mut rng);
    let targets: Vec<f64> = (0..batch)
        .map(|_| f64::from(rng.gen_range(0..2u8)))
        .collect();
    let (_, dp) = binary_cross_entropy(&p, &targets).unwrap();
    let mut f = |v: &[f64]| {
        let t = Tensor::from_vec(&[batch, 1], v.to_vec()).unwrap();
        binary_cross_entropy(&t, &targets).unwrap().0
    };
    rel_err(dp.data(), &numeric(&mut f, p.data()))
}

/// Every layer kind and both losses over `seeds`, with the worst error per
/// kind.
pub fn all_kinds(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64)> {
    type Case = fn(u64) -> f64;
    let cases: [(&'static str, Case); 9] = [
        ("conv1d", conv_case),
        ("dense", dense_case),
        ("maxpool", maxpool_case),
        ("selu", |s| activation_case(Activation::Selu, s)),
        ("sigmoid", |s| activation_case(Activation::Sigmoid, s)),
        ("softmax+cce", softmax_cce_case),
        ("bce", bce_case),
        ("dropout", dropout_case),
        ("flatten", flatten_case),
    ];
    cases
        .iter()
        .map(|(name, case)| {
            let worst = seeds.clone().map(case).fold(0.0, f64::max);
            (*name, worst)
        })
        .collect()
}
