use super::tensor::{Tensor, TensorError};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy of `[batch, 1]` probabilities against 0/1
/// targets, with its gradient with respect to the probabilities.
pub fn binary_cross_entropy(probs: &Tensor, targets: &[f64]) -> Result<(f64, Tensor), TensorError> {
    probs.expect_shape(&[targets.len(), 1], "binary cross-entropy input")?;
    probs.ensure_finite("binary cross-entropy input")?;
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(probs.shape());
    for ((p, t), g) in probs.data().iter().zip(targets).zip(grad.data_mut()) {
        let p = clamp(*p);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        *g = (p - t) / (p * (1.0 - p)) / n;
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(TensorError::NonFinite("binary cross-entropy"));
    }
    Ok((loss, grad))
}

/// Mean categorical cross-entropy of `[batch, classes]` probabilities
/// against class indices, with its gradient with respect to the
/// probabilities.
pub fn categorical_cross_entropy(
    probs: &Tensor,
    targets: &[usize],
) -> Result<(f64, Tensor), TensorError> {
    probs.expect_rank(2, "categorical cross-entropy input")?;
    let classes = probs.shape()[1];
    probs.expect_shape(&[targets.len(), classes], "categorical cross-entropy input")?;
    probs.ensure_finite("categorical cross-entropy input")?;
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(probs.shape());
    for ((row, &t), grow) in probs
        .data()
        .chunks_exact(classes)
        .zip(targets)
        .zip(grad.data_mut().chunks_exact_mut(classes))
    {
        if t >= classes {
            return Err(TensorError::ShapeMismatch {
                context: "categorical cross-entropy target",
                expected: vec![classes],
                found: vec![t],
            });
        }
        let p = clamp(row[t]);
        loss -= p.ln();
        grow[t] = -1.0 / p / n;
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(TensorError::NonFinite("categorical cross-entropy"));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_half() {
        let p = Tensor::from_vec(&[1, 1], vec![0.5]).unwrap();
        let (loss, _) = binary_cross_entropy(&p, &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_gradient_matches_central_difference() {
        let (p0, t, h) = (0.8, 1.0, 1e-5);
        let at = |p: f64| {
            binary_cross_entropy(&Tensor::from_vec(&[1, 1], vec![p]).unwrap(), &[t])
                .unwrap()
                .0
        };
        let numeric = (at(p0 + h) - at(p0 - h)) / (2.0 * h);
        let (_, g) =
            binary_cross_entropy(&Tensor::from_vec(&[1, 1], vec![p0]).unwrap(), &[t]).unwrap();
        let rel = (g.data()[0] - numeric).abs() / numeric.abs();
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn cce_perfect_prediction_is_near_zero() {
        let p = Tensor::from_vec(&[1, 5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let (loss, _) = categorical_cross_entropy(&p, &[2]).unwrap();
        assert!((0.0..=1e-10).contains(&loss));
    }

    #[test]
    fn cce_rejects_bad_target() {
        let p = Tensor::from_vec(&[1, 5], vec![0.2; 5]).unwrap();
        assert!(categorical_cross_entropy(&p, &[5]).is_err());
        let (loss, _) = categorical_cross_entropy(&p, &[4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }
}
