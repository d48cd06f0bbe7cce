//! Nesterov-accelerated Adam with the momentum-schedule correction
//! (`mu_t = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay))`).

use super::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule_decay: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        NadamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            schedule_decay: 0.004,
        }
    }
}

/// Optimizer state: one first/second moment buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Nadam {
    pub config: NadamConfig,
    step_count: u64,
    /// Running product of the momentum schedule.
    m_schedule: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Nadam {
    pub fn new(config: NadamConfig) -> Self {
        Nadam {
            config,
            step_count: 0,
            m_schedule: 1.0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    fn momentum(&self, t: f64) -> f64 {
        self.config.beta1 * (1.0 - 0.5 * 0.96f64.powf(t * self.config.schedule_decay))
    }

    /// Applies one update. `params` and `grads` are matched by position and
    /// must keep the same shapes across calls.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
    ) -> Result<(), TensorError> {
        if params.len() != grads.len() {
            return Err(TensorError::ShapeMismatch {
                context: "nadam parameter list",
                expected: vec![params.len()],
                found: vec![grads.len()],
            });
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            g.expect_shape(p.shape(), "nadam gradient")?;
            if m.len() != p.len() {
                return Err(TensorError::ShapeMismatch {
                    context: "nadam moment buffer",
                    expected: vec![m.len()],
                    found: p.shape().to_vec(),
                });
            }
        }

        let NadamConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let t = (self.step_count + 1) as f64;
        let mu_t = self.momentum(t);
        let mu_next = self.momentum(t + 1.0);
        let schedule_new = self.m_schedule * mu_t;
        let schedule_next = schedule_new * mu_next;
        let bias2 = 1.0 - beta2.powf(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g_hat = g / (1.0 - schedule_new);
                *m = beta1 * *m + (1.0 - beta1) * g;
                let m_hat = *m / (1.0 - schedule_next);
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let v_hat = *v / bias2;
                let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
                *w -= lr * m_bar / (v_hat.sqrt() + epsilon);
            }
        }
        self.m_schedule = schedule_new;
        self.step_count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Tensor::from_vec(&[3], vec![0.3, -1.0, 2.0]).unwrap();
        let before = w.clone();
        let mut opt = Nadam::new(NadamConfig::default());
        for _ in 0..10 {
            opt.step(&mut [&mut w], &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(opt.step_count(), 10);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // mu1 = 0.9 (1 - 0.5 * 0.96^0.004), mu2 = 0.9 (1 - 0.5 * 0.96^0.008),
        // update = lr * [(1 - mu1) g/(1 - mu1) + mu2 * 0.1 / (1 - mu1 mu2)] / (1 + 1e-8).
        let mut w = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let mut opt = Nadam::new(NadamConfig::default());
        opt.step(&mut [&mut w], &[Tensor::from_vec(&[1], vec![1.0]).unwrap()])
            .unwrap();
        assert!((w.data()[0] - -0.001_056_451_767_790_870_5).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        for &w0 in &[1.0, -1.0, 0.5, -0.25, 0.9] {
            let mut w = Tensor::from_vec(&[1], vec![w0]).unwrap();
            let mut opt = Nadam::new(NadamConfig {
                learning_rate: 0.05,
                ..NadamConfig::default()
            });
            for _ in 0..500 {
                let g = Tensor::from_vec(&[1], vec![2.0 * w.data()[0]]).unwrap();
                opt.step(&mut [&mut w], &[g]).unwrap();
            }
            assert!(w.data()[0].abs() < 1e-3, "w0={w0} ended at {}", w.data()[0]);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut w = Tensor::zeros(&[2]);
        let mut opt = Nadam::new(NadamConfig::default());
        assert!(opt.step(&mut [&mut w], &[Tensor::zeros(&[3])]).is_err());
        assert!(opt.step(&mut [&mut w], &[]).is_err());
    }
}
