use super::{NumericsError, Result, Tensor};

/// Adam optimizer state for one network's parameter list.
///
/// Moment tensors are aligned by position with the parameter list handed to
/// [`AdamState::step`]; the caller must keep that ordering stable across
/// steps.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(NumericsError::Dimension {
                op: "adam_step",
                detail: format!("{} params vs {} grads", params.len(), grads.len()),
            });
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(NumericsError::Usage(
                "parameter list changed length between adam steps".into(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(NumericsError::Dimension {
                    op: "adam_step",
                    detail: format!(
                        "param {} shape {:?} vs grad shape {:?}",
                        i,
                        p.shape(),
                        g.shape()
                    ),
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].values_mut();
            let v = self.second_moment[i].values_mut();
            let pv = param.values_mut();
            for (j, &g) in grad.values().iter().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                pv[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scales the gradient set so its global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.values())
        .map(|v| v * v)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.values_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut p = Tensor::row(vec![1.0, -2.0, 3.0]);
        let g = Tensor::zeros(&[1, 3]);
        let mut state = AdamState::new(0.001);
        state.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p.values(), &[1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Tensor::row(vec![0.5, -0.5, 2.0]);
        let g = Tensor::row(vec![3.0, -0.2, 0.0]);
        let mut state = AdamState::new(0.001);
        state.step(&mut [&mut p], &[g]).unwrap();
        // First bias-corrected step is -lr * g/(|g| + eps') ~= -lr * sign(g).
        assert!((p.values()[0] - (0.5 - 0.001)).abs() < 1e-6);
        assert!((p.values()[1] - (-0.5 + 0.001)).abs() < 1e-6);
        assert_eq!(p.values()[2], 2.0);
    }

    /// Two identical steps against an independently scripted evaluation of
    /// the Adam recurrences.
    #[test]
    fn two_steps_match_scripted_trace() {
        let lr = 0.001;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let g = [0.4, -1.7];
        let mut expected = [0.25, -0.75];
        let mut m = [0.0f64; 2];
        let mut v = [0.0f64; 2];
        for t in 1..=2u32 {
            for j in 0..2 {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mh = m[j] / (1.0 - b1.powi(t as i32));
                let vh = v[j] / (1.0 - b2.powi(t as i32));
                expected[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }

        let mut p = Tensor::row(vec![0.25, -0.75]);
        let mut state = AdamState::new(lr);
        for _ in 0..2 {
            let grad = Tensor::row(g.to_vec());
            state.step(&mut [&mut p], &[grad]).unwrap();
        }
        for (got, want) in p.values().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-15, "{} vs {}", got, want);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::row(vec![1.0, 2.0]);
        let g = Tensor::row(vec![1.0]);
        let mut state = AdamState::new(0.001);
        assert!(state.step(&mut [&mut p], &[g]).is_err());
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut grads = vec![Tensor::row(vec![3.0, 0.0]), Tensor::row(vec![0.0, 4.0])];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let sq: f64 = grads
            .iter()
            .flat_map(|g| g.values())
            .map(|v| v * v)
            .sum();
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);

        let mut small = vec![Tensor::row(vec![0.1])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].values(), &[0.1]);
    }
}
