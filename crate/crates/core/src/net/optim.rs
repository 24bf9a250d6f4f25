use serde::{Deserialize, Serialize};

use super::NetworkParams;
use crate::error::{Error, Result};

/// Adam with the usual constants (β1 = 0.9, β2 = 0.999, ε = 1e-8) and an L2
/// weight-decay term added to the gradient before the moment updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        OptimizerState {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }
}

pub fn adam_step(state: &mut OptimizerState, params: &mut NetworkParams, gradient: &[f64]) -> Result<()> {
    if gradient.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::contract(format!(
            "gradient length {} / optimizer length {} / parameter length {} differ",
            gradient.len(),
            state.first_moment.len(),
            params.len()
        )));
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient entry {} at parameter index {i}",
            gradient[i]
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, lr, wd) = (state.beta1, state.beta2, state.eps, state.lr, state.weight_decay);
    let theta = params.flat_mut();
    for i in 0..theta.len() {
        let g = gradient[i] + wd * theta[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        theta[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` once the best validation loss
/// has not strictly improved for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    best: f64,
    bad_epochs: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        PlateauScheduler::new(10, 0.9)
    }
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one epoch's validation loss and returns the learning rate to use next.
    pub fn step(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            lr * self.factor
        } else {
            lr
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Replays a validation-loss history with the default schedule and returns
/// the learning rate after the last epoch, given the rate `lr` before it.
pub fn plateau_scheduler(history: &[f64], lr: f64) -> f64 {
    let mut sched = PlateauScheduler::default();
    let mut out = lr;
    for (i, &loss) in history.iter().enumerate() {
        let next = sched.step(loss, lr);
        if i + 1 == history.len() {
            out = next;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetworkConfig, NetworkParams};

    fn scalar_net(value: f64) -> NetworkParams {
        // 1 -> 1 -> 1 network; only the first weight matters here.
        let mut cfg = NetworkConfig::new(1, 1, 1);
        cfg.num_layers = 2;
        let mut p = NetworkParams::zeros(cfg).unwrap();
        p.flat_mut()[0] = value;
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_net(0.5);
        let mut s = OptimizerState::new(4, 1e-3, 0.0);
        adam_step(&mut s, &mut p, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expect = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p.flat()[0] - expect).abs() < 1e-15);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = scalar_net(0.5);
        let mut s = OptimizerState::new(4, 1e-3, 0.0);
        adam_step(&mut s, &mut p, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let before = p.to_flat();
        let m0 = s.first_moment()[0];
        let mut q = scalar_net(0.0);
        q.flat_mut().copy_from_slice(&before);
        let mut z = OptimizerState::new(4, 1e-3, 0.0);
        adam_step(&mut z, &mut q, &[0.0; 4]).unwrap();
        assert_eq!(q.to_flat(), before);
        adam_step(&mut s, &mut p, &[0.0; 4]).unwrap();
        assert!((s.first_moment()[0] - 0.9 * m0).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_enters_the_gradient() {
        let mut p = scalar_net(2.0);
        let mut s = OptimizerState::new(4, 1e-3, 0.5);
        adam_step(&mut s, &mut p, &[0.0; 4]).unwrap();
        // g = 0.5 * 2 = 1 so the first step is again -lr
        assert!((p.flat()[0] - (2.0 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar_net(0.5);
        let mut s = OptimizerState::new(4, 1e-3, 0.0);
        let err = adam_step(&mut s, &mut p, &[0.0, f64::NAN, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Numeric(ref m) if m.contains("index 1")));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn plateau_rules() {
        let decreasing: Vec<f64> = (0..30).map(|i| 10.0 - i as f64 * 0.1).collect();
        assert_eq!(plateau_scheduler(&decreasing, 1e-3), 1e-3);

        let mut ten_flat = vec![1.0];
        ten_flat.extend(std::iter::repeat_n(1.0, 10));
        assert!((plateau_scheduler(&ten_flat, 1e-3) - 9e-4).abs() < 1e-18);

        let mut nine_flat = vec![1.0];
        nine_flat.extend(std::iter::repeat_n(1.5, 9));
        assert_eq!(plateau_scheduler(&nine_flat, 1e-3), 1e-3);
    }

    #[test]
    fn plateau_counter_resets_after_reduction() {
        let mut s = PlateauScheduler::default();
        let mut lr = 1.0;
        lr = s.step(1.0, lr);
        for _ in 0..10 {
            lr = s.step(2.0, lr);
        }
        assert!((lr - 0.9).abs() < 1e-15);
        for _ in 0..9 {
            lr = s.step(2.0, lr);
        }
        assert!((lr - 0.9).abs() < 1e-15);
        lr = s.step(2.0, lr);
        assert!((lr - 0.81).abs() < 1e-15);
    }
}
