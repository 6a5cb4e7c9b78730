use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Per-phase optimizer state. A fresh instance is created for every training
/// phase, so moment estimates never leak between pretraining and finetuning.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    linear_decay: bool,
    total_steps: usize,
    step: usize,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(
        kind: OptimizerKind,
        learning_rate: f64,
        linear_decay: bool,
        total_steps: usize,
        n_params: usize,
    ) -> Self {
        let moments = if kind == OptimizerKind::Adam { n_params } else { 0 };
        Optimizer {
            kind,
            learning_rate,
            linear_decay,
            total_steps: total_steps.max(1),
            step: 0,
            first: vec![0.0; moments],
            second: vec![0.0; moments],
        }
    }

    /// Learning rate for the next step.
    pub fn current_rate(&self) -> f64 {
        if self.linear_decay {
            let remaining = self.total_steps.saturating_sub(self.step) as f64;
            self.learning_rate * remaining / self.total_steps as f64
        } else {
            self.learning_rate
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        let rate = self.current_rate();
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= rate * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = BETA1 * self.first[i] + (1.0 - BETA1) * g;
                    self.second[i] = BETA2 * self.second[i] + (1.0 - BETA2) * g * g;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    params[i] -= rate * m_hat / (v_hat.sqrt() + EPSILON);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay_reaches_zero() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1.0, true, 4, 1);
        let mut p = [0.0];
        let mut rates = Vec::new();
        for _ in 0..4 {
            rates.push(opt.current_rate());
            opt.apply(&mut p, &[1.0]);
        }
        assert_eq!(rates, vec![1.0, 0.75, 0.5, 0.25]);
        assert_eq!(opt.current_rate(), 0.0);
        assert_eq!(p[0], -2.5);
    }

    #[test]
    fn adam_first_step_is_rate_sized() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, false, 10, 2);
        let mut p = [1.0, 1.0];
        opt.apply(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
    }
}
