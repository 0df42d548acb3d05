use serde::{Deserialize, Serialize};

/// Adam moments and hyperparameters for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

/// Learning-rate decay policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Multiply by `factor` whenever the best epoch loss has not improved
    /// (relative tolerance 1e-4) for `patience` epochs.
    Plateau {
        factor: f64,
        patience: usize,
    },
    /// Multiply by `factor` after every `every` completed epochs.
    Step {
        factor: f64,
        every: usize,
    },
}

const PLATEAU_REL_TOL: f64 = 1e-4;

/// Tracks epoch losses and applies an [`LrSchedule`].
#[derive(Clone, Debug)]
pub struct LrScheduler {
    schedule: LrSchedule,
    best: f64,
    bad_epochs: usize,
    epochs: usize,
}

impl LrScheduler {
    pub fn new(schedule: LrSchedule) -> Self {
        Self {
            schedule,
            best: f64::INFINITY,
            bad_epochs: 0,
            epochs: 0,
        }
    }

    /// Records one finished epoch; returns the multiplier applied to the
    /// learning rate (1.0 when no decay happened).
    pub fn observe(&mut self, epoch_loss: f64) -> f64 {
        self.epochs += 1;
        match self.schedule {
            LrSchedule::Constant => 1.0,
            LrSchedule::Step { factor, every } => {
                if every > 0 && self.epochs % every == 0 {
                    factor
                } else {
                    1.0
                }
            }
            LrSchedule::Plateau { factor, patience } => {
                if !self.best.is_finite()
                    || epoch_loss < self.best - PLATEAU_REL_TOL * self.best.abs()
                {
                    self.best = epoch_loss;
                    self.bad_epochs = 0;
                    1.0
                } else {
                    self.bad_epochs += 1;
                    if self.bad_epochs >= patience {
                        self.bad_epochs = 0;
                        factor
                    } else {
                        1.0
                    }
                }
            }
        }
    }

    pub fn apply(&mut self, epoch_loss: f64, state: &mut AdamState) {
        state.lr *= self.observe(epoch_loss);
    }
}

/// Learning rate reached after replaying an epoch-loss history from `base_lr`.
pub fn schedule_lr(base_lr: f64, schedule: LrSchedule, history: &[f64]) -> f64 {
    let mut sched = LrScheduler::new(schedule);
    history
        .iter()
        .fold(base_lr, |lr, &loss| lr * sched.observe(loss))
}
