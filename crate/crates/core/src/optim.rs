//! Adam with per-parameter-class learning rates.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gaussian::{param, GaussianCloud, Params, PARAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub position_init: f64,
    pub position_final: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            log_scale: 1e-3,
            rotation: 1e-3,
            opacity: 1e-3,
            color: 1e-3,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position_init,
            self.position_final,
            self.log_scale,
            self.rotation,
            self.opacity,
            self.color,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "learning rates must be finite and non-negative",
            ));
        }
        if self.position_init > 0.0 && self.position_final <= 0.0 {
            return Err(Error::InvalidParameter(
                "position decay needs a positive final rate",
            ));
        }
        Ok(())
    }

    /// Position rate decays log-linearly from `position_init` at step 0 to
    /// `position_final` at `total_steps`.
    pub fn position_at(&self, step: usize, total_steps: usize) -> f64 {
        if self.position_init == 0.0 {
            return 0.0;
        }
        let t = if total_steps == 0 {
            0.0
        } else {
            (step as f64 / total_steps as f64).clamp(0.0, 1.0)
        };
        (self.position_init.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
    }

    fn per_param(&self, step: usize, total_steps: usize) -> Params {
        let mut lr = [0.0; PARAM_COUNT];
        lr[param::MU].fill(self.position_at(step, total_steps));
        lr[param::LOG_SCALE].fill(self.log_scale);
        lr[param::QUAT].fill(self.rotation);
        lr[param::OPACITY] = self.opacity;
        lr[param::COLOR].fill(self.color);
        lr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub rates: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub total_steps: usize,
    step: usize,
    m: Vec<Params>,
    v: Vec<Params>,
}

impl Adam {
    pub fn new(rates: LearningRates, total_steps: usize, n_points: usize) -> Self {
        Self {
            rates,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            total_steps,
            step: 0,
            m: vec![[0.0; PARAM_COUNT]; n_points],
            v: vec![[0.0; PARAM_COUNT]; n_points],
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Applies one update from the gradients stored in `cloud`.
    pub fn step(&mut self, cloud: &mut GaussianCloud) -> Result<()> {
        if cloud.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: (self.m.len(), 1),
                actual: (cloud.len(), 1),
            });
        }
        let lr = self.rates.per_param(self.step, self.total_steps);
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (points, grads) = cloud.split_mut();
        for (((pt, g), m), v) in points
            .iter_mut()
            .zip(grads.iter())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let mut p = pt.to_params();
            for k in 0..PARAM_COUNT {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] -= lr[k] * mh / (vh.sqrt() + self.eps);
            }
            *pt = crate::gaussian::GaussianPoint::from_params(&p);
        }
        Ok(())
    }
}
