//! Adam with optional global-norm gradient clipping.

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64, clip_norm: Option<f64>) -> Self {
        Adam {
            learning_rate,
            clip_norm,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clips `grad` in place, then updates `params`. A non-finite gradient
    /// leaves both the parameters and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::InvalidArgument("parameter count changed".into()));
        }
        let sq: f64 = grad.iter().map(|g| g * g).sum();
        if !sq.is_finite() {
            return Err(Error::InvalidValue("non-finite gradient".into()));
        }
        if let Some(c) = self.clip_norm {
            let norm = sq.sqrt();
            if norm > c {
                let s = c / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad.iter()).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= self.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + EPSILON);
        }
        Ok(())
    }
}
