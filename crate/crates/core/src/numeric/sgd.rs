//! SGD with momentum and weight decay, plus learning-rate schedules.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// Linear ramp from 0 to `peak` over the first `warmup_ratio` of the
    /// steps, then cosine decay from `peak` to 0 at `total_steps`.
    WarmupCosine {
        peak: f64,
        warmup_ratio: f64,
        total_steps: u64,
    },
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr.max(0.0),
            LrSchedule::WarmupCosine {
                peak,
                warmup_ratio,
                total_steps,
            } => {
                let total = total_steps as f64;
                let step = (step as f64).min(total);
                let warmup = warmup_ratio * total;
                let lr = if step < warmup {
                    peak * step / warmup
                } else if total > warmup {
                    let progress = (step - warmup) / (total - warmup);
                    peak * (1.0 + math::cos(PI * progress)) / 2.0
                } else {
                    peak
                };
                lr.max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Momentum buffers and step counter for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub config: SgdConfig,
    pub step: u64,
    buffers: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            step: 0,
            buffers: Vec::new(),
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.config.schedule.lr_at(step)
    }

    pub fn buffers(&self) -> &[Vec<f64>] {
        &self.buffers
    }

    /// `v = momentum * v + (g + wd * p)`, `p -= lr * v`, with `lr` taken from
    /// the schedule at the current step. Buffers are created on first use.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("{} gradient tensors", params.len()),
                format!("{}", grads.len()),
            ));
        }
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.buffers.len() != params.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("{} momentum buffers", self.buffers.len()),
                format!("{} parameter tensors", params.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != g.len() || p.len() != self.buffers[i].len() {
                return Err(Error::shape(
                    "sgd_step",
                    format!("tensor {i} of length {}", self.buffers[i].len()),
                    format!("param {} / grad {}", p.len(), g.len()),
                ));
            }
        }
        let lr = self.lr_at(self.step);
        let SgdConfig {
            momentum,
            weight_decay,
            ..
        } = self.config;
        for ((p, g), buf) in params.iter_mut().zip(&grads).zip(&mut self.buffers) {
            for ((pj, gj), vj) in p.iter_mut().zip(g.iter()).zip(buf.iter_mut()) {
                *vj = momentum * *vj + (gj + weight_decay * *pj);
                *pj -= lr * *vj;
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(lr: f64, momentum: f64, wd: f64) -> SgdState {
        SgdState::new(SgdConfig {
            schedule: LrSchedule::Constant { lr },
            momentum,
            weight_decay: wd,
        })
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = constant(0.5, 0.9, 0.0);
        let mut p = vec![1.0, -2.0];
        s.step(vec![&mut p], vec![&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn plain_sgd_with_weight_decay() {
        let mut s = constant(0.1, 0.0, 0.01);
        let mut p = vec![2.0];
        s.step(vec![&mut p], vec![&[3.0]]).unwrap();
        assert!((p[0] - (2.0 - 0.1 * (3.0 + 0.01 * 2.0))).abs() < 1e-15);
    }

    #[test]
    fn momentum_unrolls_to_two_point_nine() {
        let mut s = constant(1.0, 0.9, 0.0);
        let mut p = vec![0.0];
        s.step(vec![&mut p], vec![&[1.0]]).unwrap();
        s.step(vec![&mut p], vec![&[1.0]]).unwrap();
        assert!((p[0] + 2.9).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = constant(1.0, 0.9, 0.0);
        let mut p = vec![0.0, 1.0];
        assert!(s.step(vec![&mut p], vec![&[1.0]]).is_err());
    }

    #[test]
    fn warmup_cosine_landmarks() {
        let sched = LrSchedule::WarmupCosine {
            peak: 0.01,
            warmup_ratio: 0.1,
            total_steps: 1000,
        };
        assert_eq!(sched.lr_at(0), 0.0);
        assert!((sched.lr_at(100) - 0.01).abs() < 1e-15);
        // midpoint of the decay region: peak * (1 + cos(pi/2)) / 2
        assert!((sched.lr_at(550) - 0.005).abs() < 1e-12);
        assert!(sched.lr_at(1000).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for s in 100..=1000 {
            let lr = sched.lr_at(s);
            assert!(lr <= prev && lr >= 0.0);
            prev = lr;
        }
    }

    #[test]
    fn schedule_continuous_at_junction() {
        let sched = LrSchedule::WarmupCosine {
            peak: 0.1,
            warmup_ratio: 0.1,
            total_steps: 1_000_000,
        };
        let a = sched.lr_at(99_999);
        let b = sched.lr_at(100_000);
        let c = sched.lr_at(100_001);
        assert!((a - b).abs() < 1e-6 && (b - c).abs() < 1e-9);
    }
}
