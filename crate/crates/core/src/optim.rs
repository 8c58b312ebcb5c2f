//! SGD with momentum and weight decay under a half-cosine learning-rate schedule.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{check_layout, Gradients, ModelParams};

/// `η(t) = η0 · ½ · (1 + cos(π t / T))`.
pub fn cosine_lr(step: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Range {
            what: "total_steps",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    if step > total_steps {
        return Err(Error::Range {
            what: "step",
            value: step as f64,
            range: "[0, total_steps]",
        });
    }
    let frac = step as f64 / total_steps as f64;
    Ok(base_lr * 0.5 * (1.0 + libm::cos(PI * frac)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub velocity: Gradients,
    pub step: u64,
    pub base_lr: f64,
    pub total_steps: u64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(
        params: &ModelParams,
        base_lr: f64,
        total_steps: u64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<Self> {
        if !(base_lr > 0.0) {
            return Err(Error::Range {
                what: "base_lr",
                value: base_lr,
                range: "(0, inf)",
            });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Range {
                what: "momentum",
                value: momentum,
                range: "[0, 1)",
            });
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::Range {
                what: "weight_decay",
                value: weight_decay,
                range: "[0, inf)",
            });
        }
        if total_steps == 0 {
            return Err(Error::Range {
                what: "total_steps",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        Ok(Self {
            velocity: Gradients::zeros_like(params),
            step: 0,
            base_lr,
            total_steps,
            momentum,
            weight_decay,
        })
    }

    pub fn current_lr(&self) -> Result<f64> {
        cosine_lr(self.step, self.total_steps, self.base_lr)
    }
}

/// One SGD step: `v ← μ·v + (g + λ·θ)`, `θ ← θ − η(t)·v`, then `t ← t + 1`.
/// Returns the learning rate that was applied.
pub fn sgd_step(params: &mut ModelParams, opt: &mut OptimizerState, grads: &Gradients) -> Result<f64> {
    check_layout(params.buffers(), grads.buffers())?;
    check_layout(params.buffers(), opt.velocity.buffers())?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    let lr = opt.current_lr()?;
    let (momentum, wd) = (opt.momentum, opt.weight_decay);
    for ((p, g), v) in params
        .buffers_mut()
        .zip(grads.buffers())
        .zip(opt.velocity.buffers_mut())
    {
        for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = momentum * *v + (g + wd * *p);
            *p -= lr * *v;
        }
    }
    opt.step += 1;
    params.generation += 1;
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use alloc::vec::Vec;

    fn scalar_model(value: f64) -> ModelParams {
        ModelParams {
            layers: Vec::new(),
            head: DenseMatrix::from_vec(1, 1, alloc::vec![value]).unwrap(),
            generation: 0,
        }
    }

    fn scalar_grad(value: f64) -> Gradients {
        Gradients {
            layers: Vec::new(),
            head: DenseMatrix::from_vec(1, 1, alloc::vec![value]).unwrap(),
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar_model(1.0);
        let mut opt = OptimizerState::new(&p, 0.1, 100, 0.0, 0.0).unwrap();
        sgd_step(&mut p, &mut opt, &scalar_grad(2.0)).unwrap();
        assert!((p.head.get(0, 0) - 0.8).abs() < 1e-15);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_model(0.3);
        let mut opt = OptimizerState::new(&p, 0.1, 100, 0.9, 0.0).unwrap();
        sgd_step(&mut p, &mut opt, &scalar_grad(0.0)).unwrap();
        assert_eq!(p.head.get(0, 0), 0.3);
    }

    #[test]
    fn momentum_carries_velocity() {
        let mut p = scalar_model(0.0);
        let mut opt = OptimizerState::new(&p, 0.1, 100, 0.9, 0.0).unwrap();
        opt.velocity.head.set(0, 0, 1.0);
        sgd_step(&mut p, &mut opt, &scalar_grad(0.0)).unwrap();
        assert!((opt.velocity.head.get(0, 0) - 0.9).abs() < 1e-15);
        assert!((p.head.get(0, 0) + 0.09).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = scalar_model(0.0);
        let mut opt = OptimizerState::new(&p, 0.1, 100, 0.9, 0.0).unwrap();
        assert!(sgd_step(&mut p, &mut opt, &scalar_grad(f64::NAN)).is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0, 1000, 0.03).unwrap(), 0.03);
        assert!(cosine_lr(1000, 1000, 0.03).unwrap().abs() < 1e-18);
        assert!((cosine_lr(500, 1000, 0.03).unwrap() - 0.015).abs() < 1e-15);
        assert!(cosine_lr(1001, 1000, 0.03).is_err());
        let mut prev = f64::INFINITY;
        for t in 0..=1000 {
            let lr = cosine_lr(t, 1000, 0.03).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }
}
