//! Adam optimizer state and update rule.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::tensor::DMat;
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// A named trainable tensor together with its Adam moments.
///
/// The step counter is per-parameter: a parameter's moments advance only
/// when that parameter receives an update, which is what the alternating
/// training phases rely on to leave frozen parameters untouched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: DMat,
    first_moment: DMat,
    second_moment: DMat,
    step: u64,
}

impl Param {
    pub fn new(name: impl Into<String>, value: DMat) -> Self {
        let zeros = Array2::zeros(value.raw_dim());
        Param {
            name: name.into(),
            value,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients,
    /// naming the parameter.
    pub fn adam_step(&mut self, grad: &DMat, lr: f64) -> Result<()> {
        if grad.raw_dim() != self.value.raw_dim() {
            return Err(Error::Shape {
                op: format!("adam update of {}", self.name),
                details: format!(
                    "parameter {}x{} vs gradient {}x{}",
                    self.value.nrows(),
                    self.value.ncols(),
                    grad.nrows(),
                    grad.ncols()
                ),
            });
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteGrad(self.name.clone()));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - BETA1.powf(t);
        let bc2 = 1.0 - BETA2.powf(t);
        ndarray::Zip::from(&mut self.value)
            .and(&mut self.first_moment)
            .and(&mut self.second_moment)
            .and(grad)
            .for_each(|v, m, s, &g| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *s = BETA2 * *s + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let s_hat = *s / bc2;
                *v -= lr * m_hat / (s_hat.sqrt() + ADAM_EPS);
            });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // bias-corrected first step: |Δ| = lr · g / (|g| + ε) ≈ lr
        let mut p = Param::new("w", array![[1.0, -2.0]]);
        let g = array![[0.3, -7.0]];
        p.adam_step(&g, 1e-2).unwrap();
        let d0 = (p.value[[0, 0]] - 1.0).abs();
        let d1 = (p.value[[0, 1]] + 2.0).abs();
        assert!((d0 - 1e-2).abs() < 1e-6, "step {d0}");
        assert!((d1 - 1e-2).abs() < 1e-6, "step {d1}");
        // sign: moves against the gradient
        assert!(p.value[[0, 0]] < 1.0);
        assert!(p.value[[0, 1]] > -2.0);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Param::new("w", array![[1.5, 2.5]]);
        p.adam_step(&array![[0.0, 0.0]], 1e-2).unwrap();
        assert_eq!(p.value, array![[1.5, 2.5]]);
    }

    #[test]
    fn nan_gradient_aborts_with_parameter_name() {
        let mut p = Param::new("gate.w", array![[1.0]]);
        let err = p.adam_step(&array![[f64::NAN]], 1e-2).unwrap_err();
        match err {
            Error::NonFiniteGrad(name) => assert_eq!(name, "gate.w"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn quadratic_bowl_descends_monotonically_after_warmup() {
        // f(w) = ½‖w‖², ∇f = w
        let mut p = Param::new("w", array![[3.0, -4.0]]);
        let mut losses = Vec::new();
        for _ in 0..200 {
            let g = p.value.clone();
            p.adam_step(&g, 1e-2).unwrap();
            losses.push(0.5 * p.value.iter().map(|v| v * v).sum::<f64>());
        }
        for w in losses[10..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
        assert!(losses[losses.len() - 1] < losses[0]);
    }
}
