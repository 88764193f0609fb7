//! Adam with bias correction over a flat parameter list.

use ndarray::Array2;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// When true, a non-finite gradient aborts instead of skipping the step.
    pub hard_fail_on_nonfinite: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hard_fail_on_nonfinite: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradients contained NaN/Inf; parameters and moments left untouched.
    SkippedNonFinite,
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Array2<f64>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
            v: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(
        &mut self,
        params: &mut [Array2<f64>],
        grads: &[Array2<f64>],
        cfg: &AdamConfig,
    ) -> Result<StepOutcome> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.dim() != g.dim() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    left: p.dim(),
                    right: g.dim(),
                });
            }
        }
        if grads.iter().any(|g| !g.iter().all(|x| x.is_finite())) {
            if cfg.hard_fail_on_nonfinite {
                return Err(Error::NonFinite("gradient in adam step".into()));
            }
            return Ok(StepOutcome::SkippedNonFinite);
        }

        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                });
        }
        Ok(StepOutcome::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![array![[1.0, -2.0]]];
        let grads = vec![array![[0.0, 0.0]]];
        let mut state = AdamState::new(&params);
        state
            .step(&mut params, &grads, &AdamConfig::default())
            .unwrap();
        assert_eq!(params[0], array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = vec![array![[0.0, 0.0]]];
        let grads = vec![array![[0.5, -3.0]]];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        state.step(&mut params, &grads, &cfg).unwrap();
        assert!((params[0][(0, 0)] + 0.1).abs() < 1e-7);
        assert!((params[0][(0, 1)] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = vec![array![[0.3, -0.7], [1.1, 0.0]]];
            let mut state = AdamState::new(&params);
            let cfg = AdamConfig::default();
            for k in 1..=25 {
                let grads = vec![params[0].mapv(|x| (x * k as f64).sin())];
                state.step(&mut params, &grads, &cfg).unwrap();
            }
            params[0].iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_policy() {
        let mut params = vec![array![[1.0]]];
        let grads = vec![array![[f64::NAN]]];
        let mut state = AdamState::new(&params);
        let out = state
            .step(&mut params, &grads, &AdamConfig::default())
            .unwrap();
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(params[0], array![[1.0]]);
        assert_eq!(state.steps_taken(), 0);

        let hard = AdamConfig {
            hard_fail_on_nonfinite: true,
            ..AdamConfig::default()
        };
        assert!(state.step(&mut params, &grads, &hard).is_err());
    }
}
