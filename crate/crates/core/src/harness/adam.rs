use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVisit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Bias-corrected ADAM moments. Steps go uphill: the objective is maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        AdamState {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn for_params<P: ParamVisit + ?Sized>(config: AdamConfig, params: &P) -> Self {
        Self::new(config, params.param_count())
    }

    /// Apply one ascent step with a flat gradient.
    pub fn step<P: ParamVisit + ?Sized>(&mut self, params: &mut P, grad: &[f64]) -> Result<()> {
        let n = params.param_count();
        if grad.len() != self.m.len() || n != self.m.len() {
            return Err(Error::config(format!(
                "ADAM state holds {} moments but got {} parameters and {} gradient entries",
                self.m.len(),
                n,
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::numeric("ADAM step", format!("gradient entry {i} is {}", grad[i])));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut k = 0;
        params.visit_mut(&mut |slice| {
            for p in slice.iter_mut() {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *p += lr * m_hat / (v_hat.sqrt() + eps);
                k += 1;
            }
        });
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`] taking a structured gradient.
pub fn adam_step<P, G>(params: &mut P, grad: &G, state: &mut AdamState) -> Result<()>
where
    P: ParamVisit + ?Sized,
    G: ParamVisit + ?Sized,
{
    state.step(params, &grad.flatten())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![0.3, -2.0, 5.0];
        let mut s = AdamState::new(AdamConfig::default(), 3);
        for _ in 0..100 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![0.3, -2.0, 5.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        for g in [0.02, 3.0, 700.0] {
            let mut p = vec![1.0];
            let mut s = AdamState::new(cfg, 1);
            s.step(&mut p, &[g]).unwrap();
            let expected = 1e-3 * g / (g + 1e-8);
            assert!((p[0] - 1.0 - expected).abs() < 1e-15);
            assert!((p[0] - 1.0 - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn update_is_odd_in_the_gradient() {
        let mut a = vec![0.0, 0.0];
        let mut b = vec![0.0, 0.0];
        let mut sa = AdamState::new(AdamConfig::default(), 2);
        let mut sb = sa.clone();
        sa.step(&mut a, &[0.7, -1.1]).unwrap();
        sb.step(&mut b, &[-0.7, 1.1]).unwrap();
        assert_eq!(a[0], -b[0]);
        assert_eq!(a[1], -b[1]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(AdamConfig::default(), 3);
        assert!(matches!(s.step(&mut p, &[1.0, 2.0]), Err(Error::Config(_))));
        assert_eq!(s.step, 0);
    }
}
