use std::ops::{AddAssign, MulAssign};

use crate::netcore::{Linear, StochasticNet};
use crate::params::ParamVisit;

/// Gradient for one affine block, laid out like [`Linear`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub n_in: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(linear: &Linear) -> Self {
        LayerGrad {
            n_in: linear.n_in,
            weights: vec![0.0; linear.weights.len()],
            bias: vec![0.0; linear.bias.len()],
        }
    }

    /// Gradient of the form `signal ⊗ input` for the weights and `signal` for
    /// the bias, which is what every score-function estimator here produces.
    pub fn outer(signal: &[f64], input: &[f64]) -> Self {
        let mut weights = vec![0.0; signal.len() * input.len()];
        for (row, &s) in weights.chunks_exact_mut(input.len()).zip(signal) {
            for (w, &x) in row.iter_mut().zip(input) {
                *w = s * x;
            }
        }
        LayerGrad {
            n_in: input.len(),
            weights,
            bias: signal.to_vec(),
        }
    }

    /// `self += signal ⊗ input`.
    /// Overwrite with `signal ⊗ input`, reusing the storage.
    pub fn assign_outer(&mut self, signal: &[f64], input: &[f64]) {
        assert_eq!(
            (signal.len() * input.len(), signal.len()),
            (self.weights.len(), self.bias.len()),
            "outer product does not fit the layer"
        );
        self.n_in = input.len();
        for (row, &s) in self.weights.chunks_exact_mut(input.len()).zip(signal) {
            for (w, &x) in row.iter_mut().zip(input) {
                *w = s * x;
            }
        }
        self.bias.copy_from_slice(signal);
    }

    pub fn add_outer(&mut self, signal: &[f64], input: &[f64]) {
        debug_assert_eq!(input.len(), self.n_in);
        for (row, &s) in self.weights.chunks_exact_mut(self.n_in).zip(signal) {
            if s == 0.0 {
                continue;
            }
            for (w, &x) in row.iter_mut().zip(input) {
                *w += s * x;
            }
        }
        for (b, &s) in self.bias.iter_mut().zip(signal) {
            *b += s;
        }
    }
}

impl LayerGrad {
    pub fn axpy(&mut self, c: f64, other: &LayerGrad) {
        assert_eq!(self.weights.len(), other.weights.len(), "weight shape mismatch");
        assert_eq!(self.bias.len(), other.bias.len(), "bias shape mismatch");
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += c * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += c * b;
        }
    }
}

impl ParamVisit for LayerGrad {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weights);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weights);
        f(&mut self.bias);
    }
}

/// Per-parameter gradient estimate, shape-matched to a [`StochasticNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub layers: Vec<LayerGrad>,
    pub head: Option<LayerGrad>,
}

impl GradEstimate {
    pub fn zeros_like(net: &StochasticNet) -> Self {
        GradEstimate {
            layers: net.hidden.iter().map(|l| LayerGrad::zeros_like(&l.linear)).collect(),
            head: net.head.as_ref().map(|h| LayerGrad::zeros_like(&h.linear)),
        }
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &GradEstimate) {
        assert_eq!(self.layers.len(), other.layers.len(), "layer count mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.axpy(c, b);
        }
        match (&mut self.head, &other.head) {
            (Some(a), Some(b)) => a.axpy(c, b),
            (None, None) => {}
            _ => panic!("head presence mismatch"),
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }
}

impl ParamVisit for GradEstimate {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            l.visit(f);
        }
        if let Some(h) = &self.head {
            h.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
        if let Some(h) = &mut self.head {
            h.visit_mut(f);
        }
    }
}

impl AddAssign<&GradEstimate> for GradEstimate {
    fn add_assign(&mut self, rhs: &GradEstimate) {
        self.axpy(1.0, rhs);
    }
}

impl MulAssign<f64> for GradEstimate {
    fn mul_assign(&mut self, c: f64) {
        self.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= c));
    }
}
