use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dot;

/// The two-symbol alphabet a Bernoulli layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// `{0, 1}`.
    ZeroOne,
    /// `{-1, +1}`.
    PlusMinusOne,
}

impl Encoding {
    #[inline]
    pub fn high(self) -> f64 {
        1.0
    }

    #[inline]
    pub fn low(self) -> f64 {
        match self {
            Encoding::ZeroOne => 0.0,
            Encoding::PlusMinusOne => -1.0,
        }
    }

    #[inline]
    pub fn value(self, high: bool) -> f64 {
        if high {
            self.high()
        } else {
            self.low()
        }
    }

    /// `high - low`.
    #[inline]
    pub fn span(self) -> f64 {
        self.high() - self.low()
    }

    /// Whether `x` is the high symbol; `None` if it is not in the alphabet.
    pub fn classify(self, x: f64) -> Option<bool> {
        if x == self.high() {
            Some(true)
        } else if x == self.low() {
            Some(false)
        } else {
            None
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Affine map `W x + b` shared by Bernoulli layers, the softmax head and the
/// decoder of the VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out × n_in`, row-major: row `j` feeds output unit `j`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn from_parts(n_in: usize, n_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let lin = Linear {
            n_in,
            n_out,
            weights,
            bias,
        };
        lin.validate()?;
        Ok(lin)
    }

    /// Fan-in scaled uniform weights on `[-1/√n_in, 1/√n_in]`, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (n_in as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Linear {
            n_in,
            n_out,
            weights,
            bias: vec![0.0; n_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 {
            return Err(Error::config(format!(
                "layer dimensions must be positive, got {}x{}",
                self.n_out, self.n_in
            )));
        }
        if self.weights.len() != self.n_in * self.n_out || self.bias.len() != self.n_out {
            return Err(Error::config(format!(
                "layer storage does not match {}x{}: {} weights, {} biases",
                self.n_out,
                self.n_in,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if let Some(i) = self
            .weights
            .iter()
            .chain(&self.bias)
            .position(|v| !v.is_finite())
        {
            return Err(Error::numeric("layer parameters", format!("entry {i} is not finite")));
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_in..(j + 1) * self.n_in]
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.weights[j * self.n_in + i]
    }

    pub fn logits_into(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.n_in);
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(j), input) + self.bias[j];
        }
    }

    pub fn logits(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out];
        self.logits_into(input, &mut out);
        out
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A layer of Bernoulli units with sigmoid firing probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliLayer {
    pub linear: Linear,
    pub encoding: Encoding,
}

impl BernoulliLayer {
    pub fn new(linear: Linear, encoding: Encoding) -> Self {
        BernoulliLayer { linear, encoding }
    }

    pub fn n_in(&self) -> usize {
        self.linear.n_in
    }

    pub fn n_out(&self) -> usize {
        self.linear.n_out
    }
}

/// Categorical output unit over `n_actions` choices.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLayer {
    pub linear: Linear,
}

impl SoftmaxLayer {
    pub fn new(linear: Linear) -> Result<Self> {
        if linear.n_out < 2 {
            return Err(Error::config(format!(
                "softmax head needs at least 2 actions, got {}",
                linear.n_out
            )));
        }
        Ok(SoftmaxLayer { linear })
    }

    pub fn n_actions(&self) -> usize {
        self.linear.n_out
    }
}
