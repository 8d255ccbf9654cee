//! Counterfactual logits and probabilities with one parent pinned.
//!
//! Pinning parent `i` of unit `j` to the symbol `v` moves its logit by
//! `θ[j][i]·(v − x[i])`, so every counterfactual costs O(1) once the forward
//! logit is known.

use super::layer::{BernoulliLayer, Encoding, Linear, Matrix};
use super::net::LayerTrace;
use crate::math::{clamp_prob, sigmoid};

/// `(L_hi, L_lo)` for an arbitrary affine map, given its input and logits.
pub fn linear_counterfactual_logits(
    linear: &Linear,
    input: &[f64],
    logits: &[f64],
    parent: Encoding,
) -> (Matrix, Matrix) {
    let (n_out, n_in) = (linear.n_out, linear.n_in);
    let mut hi = Matrix::zeros(n_out, n_in);
    let mut lo = Matrix::zeros(n_out, n_in);
    let (v_hi, v_lo) = (parent.high(), parent.low());
    for j in 0..n_out {
        let row = linear.row(j);
        let l = logits[j];
        for i in 0..n_in {
            let x = input[i];
            // Pinning to the realized symbol must reproduce the logit exactly.
            let lh = if x == v_hi { l } else { l + row[i] * (v_hi - x) };
            let ll = if x == v_lo { l } else { l + row[i] * (v_lo - x) };
            hi.set(j, i, lh);
            lo.set(j, i, ll);
        }
    }
    (hi, lo)
}

/// Counterfactual logits of every unit in `layer` with each parent pinned
/// high (`L_hi`) or low (`L_lo`). `parent` is the alphabet of the layer's
/// inputs.
pub fn counterfactual_logits(
    layer: &BernoulliLayer,
    trace: &LayerTrace,
    parent: Encoding,
) -> (Matrix, Matrix) {
    linear_counterfactual_logits(&layer.linear, &trace.input, &trace.logits, parent)
}

/// Probability that each unit emits its realized symbol under the pinned
/// logits, clamped to `[1e-7, 1 - 1e-7]`.
pub fn counterfactual_sample_probs(
    layer: &BernoulliLayer,
    trace: &LayerTrace,
    l_hi: &Matrix,
    l_lo: &Matrix,
) -> (Matrix, Matrix) {
    let (n_out, n_in) = (layer.n_out(), layer.n_in());
    let mut p_hi = Matrix::zeros(n_out, n_in);
    let mut p_lo = Matrix::zeros(n_out, n_in);
    for j in 0..n_out {
        let sign = if trace.high[j] { 1.0 } else { -1.0 };
        for i in 0..n_in {
            p_hi.set(j, i, clamp_prob(sigmoid(sign * l_hi.get(j, i))));
            p_lo.set(j, i, clamp_prob(sigmoid(sign * l_lo.get(j, i))));
        }
    }
    (p_hi, p_lo)
}
