//! Messages a layer sends to its parents: the probability of each child's
//! realized sample with one parent pinned high or low.

use super::baseline::{centered, BaselineState};
use super::grad::LayerGrad;
use super::reinforce::softmax_reinforce;
use crate::math::{clamp_prob, log_sum_exp};
use crate::netcore::{
    counterfactual_logits, counterfactual_sample_probs, linear_counterfactual_logits,
    BernoulliLayer, Encoding, HeadTrace, LayerTrace, Matrix, SoftmaxLayer,
};

/// `q_hi[c][i]` is child `c`'s probability of its realized sample with
/// parent `i` pinned high; `q_lo` likewise for low. Entries are clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildMessages {
    pub q_hi: Matrix,
    pub q_lo: Matrix,
}

impl ChildMessages {
    pub fn n_parents(&self) -> usize {
        self.q_hi.cols
    }

    /// Per parent, `(Σ_c log q_hi[c][i], Σ_c log q_lo[c][i])`.
    pub fn log_products(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_parents();
        let mut hi = vec![0.0; n];
        let mut lo = vec![0.0; n];
        for c in 0..self.q_hi.rows {
            for i in 0..n {
                hi[i] += self.q_hi.get(c, i).ln();
                lo[i] += self.q_lo.get(c, i).ln();
            }
        }
        (hi, lo)
    }
}

/// Messages from a Bernoulli layer to its parents, built from the full
/// counterfactual matrices.
pub fn bernoulli_messages(
    layer: &BernoulliLayer,
    trace: &LayerTrace,
    parent: Encoding,
) -> ChildMessages {
    let (l_hi, l_lo) = counterfactual_logits(layer, trace, parent);
    let (q_hi, q_lo) = counterfactual_sample_probs(layer, trace, &l_hi, &l_lo);
    ChildMessages { q_hi, q_lo }
}

/// Probability of the realized action under every pinned logit column,
/// renormalized over all actions.
fn pinned_action_probs(pinned: &Matrix, action: usize) -> Vec<f64> {
    let (n_actions, n_in) = (pinned.rows, pinned.cols);
    let mut col = vec![0.0; n_actions];
    (0..n_in)
        .map(|i| {
            for (a, c) in col.iter_mut().enumerate() {
                *c = pinned.get(a, i);
            }
            clamp_prob((col[action] - log_sum_exp(&col)).exp())
        })
        .collect()
}

/// REINFORCE gradient for the head plus the messages it sends to the top
/// hidden layer. The message matrices have a single row since the head is
/// one categorical unit.
pub fn softmax_output_backward(
    head: &SoftmaxLayer,
    trace: &HeadTrace,
    parent: Encoding,
    reward: f64,
    baseline: Option<&BaselineState>,
) -> (LayerGrad, ChildMessages) {
    let grad = softmax_reinforce(head, trace, centered(reward, baseline));
    let (l_hi, l_lo) =
        linear_counterfactual_logits(&head.linear, &trace.input, &trace.logits, parent);
    let n_in = head.linear.n_in;
    let q_hi = Matrix {
        rows: 1,
        cols: n_in,
        data: pinned_action_probs(&l_hi, trace.action),
    };
    let q_lo = Matrix {
        rows: 1,
        cols: n_in,
        data: pinned_action_probs(&l_lo, trace.action),
    };
    (grad, ChildMessages { q_hi, q_lo })
}
