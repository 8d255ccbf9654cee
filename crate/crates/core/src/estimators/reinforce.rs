use super::baseline::{centered, BaselineState};
use super::grad::{GradEstimate, LayerGrad};
use crate::error::{Error, Result};
use crate::netcore::{ForwardTrace, HeadTrace, LayerTrace, SoftmaxLayer, StochasticNet};

pub(crate) fn check_trace(net: &StochasticNet, trace: &ForwardTrace) -> Result<()> {
    if trace.layers.len() != net.hidden.len() {
        return Err(Error::config(format!(
            "trace has {} layers, network has {}",
            trace.layers.len(),
            net.hidden.len()
        )));
    }
    for (k, (l, t)) in net.hidden.iter().zip(&trace.layers).enumerate() {
        if t.input.len() != l.n_in() || t.probs.len() != l.n_out() || t.high.len() != l.n_out() {
            return Err(Error::config(format!("trace layer {k} does not match the network shape")));
        }
    }
    match (&net.head, &trace.head) {
        (Some(h), Some(t)) if t.probs.len() == h.n_actions() && t.input.len() == h.linear.n_in => {
            Ok(())
        }
        (None, None) => Ok(()),
        _ => Err(Error::config("trace head does not match the network head")),
    }
}

/// Score of a Bernoulli layer's realized samples with respect to its logits.
pub(crate) fn bernoulli_score(t: &LayerTrace, scale: f64) -> Vec<f64> {
    t.probs
        .iter()
        .zip(&t.high)
        .map(|(&p, &h)| ((h as u8 as f64) - p) * scale)
        .collect()
}

/// Softmax head score `(𝟙[a=i] − p_i)` scaled by `R − b`, per action.
pub(crate) fn softmax_signal(t: &HeadTrace, centered: f64) -> Vec<f64> {
    t.probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (((i == t.action) as u8 as f64) - p) * centered)
        .collect()
}

/// REINFORCE on a softmax head.
pub(crate) fn softmax_reinforce(head: &SoftmaxLayer, t: &HeadTrace, centered: f64) -> LayerGrad {
    debug_assert_eq!(head.n_actions(), t.probs.len());
    LayerGrad::outer(&softmax_signal(t, centered), &t.input)
}

/// Local REINFORCE: every unit multiplies its own score by `R − b`.
pub fn reinforce_grad(
    net: &StochasticNet,
    trace: &ForwardTrace,
    reward: f64,
    baseline: Option<&BaselineState>,
) -> Result<GradEstimate> {
    check_trace(net, trace)?;
    let c = centered(reward, baseline);
    let layers = trace
        .layers
        .iter()
        .map(|t| LayerGrad::outer(&bernoulli_score(t, c), &t.input))
        .collect();
    let head = net
        .head
        .as_ref()
        .zip(trace.head.as_ref())
        .map(|(h, t)| softmax_reinforce(h, t, c));
    Ok(GradEstimate { layers, head })
}
