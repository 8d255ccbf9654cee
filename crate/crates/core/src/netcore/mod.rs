//! Network representation, forward sampling and constant-time counterfactuals.

mod counterfactual;
mod layer;
mod net;
pub mod snapshot;

pub use counterfactual::{
    counterfactual_logits, counterfactual_sample_probs, linear_counterfactual_logits,
};
pub use layer::{BernoulliLayer, Encoding, Linear, Matrix, SoftmaxLayer};
pub use net::{
    forward_sample, trace_from_samples, ForwardTrace, HeadTrace, LayerTrace, StochasticNet,
};

#[cfg(test)]
pub(crate) use counterfactual::tests::pinned_logit;
