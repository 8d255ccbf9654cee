//! Gradient estimators for the reward setting.

mod baseline;
mod grad;
mod hnca;
mod messages;
mod reinforce;

pub use baseline::{baseline_update, BaselineState, DEFAULT_DISCOUNT};
pub use grad::{GradEstimate, LayerGrad};
pub use hnca::{hnca_backward, hnca_backward_reference, hnca_rho, HncaPlan};
pub use messages::{bernoulli_messages, softmax_output_backward, ChildMessages};
pub use reinforce::reinforce_grad;

pub(crate) use reinforce::bernoulli_score;
