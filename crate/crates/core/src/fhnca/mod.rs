//! The known-function setting: a discrete VAE whose ELBO is split into
//! function components, the f-HNCA estimator and its comparisons.

mod backward;
mod components;
mod model;

pub use backward::{
    direct_gradients, fhnca_backward, fhnca_backward_planned, reinforce_loo, vae_reinforce,
    FhncaMode, RlooEstimate, RlooVariant, VaeEstimate,
};
pub use components::{
    build_elbo_components, component_counterfactuals, ComponentBlock, ComponentCounterfactuals,
    ComponentKind, ConnectionClass, FunctionComponent, FunctionComponentSet, ParamBinding,
};
pub use model::{load_vae, save_vae, Vae, VaeGrad};
