//! Unbiased, variance-reduced gradient estimators for networks of discrete
//! stochastic units, with enumeration oracles and experiment drivers.

pub mod error;
pub mod estimators;
pub mod fhnca;
pub mod harness;
pub mod math;
pub mod netcore;
pub mod oracle;
pub mod params;
pub mod rng;

pub use error::{Error, Result};
pub use estimators::{BaselineState, GradEstimate, LayerGrad};
pub use netcore::{
    BernoulliLayer, Encoding, ForwardTrace, LayerTrace, Linear, SoftmaxLayer, StochasticNet,
};
pub use params::ParamVisit;
