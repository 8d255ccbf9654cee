//! Fixtures shared by the criterion benches.

use hnca_core::netcore::forward_sample;
use hnca_core::rng::{example_rng, global_rng, Purpose, Rng};
use hnca_core::{Encoding, ForwardTrace, Result, StochasticNet};

pub const CONTEXT_DIM: usize = 784;
pub const N_ACTIONS: usize = 10;

/// A classification net with `depth` hidden layers of `width` units, a batch
/// of random binary contexts and one sampled trace per context.
pub struct Fixture {
    pub net: StochasticNet,
    pub contexts: Vec<Vec<f64>>,
    pub traces: Vec<ForwardTrace>,
}

impl Fixture {
    pub fn new(width: usize, depth: usize, batch: usize, seed: u64) -> Result<Self> {
        let net = StochasticNet::init(
            CONTEXT_DIM,
            &vec![width; depth],
            Encoding::PlusMinusOne,
            Some(N_ACTIONS),
            &mut global_rng(seed, Purpose::Init),
        )?;
        let contexts: Vec<Vec<f64>> = (0..batch)
            .map(|i| {
                let mut rng = example_rng(seed, Purpose::Binarize, 0, i as u64);
                (0..CONTEXT_DIM).map(|_| rng.random_range(0..2) as f64).collect()
            })
            .collect();
        let mut rng = example_rng(seed, Purpose::Sample, 0, 0);
        let traces = contexts
            .iter()
            .map(|c| forward_sample(&net, c, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Fixture { net, contexts, traces })
    }
}
