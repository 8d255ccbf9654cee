use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::bandit::epoch_order;
use super::binarize::{binarize_example, binarize_with};
use super::bound::multisample_bound;
use super::idx::Dataset;
use super::metrics::{batch_grad_variance, batch_mean, Interval, MetricRow, RunMetrics};
use crate::error::{Error, Result};
use crate::estimators::{BaselineState, HncaPlan, DEFAULT_DISCOUNT};
use crate::fhnca::{
    build_elbo_components, fhnca_backward_planned, reinforce_loo, vae_reinforce, FhncaMode, RlooVariant, Vae,
    VaeEstimate,
};
use crate::netcore::forward_sample;
use crate::params::ParamVisit;
use crate::rng::{example_rng, global_rng, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VaeEstimator {
    Fhnca,
    FhncaB,
    FhncaNoprune,
    FhncaFullreward,
    Rloo,
    RlooIs,
    Reinforce,
    ReinforceB,
}

impl VaeEstimator {
    pub const ALL: [VaeEstimator; 8] = [
        Self::Fhnca,
        Self::FhncaB,
        Self::FhncaNoprune,
        Self::FhncaFullreward,
        Self::Rloo,
        Self::RlooIs,
        Self::Reinforce,
        Self::ReinforceB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fhnca => "fhnca",
            Self::FhncaB => "fhnca-b",
            Self::FhncaNoprune => "fhnca-noprune",
            Self::FhncaFullreward => "fhnca-fullreward",
            Self::Rloo => "rloo",
            Self::RlooIs => "rloo-is",
            Self::Reinforce => "reinforce",
            Self::ReinforceB => "reinforce-b",
        }
    }

    pub fn fhnca_mode(self) -> Option<FhncaMode> {
        match self {
            Self::Fhnca => Some(FhncaMode::Plain),
            Self::FhncaB => Some(FhncaMode::WithBaseline),
            Self::FhncaNoprune => Some(FhncaMode::NoChildPruning),
            Self::FhncaFullreward => Some(FhncaMode::FullReward),
            _ => None,
        }
    }

    pub fn uses_baseline(self) -> bool {
        match self {
            Self::ReinforceB => true,
            _ => self.fhnca_mode().is_some_and(FhncaMode::uses_baseline),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub widths: Vec<usize>,
    pub estimator: VaeEstimator,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub baseline_discount: f64,
    /// Importance samples per test example for the logged bound.
    pub test_samples: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Log every this many steps; 0 logs at the end of each epoch.
    pub log_every: usize,
    pub record_wall_time: bool,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            widths: vec![200],
            estimator: VaeEstimator::Fhnca,
            adam: AdamConfig::default(),
            batch_size: 50,
            epochs: 840,
            seed: 0,
            baseline_discount: DEFAULT_DISCOUNT,
            test_samples: 1,
            train_limit: None,
            test_limit: None,
            log_every: 0,
            record_wall_time: false,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config(format!("latent widths must be positive, got {:?}", self.widths)));
        }
        if self.estimator == VaeEstimator::FhncaB && self.widths.len() == 1 {
            return Err(Error::config(
                "estimator fhnca-b needs at least two latent layers; with one there are no mediated components",
            ));
        }
        if self.batch_size == 0 || self.test_samples == 0 {
            return Err(Error::config("batch size and test samples must be positive"));
        }
        if !(0.0..1.0).contains(&self.baseline_discount) {
            return Err(Error::config(format!(
                "baseline discount must lie in [0, 1), got {}",
                self.baseline_discount
            )));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone)]
pub struct VaeRun {
    pub metrics: RunMetrics,
    pub vae: Vae,
}

/// One encoder-gradient estimate plus direct gradients for a datum.
pub fn vae_example_estimate<R: rand::Rng + ?Sized>(
    vae: &Vae,
    plan: Option<&HncaPlan>,
    estimator: VaeEstimator,
    x: &[f64],
    baselines: &[BaselineState],
    rng: &mut R,
) -> Result<VaeEstimate> {
    let b = estimator.uses_baseline().then_some(baselines);
    match estimator {
        VaeEstimator::Rloo => reinforce_loo(vae, x, RlooVariant::PartialResample, rng).map(|r| r.estimate),
        VaeEstimator::RlooIs => reinforce_loo(vae, x, RlooVariant::IndependentSample, rng).map(|r| r.estimate),
        _ => {
            let trace = forward_sample(&vae.encoder, x, rng)?;
            let set = build_elbo_components(vae, &trace, x)?;
            match estimator.fhnca_mode() {
                Some(mode) => {
                    let owned;
                    let plan = match plan {
                        Some(p) => p,
                        None => {
                            owned = HncaPlan::new(&vae.encoder);
                            &owned
                        }
                    };
                    fhnca_backward_planned(plan, vae, &trace, &set, mode, b)
                }
                None => vae_reinforce(vae, &trace, &set, b),
            }
        }
    }
}

/// Mean `multisample_bound` over the first `limit` examples of `test`.
pub fn test_bound(vae: &Vae, test: &Dataset, limit: usize, k: usize, seed: u64, tag: u64) -> Result<f64> {
    let n = limit.min(test.len());
    if n == 0 {
        return Ok(f64::NAN);
    }
    let bounds: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = example_rng(seed, Purpose::TestSample, tag, i as u64);
            let x = binarize_with(test.pixels(i), &mut rng);
            multisample_bound(vae, &x, k, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(bounds.iter().sum::<f64>() / n as f64)
}

/// Train a discrete VAE by maximizing the ELBO.
///
/// The encoder gradient comes from the configured estimator; decoder, prior
/// and entropy terms use their exact gradients given the sampled latents.
pub fn vae_train(config: &VaeConfig, train: &Dataset, test: &Dataset) -> Result<VaeRun> {
    let init = Vae::init(train.dim(), &config.widths, &mut global_rng(config.seed, Purpose::Init))?;
    vae_train_from(config, init, train, test)
}

/// [`vae_train`] starting from a given model.
pub fn vae_train_from(config: &VaeConfig, mut vae: Vae, train: &Dataset, test: &Dataset) -> Result<VaeRun> {
    config.validate()?;
    if vae.n_visible() != train.dim() || vae.widths() != config.widths {
        return Err(Error::config("initial model does not match the data and configured widths"));
    }
    let start = Instant::now();
    let n_train = config.train_limit.map_or(train.len(), |l| l.min(train.len()));
    let n_test = config.test_limit.unwrap_or(test.len());
    let mut adam = AdamState::for_params(config.adam, &vae);
    let mut baselines = vec![BaselineState::new(config.baseline_discount); vae.depth()];
    let encoder_params = vae.encoder.param_count();
    let mut metrics = RunMetrics::default();
    let mut interval = Interval::default();
    let mut step = 0u64;

    let log = |vae: &Vae, step: u64, epoch: u64, interval: &mut Interval| -> Result<MetricRow> {
        let (train_metric, ln_grad_var) = interval.take();
        Ok(MetricRow {
            step,
            epoch,
            train_metric,
            test_metric: test_bound(vae, test, n_test, config.test_samples, config.seed, step)?,
            ln_grad_var,
            wall_ms: if config.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        })
    };

    for epoch in 0..config.epochs as u64 {
        let order = epoch_order(n_train, config.seed, epoch);
        for batch in order.chunks(config.batch_size) {
            let plan = config.estimator.fhnca_mode().map(|_| HncaPlan::new(&vae.encoder));
            let estimates: Vec<VaeEstimate> = batch
                .par_iter()
                .map(|&i| {
                    let x = binarize_example(train.pixels(i), config.seed, epoch, i as u64);
                    let mut rng = example_rng(config.seed, Purpose::Sample, epoch, i as u64);
                    let e = vae_example_estimate(&vae, plan.as_ref(), config.estimator, &x, &baselines, &mut rng)?;
                    if !e.elbo.is_finite() {
                        return Err(Error::numeric(format!("example {i}"), format!("ELBO integrand is {}", e.elbo)));
                    }
                    Ok(e)
                })
                .collect::<Result<_>>()?;
            let grads: Vec<Vec<f64>> = estimates.iter().map(|e| e.grad.flatten()).collect();
            adam.step(&mut vae, &batch_mean(&grads))?;
            if config.estimator.uses_baseline() {
                for (l, b) in baselines.iter_mut().enumerate() {
                    let t = estimates.iter().map(|e| e.baseline_targets[l]).sum::<f64>() / estimates.len() as f64;
                    b.update(t);
                }
            }
            let elbo_sum: f64 = estimates.iter().map(|e| e.elbo).sum();
            interval.add_batch(elbo_sum, estimates.len(), batch_grad_variance(&grads, encoder_params));
            step += 1;
            if config.log_every > 0 && step.is_multiple_of(config.log_every as u64) {
                metrics.push(log(&vae, step, epoch, &mut interval)?);
            }
        }
        if config.log_every == 0 && !interval.is_empty() {
            metrics.push(log(&vae, step, epoch, &mut interval)?);
        }
    }
    if !interval.is_empty() {
        metrics.push(log(&vae, step, config.epochs.saturating_sub(1) as u64, &mut interval)?);
    }
    Ok(VaeRun { metrics, vae })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhnca::direct_gradients;
    use crate::harness::idx::Split;

    fn toy_data() -> Dataset {
        let patterns: [[u8; 4]; 8] = [
            [255, 255, 0, 0],
            [255, 255, 0, 0],
            [255, 255, 0, 255],
            [0, 0, 255, 255],
            [0, 0, 255, 255],
            [0, 255, 255, 255],
            [255, 0, 255, 0],
            [0, 0, 0, 0],
        ];
        Dataset::new(patterns.concat(), vec![0; 8], 2, 2, Split::Train).unwrap()
    }

    #[test]
    fn single_layer_fhnca_b_is_rejected() {
        let cfg = VaeConfig {
            widths: vec![3],
            estimator: VaeEstimator::FhncaB,
            ..VaeConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn every_estimator_trains_and_reruns_identically() {
        let data = toy_data();
        for est in VaeEstimator::ALL {
            let cfg = VaeConfig {
                widths: vec![3, 2],
                estimator: est,
                epochs: 3,
                batch_size: 4,
                seed: 11,
                adam: AdamConfig {
                    lr: 1e-2,
                    ..AdamConfig::default()
                },
                ..VaeConfig::default()
            };
            let a = vae_train(&cfg, &data, &data).unwrap();
            let b = vae_train(&cfg, &data, &data).unwrap();
            assert_eq!(a.metrics.to_csv().unwrap(), b.metrics.to_csv().unwrap(), "{}", est.name());
            assert_eq!(a.metrics.rows.len(), 3);
            assert!(a.metrics.rows.iter().all(|r| r.train_metric.is_finite() && r.ln_grad_var.is_finite()));
        }
    }

    #[test]
    fn decoder_ascent_with_a_frozen_uniform_encoder() {
        let data = toy_data();
        let mut vae = Vae::init(4, &[3], &mut global_rng(4, Purpose::Init)).unwrap();
        vae.encoder.visit_mut(&mut |s| s.fill(0.0));
        let mut adam = AdamState::for_params(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, &vae);
        let recon = |vae: &Vae| -> f64 {
            // Exact expected reconstruction term under the uniform encoder.
            let mut total = 0.0;
            for i in 0..data.len() {
                let x: Vec<f64> = data.pixels(i).iter().map(|&p| (p > 0) as u8 as f64).collect();
                for code in 0..8u32 {
                    let high: Vec<Vec<bool>> = vec![(0..3).map(|j| code >> j & 1 == 1).collect()];
                    let t = crate::netcore::trace_from_samples(&vae.encoder, &x, &high, None).unwrap();
                    let set = build_elbo_components(vae, &t, &x).unwrap();
                    total += set.blocks.iter().find(|b| b.output_layer.is_none() && b.input_layer == Some(0)).unwrap().total() / 8.0;
                }
            }
            total
        };
        let before = recon(&vae);
        for step in 0..100 {
            let mut sum = None::<Vec<f64>>;
            for i in 0..data.len() {
                let x: Vec<f64> = data.pixels(i).iter().map(|&p| (p > 0) as u8 as f64).collect();
                let mut rng = example_rng(4, Purpose::Sample, step, i as u64);
                let t = forward_sample(&vae.encoder, &x, &mut rng).unwrap();
                let set = build_elbo_components(&vae, &t, &x).unwrap();
                let mut g = direct_gradients(&vae, &set);
                g.encoder.visit_mut(&mut |s| s.fill(0.0));
                g.prior.fill(0.0);
                let f = g.flatten();
                match &mut sum {
                    Some(s) => s.iter_mut().zip(&f).for_each(|(a, b)| *a += b),
                    None => sum = Some(f),
                }
            }
            adam.step(&mut vae, &sum.unwrap()).unwrap();
        }
        let after = recon(&vae);
        // Every pixel of the toy set is on half the time, so with
        // uninformative latents the best reconstruction is 32 fair coins.
        let best = -32.0 * std::f64::consts::LN_2;
        assert!(after > before, "{before} -> {after}");
        assert!(best - after < 0.25 * (best - before), "{before} -> {after}, best {best}");
    }
}
