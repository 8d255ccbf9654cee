use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::binarize::{binarize_example, binarize_with};
use super::idx::Dataset;
use super::metrics::{batch_grad_variance, batch_mean, Interval, MetricRow, RunMetrics};
use crate::error::{Error, Result};
use crate::estimators::{reinforce_grad, BaselineState, HncaPlan, DEFAULT_DISCOUNT};
use crate::netcore::{forward_sample, Encoding, StochasticNet};
use crate::params::ParamVisit;
use crate::rng::{example_rng, global_rng, Purpose};

pub const N_ACTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BanditEstimator {
    Reinforce,
    ReinforceB,
    Hnca,
    HncaB,
}

impl BanditEstimator {
    pub const ALL: [BanditEstimator; 4] = [Self::Reinforce, Self::ReinforceB, Self::Hnca, Self::HncaB];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reinforce => "reinforce",
            Self::ReinforceB => "reinforce-b",
            Self::Hnca => "hnca",
            Self::HncaB => "hnca-b",
        }
    }

    pub fn uses_baseline(self) -> bool {
        matches!(self, Self::ReinforceB | Self::HncaB)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub widths: Vec<usize>,
    pub encoding: Encoding,
    pub estimator: BanditEstimator,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub baseline_discount: f64,
    /// Sampled forward passes averaged per test example.
    pub test_samples: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Log every this many steps; 0 logs at the end of each epoch.
    pub log_every: usize,
    pub record_wall_time: bool,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            widths: vec![200],
            encoding: Encoding::PlusMinusOne,
            estimator: BanditEstimator::Hnca,
            adam: AdamConfig::default(),
            batch_size: 50,
            epochs: 100,
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

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config(format!("hidden widths must be positive, got {:?}", self.widths)));
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
pub struct BanditRun {
    pub metrics: RunMetrics,
    pub net: StochasticNet,
}

/// Sampled accuracy of `net` on the first `limit` examples of `test`.
///
/// Each example gets its own stream keyed by `tag`, which binarizes the image
/// and then drives `samples` forward passes.
pub fn test_accuracy(net: &StochasticNet, test: &Dataset, limit: usize, samples: usize, seed: u64, tag: u64) -> Result<f64> {
    let n = limit.min(test.len());
    if n == 0 {
        return Ok(f64::NAN);
    }
    let hits: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut rng = example_rng(seed, Purpose::TestSample, tag, i as u64);
            let x = binarize_with(test.pixels(i), &mut rng);
            let mut hits = 0;
            for _ in 0..samples {
                let t = forward_sample(net, &x, &mut rng)?;
                hits += (t.head.as_ref().expect("head").action == test.labels[i] as usize) as usize;
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / (n * samples) as f64)
}

/// Epoch order: a seeded shuffle of the (possibly truncated) training set.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut example_rng(seed, Purpose::Shuffle, epoch, 0));
    order
}

/// Train a softmax-headed network on the contextual-bandit version of a
/// labelled image set: reward 1 for the correct label, 0 otherwise.
pub fn bandit_train(config: &BanditConfig, train: &Dataset, test: &Dataset) -> Result<BanditRun> {
    config.validate()?;
    let start = Instant::now();
    let mut net = StochasticNet::init(
        train.dim(),
        &config.widths,
        config.encoding,
        Some(N_ACTIONS),
        &mut global_rng(config.seed, Purpose::Init),
    )?;
    let n_train = config.train_limit.map_or(train.len(), |l| l.min(train.len()));
    let n_test = config.test_limit.unwrap_or(test.len());
    let mut adam = AdamState::for_params(config.adam, &net);
    let mut baseline = BaselineState::new(config.baseline_discount);
    let mut metrics = RunMetrics::default();
    let mut interval = Interval::default();
    let mut step = 0u64;
    let n_params = net.param_count();

    for epoch in 0..config.epochs as u64 {
        let order = epoch_order(n_train, config.seed, epoch);
        for batch in order.chunks(config.batch_size) {
            let plan = matches!(config.estimator, BanditEstimator::Hnca | BanditEstimator::HncaB)
                .then(|| HncaPlan::new(&net));
            let b = config.estimator.uses_baseline().then_some(&baseline);
            let out: Vec<(Vec<f64>, f64)> = batch
                .par_iter()
                .map(|&i| -> Result<(Vec<f64>, f64)> {
                    let x = binarize_example(train.pixels(i), config.seed, epoch, i as u64);
                    let mut rng = example_rng(config.seed, Purpose::Sample, epoch, i as u64);
                    let trace = forward_sample(&net, &x, &mut rng)?;
                    let action = trace.head.as_ref().expect("head").action;
                    let reward = if action == train.labels[i] as usize { 1.0 } else { 0.0 };
                    let g = match &plan {
                        Some(p) => p.backward(&net, &trace, reward, b)?,
                        None => reinforce_grad(&net, &trace, reward, b)?,
                    };
                    Ok((g.flatten(), reward))
                })
                .collect::<Result<_>>()?;
            let (grads, rewards): (Vec<Vec<f64>>, Vec<f64>) = out.into_iter().unzip();
            let mean = batch_mean(&grads);
            adam.step(&mut net, &mean)?;
            let reward_sum: f64 = rewards.iter().sum();
            if config.estimator.uses_baseline() {
                baseline.update(reward_sum / rewards.len() as f64);
            }
            interval.add_batch(reward_sum, rewards.len(), batch_grad_variance(&grads, n_params));
            step += 1;
            if config.log_every > 0 && step.is_multiple_of(config.log_every as u64) {
                metrics.push(log_row(&net, test, n_test, config, step, epoch, &mut interval, start)?);
            }
        }
        if config.log_every == 0 && !interval.is_empty() {
            metrics.push(log_row(&net, test, n_test, config, step, epoch, &mut interval, start)?);
        }
    }
    if !interval.is_empty() {
        let epoch = config.epochs.saturating_sub(1) as u64;
        metrics.push(log_row(&net, test, n_test, config, step, epoch, &mut interval, start)?);
    }
    Ok(BanditRun { metrics, net })
}

#[allow(clippy::too_many_arguments)]
fn log_row(
    net: &StochasticNet,
    test: &Dataset,
    n_test: usize,
    config: &BanditConfig,
    step: u64,
    epoch: u64,
    interval: &mut Interval,
    start: Instant,
) -> Result<MetricRow> {
    let (train_metric, ln_grad_var) = interval.take();
    let test_metric = test_accuracy(net, test, n_test, config.test_samples, config.seed, step)?;
    Ok(MetricRow {
        step,
        epoch,
        train_metric,
        test_metric,
        ln_grad_var,
        wall_ms: if config.record_wall_time {
            start.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::idx::Split;
    use rand::Rng;

    fn toy_data(n: usize, seed: u64) -> Dataset {
        let mut rng = global_rng(seed, Purpose::Oracle);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let images = labels
            .iter()
            .flat_map(|&l| (0..16).map(move |k| if k % 10 == l as usize { 255 } else { 20 }))
            .collect();
        Dataset::new(images, labels, 4, 4, Split::Train).unwrap()
    }

    fn small_config(estimator: BanditEstimator) -> BanditConfig {
        BanditConfig {
            widths: vec![8],
            estimator,
            epochs: 2,
            batch_size: 10,
            seed: 5,
            ..BanditConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_freezes_the_network() {
        let data = toy_data(200, 1);
        let mut cfg = small_config(BanditEstimator::HncaB);
        cfg.adam.lr = 0.0;
        let run = bandit_train(&cfg, &data, &data).unwrap();
        let init = StochasticNet::init(16, &[8], cfg.encoding, Some(10), &mut global_rng(5, Purpose::Init)).unwrap();
        assert_eq!(run.net, init);
        assert_eq!(run.metrics.rows.len(), 2);
        for r in &run.metrics.rows {
            assert!(r.train_metric >= 0.0 && r.train_metric <= 1.0);
            assert!(r.ln_grad_var.is_finite());
        }
    }

    #[test]
    fn reruns_are_identical() {
        let data = toy_data(120, 2);
        let cfg = small_config(BanditEstimator::Reinforce);
        let a = bandit_train(&cfg, &data, &data).unwrap();
        let b = bandit_train(&cfg, &data, &data).unwrap();
        assert_eq!(a.metrics.to_csv().unwrap(), b.metrics.to_csv().unwrap());
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn log_every_counts_steps() {
        let data = toy_data(100, 3);
        let mut cfg = small_config(BanditEstimator::Hnca);
        cfg.log_every = 3;
        let run = bandit_train(&cfg, &data, &data).unwrap();
        let steps: Vec<u64> = run.metrics.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![3, 6, 9, 12, 15, 18, 20]);
    }
}
