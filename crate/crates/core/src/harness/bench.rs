//! Wall-clock comparison of the HNCA backward pass with a forward pass.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bandit::N_ACTIONS;
use crate::error::{Error, Result};
use crate::estimators::{GradEstimate, HncaPlan};
use crate::netcore::{forward_sample, Encoding, ForwardTrace, StochasticNet};
use crate::rng::{example_rng, global_rng, Purpose, Rng};

/// Largest accepted backward/forward time ratio.
pub const MAX_RATIO: f64 = 4.0;
/// Largest accepted relative distance of a backward time from the linear fit.
pub const FIT_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub widths: Vec<usize>,
    pub depth: usize,
    pub context_dim: usize,
    pub encoding: Encoding,
    /// Calls per timed trial.
    pub calls: usize,
    /// Rounds over all widths; the fastest round per width is reported.
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            widths: vec![100, 200, 400],
            depth: 2,
            context_dim: 784,
            encoding: Encoding::PlusMinusOne,
            calls: 100,
            trials: 25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub width: usize,
    pub depth: usize,
    pub edges: usize,
    pub forward_us: f64,
    pub backward_us: f64,
    pub ratio: f64,
    /// `|backward − fit| / backward`.
    pub fit_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares fit `backward_us ≈ intercept + slope · edges`.
    pub slope_us_per_edge: f64,
    pub intercept_us: f64,
    pub max_ratio: f64,
    pub max_fit_deviation: f64,
    pub ratio_ok: bool,
    pub linear_ok: bool,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("width  depth    edges  forward_us  backward_us  ratio  fit_dev\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>5}  {:>5}  {:>7}  {:>10.2}  {:>11.2}  {:>5.2}  {:>7.3}\n",
                r.width, r.depth, r.edges, r.forward_us, r.backward_us, r.ratio, r.fit_deviation
            ));
        }
        s
    }
}

fn per_call_us(calls: usize, mut f: impl FnMut(usize)) -> f64 {
    let t = Instant::now();
    for i in 0..calls {
        f(i);
    }
    t.elapsed().as_secs_f64() * 1e6 / calls as f64
}

/// Everything needed to time one width.
struct Fixture {
    net: StochasticNet,
    plan: HncaPlan,
    contexts: Vec<Vec<f64>>,
    traces: Vec<ForwardTrace>,
    grad: GradEstimate,
}

impl Fixture {
    fn new(cfg: &BenchConfig, width: usize) -> Result<Self> {
        let widths = vec![width; cfg.depth];
        let net = StochasticNet::init(
            cfg.context_dim,
            &widths,
            cfg.encoding,
            Some(N_ACTIONS),
            &mut global_rng(cfg.seed, Purpose::Init),
        )?;
        let contexts: Vec<Vec<f64>> = (0..cfg.calls)
            .map(|i| {
                let mut rng = example_rng(cfg.seed, Purpose::Binarize, 0, i as u64);
                (0..cfg.context_dim).map(|_| rng.random_range(0..2) as f64).collect()
            })
            .collect();
        let mut rng = example_rng(cfg.seed, Purpose::Sample, 0, width as u64);
        let traces: Vec<ForwardTrace> = contexts
            .iter()
            .map(|c| forward_sample(&net, c, &mut rng))
            .collect::<Result<_>>()?;
        let plan = HncaPlan::new(&net);
        let mut grad = GradEstimate::zeros_like(&net);
        // Fail early on numeric problems; the timed loops then cannot error.
        for t in &traces {
            plan.backward_into(&net, t, 1.0, None, &mut grad)?;
        }
        Ok(Fixture {
            net,
            plan,
            contexts,
            traces,
            grad,
        })
    }

    fn time_forward(&self, cfg: &BenchConfig, round: usize) -> f64 {
        let mut rng = example_rng(cfg.seed, Purpose::Sample, 1, round as u64);
        per_call_us(cfg.calls, |i| {
            black_box(forward_sample(&self.net, &self.contexts[i], &mut rng).expect("checked context"));
        })
    }

    fn time_backward(&mut self, cfg: &BenchConfig) -> f64 {
        let Fixture { net, plan, traces, grad, .. } = self;
        per_call_us(cfg.calls, |i| {
            let r = (i % 2) as f64;
            plan.backward_into(net, &traces[i], r, None, grad).expect("checked trace");
            black_box(&*grad);
        })
    }
}

/// Time forward sampling and the HNCA backward pass at each width.
pub fn bench_timing(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.widths.len() < 2 || cfg.depth == 0 || cfg.calls == 0 || cfg.trials == 0 {
        return Err(Error::config("bench needs at least two widths and positive depth, calls and trials"));
    }
    let mut fixtures: Vec<Fixture> = cfg.widths.iter().map(|&w| Fixture::new(cfg, w)).collect::<Result<_>>()?;
    // Widths take turns so that slow stretches of the machine hit all of
    // them; each keeps its fastest round.
    let mut best = vec![(f64::INFINITY, f64::INFINITY); fixtures.len()];
    for round in 0..cfg.trials {
        for (fx, b) in fixtures.iter_mut().zip(&mut best) {
            b.0 = b.0.min(fx.time_forward(cfg, round));
            b.1 = b.1.min(fx.time_backward(cfg));
        }
    }
    let mut rows: Vec<BenchRow> = cfg
        .widths
        .iter()
        .zip(&fixtures)
        .zip(&best)
        .map(|((&width, fx), &(forward_us, backward_us))| BenchRow {
            width,
            depth: cfg.depth,
            edges: fx.net.edge_count(),
            forward_us,
            backward_us,
            ratio: backward_us / forward_us,
            fit_deviation: 0.0,
        })
        .collect();
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.edges as f64).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.backward_us).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|r| (r.edges as f64 - mx) * (r.backward_us - my)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.edges as f64 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    for r in &mut rows {
        r.fit_deviation = (r.backward_us - (intercept + slope * r.edges as f64)).abs() / r.backward_us;
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_fit_deviation = rows.iter().map(|r| r.fit_deviation).fold(0.0, f64::max);
    Ok(BenchReport {
        rows,
        slope_us_per_edge: slope,
        intercept_us: intercept,
        max_ratio,
        max_fit_deviation,
        ratio_ok: max_ratio < MAX_RATIO,
        linear_ok: max_fit_deviation <= FIT_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_produces_a_row_per_width() {
        let cfg = BenchConfig {
            widths: vec![4, 8, 16],
            context_dim: 20,
            calls: 10,
            trials: 2,
            ..BenchConfig::default()
        };
        let r = bench_timing(&cfg).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.iter().all(|row| row.forward_us > 0.0 && row.backward_us > 0.0));
        assert!(r.to_table().lines().count() == 4);
    }
}
