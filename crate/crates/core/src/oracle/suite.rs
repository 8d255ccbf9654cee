//! The default toy instances and the statistical gates run against them.

use rand::SeedableRng;
use serde::Serialize;

use super::{
    compare_gradients, estimator_moments, exact_elbo, exact_elbo_gradient, exact_expectation,
    exact_gradient, finite_difference, paired_moments, OracleReport, PairedReport,
};
use crate::error::Result;
use crate::estimators::{reinforce_grad, BaselineState, HncaPlan};
use crate::fhnca::{
    build_elbo_components, fhnca_backward_planned, reinforce_loo, vae_reinforce, FhncaMode,
    RlooVariant, Vae,
};
use crate::netcore::{forward_sample, Encoding, StochasticNet};
use crate::params::ParamVisit;
use crate::rng::{global_rng, Purpose, StreamRng};

/// Unbiasedness tolerance in standard errors.
pub const Z_GATE: f64 = 4.0;
/// Slack, in standard errors, for the elementwise variance ordering.
pub const VARIANCE_SLACK: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct BanditToy {
    pub name: String,
    pub net: StochasticNet,
    pub context: Vec<f64>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VaeToy {
    pub name: String,
    pub vae: Vae,
    pub x: Vec<f64>,
}

fn scaled<P: ParamVisit>(mut p: P, gain: f64, shift: f64) -> P {
    p.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v = *v * gain + shift));
    p
}

/// Three seeded bandit networks with at most 12 stochastic units each.
pub fn toy_bandits() -> Vec<BanditToy> {
    let shapes: [(&str, usize, &[usize], Encoding, usize, u64); 3] = [
        ("bandit-3-4-3", 3, &[4], Encoding::PlusMinusOne, 3, 101),
        ("bandit-3-4-3-3", 3, &[4, 3], Encoding::PlusMinusOne, 3, 102),
        ("bandit-4-4-4-3-2", 4, &[4, 4, 3], Encoding::ZeroOne, 2, 103),
    ];
    shapes.iter()
        .map(|&(name, ctx, widths, enc, actions, seed)| {
            let mut rng = global_rng(seed, Purpose::Init);
            let net = StochasticNet::init(ctx, widths, enc, Some(actions), &mut rng).expect("valid toy");
            let context: Vec<f64> = (0..ctx).map(|i| ((i + seed as usize) % 2) as f64).collect();
            let mut rewards = vec![0.0; actions];
            rewards[0] = 1.0;
            BanditToy {
                name: name.into(),
                net: scaled(net, 3.0, 0.05),
                context,
                rewards,
            }
        })
        .collect()
}

/// Three seeded VAEs over 4 visible bits with at most 10 latent units.
pub fn toy_vaes() -> Vec<VaeToy> {
    let shapes: [(&str, &[usize], u64); 3] = [
        ("vae-4-3-3", &[3, 3], 201),
        ("vae-4-4", &[4], 202),
        ("vae-4-3-3-3", &[3, 3, 3], 203),
    ];
    shapes.iter()
        .map(|&(name, widths, seed)| {
            let mut rng = global_rng(seed, Purpose::Init);
            let vae = Vae::init(4, widths, &mut rng).expect("valid toy");
            VaeToy {
                name: name.into(),
                vae: scaled(vae, 3.0, -0.1),
                x: vec![1.0, 0.0, 1.0, 1.0],
            }
        })
        .collect()
}

/// Bandit estimators under test, by CLI name.
pub const BANDIT_ESTIMATORS: [&str; 4] = ["reinforce", "reinforce-b", "hnca", "hnca-b"];
/// VAE estimators under test, by CLI name.
pub const VAE_ESTIMATORS: [&str; 8] = [
    "fhnca",
    "fhnca-b",
    "fhnca-noprune",
    "fhnca-fullreward",
    "rloo",
    "rloo-is",
    "reinforce",
    "reinforce-b",
];

fn fixed_bandit_baseline() -> BaselineState {
    BaselineState::fixed(0.4)
}

fn fixed_vae_baselines(depth: usize) -> Vec<BaselineState> {
    vec![BaselineState::fixed(-6.0); depth]
}

/// One bandit estimate for `estimator` on a fresh trace.
pub fn bandit_estimate(
    toy: &BanditToy,
    plan: &HncaPlan,
    estimator: &str,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let t = forward_sample(&toy.net, &toy.context, rng)?;
    let r = toy.rewards[t.head.as_ref().expect("toy has a head").action];
    let b = fixed_bandit_baseline();
    let g = match estimator {
        "reinforce" => reinforce_grad(&toy.net, &t, r, None)?,
        "reinforce-b" => reinforce_grad(&toy.net, &t, r, Some(&b))?,
        "hnca" => plan.backward(&toy.net, &t, r, None)?,
        "hnca-b" => plan.backward(&toy.net, &t, r, Some(&b))?,
        other => unreachable!("unknown bandit estimator {other}"),
    };
    Ok(g.flatten())
}

/// One VAE estimate for `estimator` on fresh samples.
pub fn vae_estimate(toy: &VaeToy, plan: &HncaPlan, estimator: &str, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let vae = &toy.vae;
    let baselines = fixed_vae_baselines(vae.depth());
    let b = Some(&baselines[..]);
    let rloo = |variant, rng: &mut StreamRng| -> Result<Vec<f64>> {
        Ok(reinforce_loo(vae, &toy.x, variant, rng)?.estimate.grad.flatten())
    };
    match estimator {
        "rloo" => return rloo(RlooVariant::PartialResample, rng),
        "rloo-is" => return rloo(RlooVariant::IndependentSample, rng),
        _ => {}
    }
    let t = forward_sample(&vae.encoder, &toy.x, rng)?;
    let set = build_elbo_components(vae, &t, &toy.x)?;
    let est = match estimator {
        "fhnca" => fhnca_backward_planned(plan, vae, &t, &set, FhncaMode::Plain, None)?,
        "fhnca-b" => fhnca_backward_planned(plan, vae, &t, &set, FhncaMode::WithBaseline, b)?,
        "fhnca-noprune" => fhnca_backward_planned(plan, vae, &t, &set, FhncaMode::NoChildPruning, b)?,
        "fhnca-fullreward" => fhnca_backward_planned(plan, vae, &t, &set, FhncaMode::FullReward, b)?,
        "reinforce" => vae_reinforce(vae, &t, &set, None)?,
        "reinforce-b" => vae_reinforce(vae, &t, &set, b)?,
        other => unreachable!("unknown VAE estimator {other}"),
    };
    Ok(est.grad.flatten())
}

fn sub_rng(seed: u64, a: usize, b: usize) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed ^ ((a as u64) << 32) ^ (b as u64) << 8);
    rng.set_stream(Purpose::Oracle as u64);
    rng
}

pub fn bandit_unbiasedness(toy: &BanditToy, n: usize, seed: u64, idx: usize) -> Result<Vec<OracleReport>> {
    let exact = exact_gradient(&toy.net, &toy.context, &toy.rewards)?.flatten();
    let plan = HncaPlan::new(&toy.net);
    BANDIT_ESTIMATORS
        .iter()
        .enumerate()
        .map(|(e, est)| {
            let mut rng = sub_rng(seed, idx, e);
            estimator_moments(&format!("{}/{est}", toy.name), exact.clone(), n, &mut rng, Z_GATE, |r| {
                bandit_estimate(toy, &plan, est, r)
            })
        })
        .collect()
}

pub fn vae_unbiasedness(toy: &VaeToy, n: usize, seed: u64, idx: usize) -> Result<Vec<OracleReport>> {
    let exact = exact_elbo_gradient(&toy.vae, &toy.x)?.flatten();
    let plan = HncaPlan::new(&toy.vae.encoder);
    VAE_ESTIMATORS
        .iter()
        .enumerate()
        // The baseline mode is undefined without mediated components.
        .filter(|(_, est)| !(**est == "fhnca-b" && toy.vae.depth() == 1))
        .map(|(e, est)| {
            let mut rng = sub_rng(seed, 100 + idx, e);
            estimator_moments(&format!("{}/{est}", toy.name), exact.clone(), n, &mut rng, Z_GATE, |r| {
                vae_estimate(toy, &plan, est, r)
            })
        })
        .collect()
}

/// Paired comparison of REINFORCE (`a`) against HNCA (`b`) on shared traces.
pub fn bandit_variance(toy: &BanditToy, n: usize, seed: u64, idx: usize) -> Result<PairedReport> {
    let exact = exact_gradient(&toy.net, &toy.context, &toy.rewards)?.flatten();
    let plan = HncaPlan::new(&toy.net);
    let mut rng = sub_rng(seed, 200 + idx, 0);
    let mut report = paired_moments(&toy.name, exact, n, &mut rng, VARIANCE_SLACK, |r| {
        let t = forward_sample(&toy.net, &toy.context, r)?;
        let rew = toy.rewards[t.head.as_ref().expect("toy has a head").action];
        Ok((
            reinforce_grad(&toy.net, &t, rew, None)?.flatten(),
            plan.backward(&toy.net, &t, rew, None)?.flatten(),
        ))
    })?;
    report.hidden_params = toy.net.hidden.iter().map(|l| l.linear.num_params()).sum();
    Ok(report)
}

/// Paired comparison of REINFORCE (`a`) against plain f-HNCA (`b`).
pub fn vae_variance(toy: &VaeToy, n: usize, seed: u64, idx: usize) -> Result<PairedReport> {
    let vae = &toy.vae;
    let exact = exact_elbo_gradient(vae, &toy.x)?.flatten();
    let plan = HncaPlan::new(&vae.encoder);
    let mut rng = sub_rng(seed, 300 + idx, 0);
    let mut report = paired_moments(&toy.name, exact, n, &mut rng, VARIANCE_SLACK, |r| {
        let t = forward_sample(&vae.encoder, &toy.x, r)?;
        let set = build_elbo_components(vae, &t, &toy.x)?;
        Ok((
            vae_reinforce(vae, &t, &set, None)?.grad.flatten(),
            fhnca_backward_planned(&plan, vae, &t, &set, FhncaMode::Plain, None)?.grad.flatten(),
        ))
    })?;
    report.hidden_params = vae.encoder.num_params();
    Ok(report)
}

/// Agreement of the analytic oracle gradient with finite differences.
#[derive(Debug, Clone, Serialize)]
pub struct FdCheck {
    pub name: String,
    pub worst_ratio: f64,
    pub pass: bool,
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL: f64 = 1e-5;
pub const FD_ABS: f64 = 1e-9;

pub fn fd_checks() -> Result<Vec<FdCheck>> {
    let mut out = Vec::new();
    for toy in toy_bandits() {
        let g = exact_gradient(&toy.net, &toy.context, &toy.rewards)?.flatten();
        let fd = finite_difference(&toy.net, FD_STEP, |n| exact_expectation(n, &toy.context, &toy.rewards))?;
        let (pass, worst_ratio) = compare_gradients(&g, &fd, FD_REL, FD_ABS);
        out.push(FdCheck { name: toy.name, worst_ratio, pass });
    }
    for toy in toy_vaes() {
        let g = exact_elbo_gradient(&toy.vae, &toy.x)?.flatten();
        let fd = finite_difference(&toy.vae, FD_STEP, |v| exact_elbo(v, &toy.x))?;
        let (pass, worst_ratio) = compare_gradients(&g, &fd, FD_REL, FD_ABS);
        out.push(FdCheck { name: toy.name, worst_ratio, pass });
    }
    Ok(out)
}

/// Everything the `verify` command reports.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub n_samples: usize,
    pub seed: u64,
    pub finite_difference: Vec<FdCheck>,
    pub unbiasedness: Vec<OracleReport>,
    pub variance: Vec<PairedReport>,
    pub pass: bool,
}

/// Minimum fractional drop of the mean per-parameter variance.
pub const MIN_MEAN_REDUCTION: f64 = 0.2;

impl PairedReport {
    pub fn passes_gate(&self) -> bool {
        self.elementwise_ordered && self.mean_reduction() >= MIN_MEAN_REDUCTION
    }
}

pub fn run_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let finite_difference = fd_checks()?;
    let mut unbiasedness = Vec::new();
    let mut variance = Vec::new();
    for (i, toy) in toy_bandits().iter().enumerate() {
        unbiasedness.extend(bandit_unbiasedness(toy, n, seed, i)?);
        variance.push(bandit_variance(toy, n, seed, i)?);
    }
    for (i, toy) in toy_vaes().iter().enumerate() {
        unbiasedness.extend(vae_unbiasedness(toy, n, seed, i)?);
        variance.push(vae_variance(toy, n, seed, i)?);
    }
    let pass = finite_difference.iter().all(|c| c.pass)
        && unbiasedness.iter().all(|r| r.pass)
        && variance.iter().all(PairedReport::passes_gate);
    Ok(SuiteReport {
        n_samples: n,
        seed,
        finite_difference,
        unbiasedness,
        variance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::hnca_backward;

    #[test]
    fn toys_fit_the_stated_sizes() {
        for t in toy_bandits() {
            assert!(t.net.hidden_units() + 1 <= 12);
        }
        for t in toy_vaes() {
            assert!(t.vae.latent_units() <= 10);
        }
    }

    #[test]
    fn hnca_free_function_matches_plan() {
        let toy = &toy_bandits()[1];
        let mut rng = global_rng(0, Purpose::Sample);
        let t = forward_sample(&toy.net, &toy.context, &mut rng).unwrap();
        let a = hnca_backward(&toy.net, &t, 1.0, None).unwrap();
        let b = HncaPlan::new(&toy.net).backward(&toy.net, &t, 1.0, None).unwrap();
        assert_eq!(a, b);
    }
}
