//! Ground truth for small networks: exhaustive enumeration, finite
//! differences and estimator moment statistics.

mod enumerate;
mod moments;
pub mod suite;

pub use enumerate::{
    bandit_mass, exact_elbo, exact_elbo_gradient, exact_expectation, exact_gradient,
    markov_blanket_posterior, vae_mass, MAX_ENUM_UNITS,
};
pub use moments::{Moments, OracleReport, PairedReport, PairedVariance, ABS_FLOOR};

use crate::error::Result;
use crate::params::ParamVisit;
use crate::rng::StreamRng;

/// Central finite differences of `f` with respect to every parameter of
/// `model`, in [`ParamVisit::flatten`] order.
pub fn finite_difference<P, F>(model: &P, step: f64, f: F) -> Result<Vec<f64>>
where
    P: ParamVisit + Clone,
    F: Fn(&P) -> Result<f64>,
{
    let base = model.flatten();
    let mut probe = model.clone();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        flat[k] = base[k] + step;
        probe.assign_flat(&flat);
        let up = f(&probe)?;
        flat[k] = base[k] - step;
        probe.assign_flat(&flat);
        let down = f(&probe)?;
        flat[k] = base[k];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Largest violation of `|a − b| ≤ rel·max(|a|,|b|) + abs` and whether all
/// coordinates pass.
pub fn compare_gradients(a: &[f64], b: &[f64], rel: f64, abs: f64) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (&x, &y) in a.iter().zip(b) {
        let err = (x - y).abs();
        let tol = rel * x.abs().max(y.abs()) + abs;
        ok &= err <= tol;
        worst = worst.max(err / tol);
    }
    (ok, worst)
}

/// Draw `n` estimates and summarize them against `exact`.
pub fn estimator_moments<F>(
    name: &str,
    exact: Vec<f64>,
    n: usize,
    rng: &mut StreamRng,
    z_threshold: f64,
    mut estimate: F,
) -> Result<OracleReport>
where
    F: FnMut(&mut StreamRng) -> Result<Vec<f64>>,
{
    let mut m = Moments::new(exact.len());
    for _ in 0..n {
        m.push(&estimate(rng)?);
    }
    Ok(OracleReport::new(name, exact, &m, z_threshold))
}

/// Draw `n` paired estimates `(a, b)` sharing their random draws.
pub fn paired_moments<F>(
    name: &str,
    exact: Vec<f64>,
    n: usize,
    rng: &mut StreamRng,
    slack_se: f64,
    mut estimate: F,
) -> Result<PairedReport>
where
    F: FnMut(&mut StreamRng) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let mut p = PairedVariance::new(exact);
    for _ in 0..n {
        let (a, b) = estimate(rng)?;
        p.push(&a, &b);
    }
    Ok(p.report(name, slack_se))
}
