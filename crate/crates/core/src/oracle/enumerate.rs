//! Exact expectations and gradients by visiting every configuration of the
//! stochastic units.
//!
//! These routines recompute every probability from the parameters with
//! plain loops and share no code with the estimators they check beyond the
//! scalar helpers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::GradEstimate;
use crate::fhnca::{Vae, VaeGrad};
use crate::math::{bernoulli_entropy, bernoulli_entropy_slope, log_sigmoid, sigmoid, softmax_into};
use crate::netcore::{Linear, StochasticNet};

/// Largest number of binary units the oracle will enumerate.
pub const MAX_ENUM_UNITS: usize = 22;
const BLOCK: u64 = 1 << 10;

fn check_cap(units: usize) -> Result<()> {
    if units > MAX_ENUM_UNITS {
        return Err(Error::Size {
            units,
            cap: MAX_ENUM_UNITS,
        });
    }
    Ok(())
}

/// Unpack configuration `code` into per-layer bits; bit `j` of layer `k`
/// is the `(offset_k + j)`-th bit of the code.
fn decode(code: u64, widths: &[usize]) -> Vec<Vec<bool>> {
    let mut shift = 0;
    widths
        .iter()
        .map(|&w| {
            let layer = (0..w).map(|j| (code >> (shift + j)) & 1 == 1).collect();
            shift += w;
            layer
        })
        .collect()
}

/// Sum `f(code)` over all `2^units` codes in fixed blocks so the reduction
/// order never depends on scheduling.
fn sum_codes<T, F>(units: usize, zero: T, f: F, add: fn(&mut T, &T)) -> T
where
    T: Clone + Send + Sync,
    F: Fn(u64, &mut T) + Sync,
{
    let total = 1u64 << units;
    let blocks: Vec<T> = (0..total.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = zero.clone();
            for code in b * BLOCK..((b + 1) * BLOCK).min(total) {
                f(code, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = zero;
    for b in &blocks {
        add(&mut out, b);
    }
    out
}

fn add_f64(a: &mut f64, b: &f64) {
    *a += b;
}

fn add_vec(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn logits(lin: &Linear, x: &[f64]) -> Vec<f64> {
    (0..lin.n_out)
        .map(|j| lin.row(j).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + lin.bias[j])
        .collect()
}

/// One evaluated configuration of a bandit network.
struct BanditConfig {
    prob: f64,
    /// Per layer: input, high-symbol probabilities and bits.
    layers: Vec<(Vec<f64>, Vec<f64>, Vec<bool>)>,
    head_input: Vec<f64>,
    head_probs: Vec<f64>,
}

fn bandit_config(net: &StochasticNet, context: &[f64], bits: Vec<Vec<bool>>) -> BanditConfig {
    let mut prob = 1.0;
    let mut input = context.to_vec();
    let mut layers = Vec::with_capacity(bits.len());
    for (layer, b) in net.hidden.iter().zip(bits) {
        let p: Vec<f64> = logits(&layer.linear, &input).into_iter().map(sigmoid).collect();
        for (&pj, &h) in p.iter().zip(&b) {
            prob *= if h { pj } else { 1.0 - pj };
        }
        let next = b.iter().map(|&h| layer.encoding.value(h)).collect();
        layers.push((input, p, b));
        input = next;
    }
    let head = net.head.as_ref().expect("checked by caller");
    let mut head_probs = vec![0.0; head.n_actions()];
    softmax_into(&logits(&head.linear, &input), &mut head_probs);
    BanditConfig {
        prob,
        layers,
        head_input: input,
        head_probs,
    }
}

fn check_bandit(net: &StochasticNet, context: &[f64], rewards: &[f64]) -> Result<()> {
    check_cap(net.hidden_units())?;
    let head = net
        .head
        .as_ref()
        .ok_or_else(|| Error::config("the bandit oracle needs a softmax head"))?;
    if rewards.len() != head.n_actions() {
        return Err(Error::config("reward table must have one entry per action"));
    }
    if context.len() != net.context_dim {
        return Err(Error::config("context dimension mismatch"));
    }
    Ok(())
}

/// Total probability of all hidden configurations; 1 up to rounding.
pub fn bandit_mass(net: &StochasticNet, context: &[f64]) -> Result<f64> {
    check_cap(net.hidden_units())?;
    let widths = net.widths();
    Ok(sum_codes(
        net.hidden_units(),
        0.0,
        |code, acc| {
            let mut prob = 1.0;
            let mut input = context.to_vec();
            for (layer, b) in net.hidden.iter().zip(decode(code, &widths)) {
                for (j, l) in logits(&layer.linear, &input).into_iter().enumerate() {
                    let p = sigmoid(l);
                    prob *= if b[j] { p } else { 1.0 - p };
                }
                input = b.iter().map(|&h| layer.encoding.value(h)).collect();
            }
            *acc += prob;
        },
        add_f64,
    ))
}

/// `E[R]` for a context when the reward depends only on the action.
pub fn exact_expectation(net: &StochasticNet, context: &[f64], rewards: &[f64]) -> Result<f64> {
    check_bandit(net, context, rewards)?;
    let widths = net.widths();
    Ok(sum_codes(
        net.hidden_units(),
        0.0,
        |code, acc| {
            let c = bandit_config(net, context, decode(code, &widths));
            *acc += c.prob * c.head_probs.iter().zip(rewards).map(|(p, r)| p * r).sum::<f64>();
        },
        add_f64,
    ))
}

/// `∂E[R]/∂θ` for every parameter, as `Σ_config P · R · ∂log P`.
pub fn exact_gradient(net: &StochasticNet, context: &[f64], rewards: &[f64]) -> Result<GradEstimate> {
    check_bandit(net, context, rewards)?;
    let widths = net.widths();
    let zero = GradEstimate::zeros_like(net);
    let flat_len = crate::params::ParamVisit::param_count(&zero);
    let flat = sum_codes(
        net.hidden_units(),
        vec![0.0; flat_len],
        |code, acc| {
            let c = bandit_config(net, context, decode(code, &widths));
            let value: f64 = c.head_probs.iter().zip(rewards).map(|(p, r)| p * r).sum();
            let mut offset = 0;
            for (input, p, b) in &c.layers {
                let n_in = input.len();
                for (j, (&pj, &h)) in p.iter().zip(b).enumerate() {
                    let s = c.prob * value * ((h as u8 as f64) - pj);
                    for (i, &x) in input.iter().enumerate() {
                        acc[offset + j * n_in + i] += s * x;
                    }
                    acc[offset + p.len() * n_in + j] += s;
                }
                offset += p.len() * (n_in + 1);
            }
            let n_in = c.head_input.len();
            let n_a = c.head_probs.len();
            for a in 0..n_a {
                let s = c.prob * c.head_probs[a] * (rewards[a] - value);
                for (i, &x) in c.head_input.iter().enumerate() {
                    acc[offset + a * n_in + i] += s * x;
                }
                acc[offset + n_a * n_in + a] += s;
            }
        },
        |a, b| add_vec(a, b),
    );
    let mut g = zero;
    crate::params::ParamVisit::assign_flat(&mut g, &flat);
    Ok(g)
}

/// `P(φ_j = high | every other variable)` for hidden unit `j` of layer `k`,
/// from the joint probability of the two completions.
pub fn markov_blanket_posterior(
    net: &StochasticNet,
    context: &[f64],
    high: &[Vec<bool>],
    action: usize,
    k: usize,
    j: usize,
) -> Result<f64> {
    check_cap(net.hidden_units())?;
    let joint = |v: bool| {
        let mut bits = high.to_vec();
        bits[k][j] = v;
        let c = bandit_config(net, context, bits);
        c.prob * c.head_probs[action]
    };
    if net.head.is_none() {
        return Err(Error::config("the posterior oracle needs a softmax head"));
    }
    let (a, b) = (joint(true), joint(false));
    Ok(a / (a + b))
}

/// Per-configuration ELBO pieces computed directly from the parameters.
struct VaeConfig {
    /// `q(Φ | x)`.
    prob: f64,
    /// `log p(x, Φ) + Σ_l H(q_l | parents)`.
    value: f64,
    /// Encoder layers: input, logits and bits.
    enc: Vec<(Vec<f64>, Vec<f64>, Vec<bool>)>,
    samples: Vec<Vec<f64>>,
}

fn bit(v: bool) -> f64 {
    v as u8 as f64
}

fn vae_config(vae: &Vae, x: &[f64], bits: Vec<Vec<bool>>) -> VaeConfig {
    let mut prob = 1.0;
    let mut value = 0.0;
    let mut input = x.to_vec();
    let mut enc = Vec::with_capacity(bits.len());
    let mut samples = Vec::with_capacity(bits.len());
    for (layer, b) in vae.encoder.hidden.iter().zip(bits) {
        let a = logits(&layer.linear, &input);
        for (&aj, &h) in a.iter().zip(&b) {
            let p = sigmoid(aj);
            prob *= if h { p } else { 1.0 - p };
            value += bernoulli_entropy(aj);
        }
        let s: Vec<f64> = b.iter().map(|&h| bit(h)).collect();
        samples.push(s.clone());
        enc.push((input, a, b));
        input = s;
    }
    let ll = |lin: &Linear, inp: &[f64], target: &[f64]| -> f64 {
        logits(lin, inp)
            .iter()
            .zip(target)
            .map(|(&a, &t)| if t == 1.0 { log_sigmoid(a) } else { log_sigmoid(-a) })
            .sum()
    };
    let n = samples.len();
    value += ll(&vae.decoder[0], &samples[0], x);
    for l in 1..n {
        value += ll(&vae.decoder[l], &samples[l], &samples[l - 1]);
    }
    value += vae
        .prior
        .iter()
        .zip(&samples[n - 1])
        .map(|(&a, &t)| if t == 1.0 { log_sigmoid(a) } else { log_sigmoid(-a) })
        .sum::<f64>();
    VaeConfig {
        prob,
        value,
        enc,
        samples,
    }
}

fn check_vae(vae: &Vae, x: &[f64]) -> Result<()> {
    check_cap(vae.latent_units())?;
    if x.len() != vae.n_visible() {
        return Err(Error::config("datum dimension mismatch"));
    }
    Ok(())
}

/// The ELBO of datum `x`, `E_q[log p(x, Φ)] + Σ_l E_q[H(q_l | parents)]`.
pub fn exact_elbo(vae: &Vae, x: &[f64]) -> Result<f64> {
    check_vae(vae, x)?;
    let widths = vae.widths();
    Ok(sum_codes(
        vae.latent_units(),
        0.0,
        |code, acc| {
            let c = vae_config(vae, x, decode(code, &widths));
            *acc += c.prob * c.value;
        },
        add_f64,
    ))
}

/// Total encoder probability over latent configurations.
pub fn vae_mass(vae: &Vae, x: &[f64]) -> Result<f64> {
    check_vae(vae, x)?;
    let widths = vae.widths();
    Ok(sum_codes(
        vae.latent_units(),
        0.0,
        |code, acc| *acc += vae_config(vae, x, decode(code, &widths)).prob,
        add_f64,
    ))
}

fn add_outer(acc: &mut [f64], offset: usize, signal: &[f64], input: &[f64]) -> usize {
    let n_in = input.len();
    for (j, &s) in signal.iter().enumerate() {
        for (i, &x) in input.iter().enumerate() {
            acc[offset + j * n_in + i] += s * x;
        }
        acc[offset + signal.len() * n_in + j] += s;
    }
    offset + signal.len() * (n_in + 1)
}

/// Gradient of [`exact_elbo`] with respect to every VAE parameter.
pub fn exact_elbo_gradient(vae: &Vae, x: &[f64]) -> Result<VaeGrad> {
    check_vae(vae, x)?;
    let widths = vae.widths();
    let zero = VaeGrad::zeros_like(vae);
    let flat_len = crate::params::ParamVisit::param_count(&zero);
    let flat = sum_codes(
        vae.latent_units(),
        vec![0.0; flat_len],
        |code, acc| {
            let c = vae_config(vae, x, decode(code, &widths));
            let mut offset = 0;
            for (input, a, b) in &c.enc {
                // Score of the configuration plus the entropy's own slope.
                let signal: Vec<f64> = a
                    .iter()
                    .zip(b)
                    .map(|(&aj, &h)| {
                        c.prob * (c.value * (bit(h) - sigmoid(aj)) + bernoulli_entropy_slope(aj))
                    })
                    .collect();
                offset = add_outer(acc, offset, &signal, input);
            }
            let n = c.samples.len();
            for l in 0..n {
                let (input, target) = if l == 0 {
                    (&c.samples[0], x)
                } else {
                    (&c.samples[l], &c.samples[l - 1][..])
                };
                let signal: Vec<f64> = logits(&vae.decoder[l], input)
                    .iter()
                    .zip(target)
                    .map(|(&a, &t)| c.prob * (t - sigmoid(a)))
                    .collect();
                offset = add_outer(acc, offset, &signal, input);
            }
            for (j, (&a, &t)) in vae.prior.iter().zip(&c.samples[n - 1]).enumerate() {
                acc[offset + j] += c.prob * (t - sigmoid(a));
            }
        },
        |a, b| add_vec(a, b),
    );
    let mut g = zero;
    crate::params::ParamVisit::assign_flat(&mut g, &flat);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{BernoulliLayer, Encoding, SoftmaxLayer};
    use crate::oracle::finite_difference;
    use crate::params::ParamVisit;
    use rand::SeedableRng;

    fn toy_bandit(seed: u64) -> StochasticNet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut net = StochasticNet::init(3, &[4, 3], Encoding::PlusMinusOne, Some(3), &mut rng).unwrap();
        net.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v = *v * 2.0 + 0.05));
        net
    }

    #[test]
    fn uniform_net_constant_reward() {
        let hid = BernoulliLayer::new(Linear::zeros(2, 3), Encoding::ZeroOne);
        let head = SoftmaxLayer::new(Linear::zeros(3, 2)).unwrap();
        let net = StochasticNet::new(2, vec![hid], Some(head)).unwrap();
        assert!((exact_expectation(&net, &[1.0, 0.0], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((exact_expectation(&net, &[1.0, 0.0], &[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let g = exact_gradient(&net, &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(g.flatten().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn mass_sums_to_one() {
        let net = toy_bandit(1);
        assert!((bandit_mass(&net, &[1.0, 0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bandit_gradient_matches_finite_differences() {
        let net = toy_bandit(2);
        let ctx = [1.0, 0.0, 1.0];
        let rewards = [0.0, 1.0, 0.3];
        let g = exact_gradient(&net, &ctx, &rewards).unwrap().flatten();
        let fd = finite_difference(&net, 1e-5, |n| exact_expectation(n, &ctx, &rewards)).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_unit_slope() {
        // Reward 1 exactly when the unit is high, via a head that copies it.
        let hid = BernoulliLayer::new(Linear::zeros(1, 1), Encoding::ZeroOne);
        let head = SoftmaxLayer::new(Linear::from_parts(1, 2, vec![200.0, -200.0], vec![-100.0, 100.0]).unwrap()).unwrap();
        let net = StochasticNet::new(1, vec![hid], Some(head)).unwrap();
        let g = exact_gradient(&net, &[0.0], &[1.0, 0.0]).unwrap();
        assert!((g.layers[0].bias[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn oversized_network_is_a_size_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let net = StochasticNet::init(2, &[12, 12], Encoding::ZeroOne, Some(2), &mut rng).unwrap();
        assert!(matches!(exact_expectation(&net, &[0.0, 1.0], &[1.0, 0.0]), Err(Error::Size { .. })));
    }

    #[test]
    fn vae_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut vae = Vae::init(4, &[3, 2], &mut rng).unwrap();
        vae.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v = *v * 2.0 - 0.1));
        let x = [1.0, 0.0, 0.0, 1.0];
        assert!((vae_mass(&vae, &x).unwrap() - 1.0).abs() < 1e-12);
        let g = exact_elbo_gradient(&vae, &x).unwrap().flatten();
        let fd = finite_difference(&vae, 1e-5, |v| exact_elbo(v, &x)).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_vae_closed_form() {
        // All-zero parameters: every bit has probability 1/2, so the ELBO is
        // −(visible + latent)·ln 2 from log p plus latent·ln 2 of entropy.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut vae = Vae::init(4, &[3, 3], &mut rng).unwrap();
        vae.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v = 0.0));
        let elbo = exact_elbo(&vae, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((elbo + 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }
}
