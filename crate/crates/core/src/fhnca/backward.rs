use rand::Rng;
use serde::{Deserialize, Serialize};

use super::components::{
    build_elbo_components, flip_deltas, ComponentBlock, ComponentKind, ConnectionClass,
    FunctionComponentSet, ParamBinding,
};
use super::model::{Vae, VaeGrad};
use crate::error::{Error, Result};
use crate::estimators::{bernoulli_score, hnca_rho, BaselineState, HncaPlan};
use crate::math::{bernoulli_entropy_slope, sigmoid, sigmoid_slope};
use crate::netcore::{forward_sample, ForwardTrace, LayerTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FhncaMode {
    Plain,
    /// Subtract a per-layer running mean of the mediated sum.
    WithBaseline,
    /// Also weight direct-only components by the child ratio.
    NoChildPruning,
    /// Also credit upstream components through the child ratio.
    FullReward,
}

impl FhncaMode {
    pub fn uses_baseline(self) -> bool {
        self != FhncaMode::Plain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RlooVariant {
    /// Per layer, redraw that layer from the first sample's parents and
    /// regenerate everything below it.
    PartialResample,
    /// Two independent full passes.
    IndependentSample,
}

/// Gradient for one datum plus what the per-layer baselines should track.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeEstimate {
    pub grad: VaeGrad,
    /// Per latent layer, the quantity its running baseline averages.
    pub baseline_targets: Vec<f64>,
    /// ELBO integrand of the (first) sample.
    pub elbo: f64,
}

fn layer_baseline(baselines: Option<&[BaselineState]>, l: usize) -> f64 {
    baselines.and_then(|b| b.get(l)).map_or(0.0, BaselineState::current)
}

/// Gradients of the components with respect to the parameters they read,
/// holding every latent sample fixed.
pub fn direct_gradients(vae: &Vae, set: &FunctionComponentSet) -> VaeGrad {
    let mut g = VaeGrad::zeros_like(vae);
    for b in &set.blocks {
        match (b.kind, b.binding) {
            (ComponentKind::LinearLogProb, ParamBinding::Decoder(l)) => {
                let signal: Vec<f64> = b
                    .logits
                    .iter()
                    .zip(&b.target)
                    .map(|(&a, &t)| (t as u8 as f64) - sigmoid(a))
                    .collect();
                g.decoder[l].add_outer(&signal, &b.input);
            }
            (ComponentKind::PriorLogProb, ParamBinding::Prior) => {
                for ((p, &a), &t) in g.prior.iter_mut().zip(&b.logits).zip(&b.target) {
                    *p += (t as u8 as f64) - sigmoid(a);
                }
            }
            (ComponentKind::BernoulliEntropy, ParamBinding::Encoder(l)) => {
                let signal: Vec<f64> = b.logits.iter().map(|&a| bernoulli_entropy_slope(a)).collect();
                g.encoder.layers[l].add_outer(&signal, &b.input);
            }
            (kind, binding) => unreachable!("{kind:?} bound to {binding:?}"),
        }
    }
    g
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    /// Varies with the unit and is weighted by the child ratio.
    Weighted,
    /// Constant in the unit, weighted by the child ratio.
    Constant,
    /// Varies with the unit, no child weighting.
    Direct,
    Ignored,
}

fn role(b: &ComponentBlock, layer: usize, depth: usize, mode: FhncaMode) -> Role {
    let has_children = layer + 1 < depth;
    match b.class(layer, depth) {
        ConnectionClass::DirectAndMediated => Role::Weighted,
        ConnectionClass::MediatedOnly => Role::Constant,
        ConnectionClass::DirectOnly => match mode {
            FhncaMode::NoChildPruning | FhncaMode::FullReward if has_children => Role::Weighted,
            _ => Role::Direct,
        },
        ConnectionClass::Upstream => match mode {
            FhncaMode::FullReward => Role::Constant,
            _ => Role::Ignored,
        },
    }
}

/// f-HNCA estimate for the encoder plus direct gradients for everything.
///
/// `plan` must be built from `vae.encoder`. `baselines` holds one state per
/// latent layer and is read only in modes that use a baseline.
pub fn fhnca_backward_planned(
    plan: &HncaPlan,
    vae: &Vae,
    trace: &ForwardTrace,
    set: &FunctionComponentSet,
    mode: FhncaMode,
    baselines: Option<&[BaselineState]>,
) -> Result<VaeEstimate> {
    let depth = vae.depth();
    if mode == FhncaMode::WithBaseline && depth == 1 {
        return Err(Error::config(
            "the f-HNCA baseline needs at least two latent layers; a single layer has no mediated components",
        ));
    }
    if set.depth != depth || trace.layers.len() != depth {
        return Err(Error::config("component set does not match the model depth"));
    }
    let mut grad = direct_gradients(vae, set);
    let mut targets = Vec::with_capacity(depth);
    for l in 0..depth {
        let t = &trace.layers[l];
        let n = t.probs.len();
        let mut weighted = vec![0.0; n];
        let mut direct = vec![0.0; n];
        let mut mediated_sum = 0.0;
        for b in &set.blocks {
            let r = role(b, l, depth, mode);
            match r {
                Role::Ignored => continue,
                Role::Weighted | Role::Constant => mediated_sum += b.total(),
                Role::Direct => {}
            }
            if matches!(r, Role::Weighted | Role::Direct) {
                let d = flip_deltas(vae, b, l, &t.high);
                let acc = if r == Role::Weighted { &mut weighted } else { &mut direct };
                acc.iter_mut().zip(&d).for_each(|(a, d)| *a += d);
            }
        }
        targets.push(mediated_sum);
        let centered = if mode.uses_baseline() {
            mediated_sum - layer_baseline(baselines, l)
        } else {
            mediated_sum
        };
        let log_ratio = if l + 1 < depth {
            plan.child_log_ratio(&vae.encoder, l + 1, &trace.layers[l + 1], &t.high)
        } else {
            vec![0.0; n]
        };
        let mut signal = vec![0.0; n];
        for u in 0..n {
            let h = t.high[u];
            let r = log_ratio[u];
            let (lq1, lq0) = if h { (0.0, r) } else { (r, 0.0) };
            let (w1, w0) = hnca_rho(t.probs[u], lq1, lq0);
            // Only the flipped pin differs from the realized value.
            let (dw1, dw0) = if h { (0.0, weighted[u]) } else { (weighted[u], 0.0) };
            let (dd1, dd0) = if h { (0.0, direct[u]) } else { (direct[u], 0.0) };
            let s = sigmoid_slope(t.probs[u])
                * ((w1 - w0) * centered + w1 * dw1 - w0 * dw0 + dd1 - dd0);
            if !s.is_finite() {
                return Err(Error::numeric(
                    format!("latent layer {l}, unit {u}"),
                    "non-finite f-HNCA signal",
                ));
            }
            signal[u] = s;
        }
        grad.encoder.layers[l].add_outer(&signal, &t.input);
    }
    Ok(VaeEstimate {
        grad,
        baseline_targets: targets,
        elbo: set.total(),
    })
}

/// [`fhnca_backward_planned`] with a plan built on the spot.
pub fn fhnca_backward(
    vae: &Vae,
    trace: &ForwardTrace,
    set: &FunctionComponentSet,
    mode: FhncaMode,
    baselines: Option<&[BaselineState]>,
) -> Result<VaeEstimate> {
    fhnca_backward_planned(&HncaPlan::new(&vae.encoder), vae, trace, set, mode, baselines)
}

/// Local REINFORCE for the encoder: each layer's score times the sum of the
/// components downstream of it, optionally centered by a per-layer baseline.
pub fn vae_reinforce(
    vae: &Vae,
    trace: &ForwardTrace,
    set: &FunctionComponentSet,
    baselines: Option<&[BaselineState]>,
) -> Result<VaeEstimate> {
    let mut grad = direct_gradients(vae, set);
    let mut targets = Vec::with_capacity(vae.depth());
    for (l, t) in trace.layers.iter().enumerate() {
        let f = set.downstream_total(l);
        targets.push(f);
        let c = f - layer_baseline(baselines, l);
        grad.encoder.layers[l].add_outer(&bernoulli_score(t, c), &t.input);
    }
    Ok(VaeEstimate {
        grad,
        baseline_targets: targets,
        elbo: set.total(),
    })
}

/// Output of [`reinforce_loo`] with its cost counters.
#[derive(Debug, Clone, PartialEq)]
pub struct RlooEstimate {
    pub estimate: VaeEstimate,
    /// Full or partial encoder passes started.
    pub forward_passes: usize,
    /// Latent layers sampled across all passes.
    pub layer_evaluations: usize,
}

/// Redraw layers `from..` given the first `from` layers of `base`.
fn resample_from<R: Rng + ?Sized>(vae: &Vae, base: &ForwardTrace, from: usize, rng: &mut R) -> ForwardTrace {
    let mut layers: Vec<LayerTrace> = base.layers[..from].to_vec();
    let mut input = if from == 0 {
        base.context.clone()
    } else {
        base.layers[from - 1].sample.clone()
    };
    for layer in &vae.encoder.hidden[from..] {
        let logits = layer.linear.logits(&input);
        let probs: Vec<f64> = logits.iter().map(|&a| sigmoid(a)).collect();
        let high: Vec<bool> = probs.iter().map(|&p| rng.random::<f64>() < p).collect();
        let sample: Vec<f64> = high.iter().map(|&h| layer.encoding.value(h)).collect();
        let next = sample.clone();
        layers.push(LayerTrace {
            input,
            logits,
            probs,
            high,
            sample,
        });
        input = next;
    }
    ForwardTrace {
        context: base.context.clone(),
        layers,
        head: None,
    }
}

/// Two-sample leave-one-out REINFORCE for the encoder. Decoder, prior and
/// entropy parameters get the direct gradients of the first sample.
pub fn reinforce_loo<R: Rng + ?Sized>(
    vae: &Vae,
    x: &[f64],
    variant: RlooVariant,
    rng: &mut R,
) -> Result<RlooEstimate> {
    let depth = vae.depth();
    let first = forward_sample(&vae.encoder, x, rng)?;
    let set1 = build_elbo_components(vae, &first, x)?;
    let mut grad = direct_gradients(vae, &set1);
    let mut forward_passes = 1;
    let mut layer_evaluations = depth;
    let add_loo = |grad: &mut VaeGrad, l: usize, t1: &LayerTrace, t2: &LayerTrace, f1: f64, f2: f64| {
        let half = 0.5 * (f1 - f2);
        let g = &mut grad.encoder.layers[l];
        g.add_outer(&bernoulli_score(t1, half), &t1.input);
        g.add_outer(&bernoulli_score(t2, -half), &t2.input);
    };
    match variant {
        RlooVariant::PartialResample => {
            for l in 0..depth {
                let second = resample_from(vae, &first, l, rng);
                forward_passes += 1;
                layer_evaluations += depth - l;
                let set2 = build_elbo_components(vae, &second, x)?;
                let (f1, f2) = (set1.downstream_total(l), set2.downstream_total(l));
                add_loo(&mut grad, l, &first.layers[l], &second.layers[l], f1, f2);
            }
        }
        RlooVariant::IndependentSample => {
            let second = forward_sample(&vae.encoder, x, rng)?;
            forward_passes += 1;
            layer_evaluations += depth;
            let set2 = build_elbo_components(vae, &second, x)?;
            for l in 0..depth {
                let (f1, f2) = (set1.downstream_total(l), set2.downstream_total(l));
                add_loo(&mut grad, l, &first.layers[l], &second.layers[l], f1, f2);
            }
        }
    }
    Ok(RlooEstimate {
        estimate: VaeEstimate {
            grad,
            baseline_targets: Vec::new(),
            elbo: set1.total(),
        },
        forward_passes,
        layer_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamVisit;
    use rand::SeedableRng;

    fn toy(widths: &[usize], seed: u64) -> (Vae, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut vae = Vae::init(4, widths, &mut rng).unwrap();
        vae.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v = *v * 2.0 + 0.1));
        (vae, vec![1.0, 0.0, 1.0, 1.0])
    }

    #[test]
    fn baseline_mode_rejected_for_single_layer() {
        let (vae, x) = toy(&[3], 0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t = forward_sample(&vae.encoder, &x, &mut rng).unwrap();
        let set = build_elbo_components(&vae, &t, &x).unwrap();
        assert!(matches!(
            fhnca_backward(&vae, &t, &set, FhncaMode::WithBaseline, None),
            Err(Error::Config(_))
        ));
        assert!(fhnca_backward(&vae, &t, &set, FhncaMode::Plain, None).is_ok());
    }

    #[test]
    fn rloo_pass_counts_scale_with_depth() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for depth in [1usize, 3] {
            let (vae, x) = toy(&vec![3; depth], 3);
            let p = reinforce_loo(&vae, &x, RlooVariant::PartialResample, &mut rng).unwrap();
            let i = reinforce_loo(&vae, &x, RlooVariant::IndependentSample, &mut rng).unwrap();
            assert_eq!(p.forward_passes, 1 + depth);
            assert_eq!(i.forward_passes, 2);
            assert_eq!(p.layer_evaluations, depth + depth * (depth + 1) / 2);
        }
    }

    #[test]
    fn plain_and_full_reward_agree_on_last_layer() {
        let (vae, x) = toy(&[3, 2], 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = forward_sample(&vae.encoder, &x, &mut rng).unwrap();
        let set = build_elbo_components(&vae, &t, &x).unwrap();
        let a = fhnca_backward(&vae, &t, &set, FhncaMode::Plain, None).unwrap();
        let b = fhnca_backward(&vae, &t, &set, FhncaMode::FullReward, None).unwrap();
        assert_eq!(a.grad.encoder.layers[1], b.grad.encoder.layers[1]);
    }
}
