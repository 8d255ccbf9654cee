//! The ELBO as a sum of function components.
//!
//! Every term of the bound is a sum over output units, and each unit's
//! summand is one component. Components of the same term share their parent
//! layers, so they are stored in blocks. Latent layers are indexed from 0
//! (the layer fed by the data) to `L − 1`.

use serde::Serialize;

use super::model::Vae;
use crate::error::{Error, Result};
use crate::math::{bernoulli_entropy, log_sigmoid};
use crate::netcore::{Encoding, ForwardTrace, Linear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    /// `log σ(±a)` of a bit under a linear-sigmoid model.
    LinearLogProb,
    /// Entropy of an encoder unit given its parents.
    BernoulliEntropy,
    /// `log σ(±b)` of a top-layer latent under the bias-only prior.
    PriorLogProb,
}

/// Parameters a block reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamBinding {
    Decoder(usize),
    Prior,
    Encoder(usize),
}

/// How a component relates to one latent layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionClass {
    /// Reads the layer but nothing below it.
    DirectOnly,
    /// Reads the layer and a layer below it.
    DirectAndMediated,
    /// Reads only layers below it.
    MediatedOnly,
    /// Reads nothing at or below the layer.
    Upstream,
}

/// One term of the ELBO: a component per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentBlock {
    pub name: String,
    pub kind: ComponentKind,
    pub binding: ParamBinding,
    /// Latent layer feeding the logits; `None` for data or bias-only inputs.
    pub input_layer: Option<usize>,
    /// Latent layer whose sample is scored; `None` for observed bits and
    /// entropies.
    pub output_layer: Option<usize>,
    pub input: Vec<f64>,
    pub logits: Vec<f64>,
    /// Scored bit per component. Unused by entropies.
    pub target: Vec<bool>,
    pub values: Vec<f64>,
}

impl ComponentBlock {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Deepest latent layer the block reads, if any.
    pub fn deepest(&self) -> Option<usize> {
        match (self.input_layer, self.output_layer) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn reads(&self, layer: usize) -> bool {
        self.input_layer == Some(layer) || self.output_layer == Some(layer)
    }

    /// Connection class relative to latent layer `layer` of `depth`.
    pub fn class(&self, layer: usize, depth: usize) -> ConnectionClass {
        let mediated = layer + 1 < depth && self.deepest().is_some_and(|m| m > layer);
        match (self.reads(layer), mediated) {
            (true, true) => ConnectionClass::DirectAndMediated,
            (true, false) => ConnectionClass::DirectOnly,
            (false, true) => ConnectionClass::MediatedOnly,
            (false, false) => ConnectionClass::Upstream,
        }
    }

    /// Whether the block lies downstream of `layer`, i.e. reads it or a
    /// layer below it.
    pub fn downstream_of(&self, layer: usize) -> bool {
        self.deepest().is_some_and(|m| m >= layer)
    }
}

/// One component: a block and an index into it.
#[derive(Debug, Clone, Copy)]
pub struct FunctionComponent<'a> {
    pub block: &'a ComponentBlock,
    pub index: usize,
}

impl FunctionComponent<'_> {
    pub fn value(&self) -> f64 {
        self.block.values[self.index]
    }
}

/// The ELBO of one datum and one latent sample, split into components.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionComponentSet {
    pub depth: usize,
    pub blocks: Vec<ComponentBlock>,
}

impl FunctionComponentSet {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The ELBO integrand `log p(x, Φ) + Σ H`.
    pub fn total(&self) -> f64 {
        self.blocks.iter().map(ComponentBlock::total).sum()
    }

    pub fn components(&self) -> impl Iterator<Item = FunctionComponent<'_>> {
        self.blocks
            .iter()
            .flat_map(|b| (0..b.values.len()).map(move |index| FunctionComponent { block: b, index }))
    }

    /// Sum of the blocks downstream of `layer`.
    pub fn downstream_total(&self, layer: usize) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.downstream_of(layer))
            .map(ComponentBlock::total)
            .sum()
    }

    pub fn count_class(&self, layer: usize, class: ConnectionClass) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.class(layer, self.depth) == class)
            .map(|b| b.values.len())
            .sum()
    }
}

#[inline]
fn bit_log_prob(logit: f64, bit: bool) -> f64 {
    log_sigmoid(if bit { logit } else { -logit })
}

fn component_value(kind: ComponentKind, logit: f64, bit: bool) -> f64 {
    match kind {
        ComponentKind::LinearLogProb | ComponentKind::PriorLogProb => bit_log_prob(logit, bit),
        ComponentKind::BernoulliEntropy => bernoulli_entropy(logit),
    }
}

fn bits(v: &[f64]) -> Vec<bool> {
    v.iter().map(|&x| x == 1.0).collect()
}

fn linear_block(
    name: String,
    binding: ParamBinding,
    linear: &Linear,
    input_layer: Option<usize>,
    output_layer: Option<usize>,
    input: &[f64],
    target: Vec<bool>,
) -> ComponentBlock {
    let logits = linear.logits(input);
    let values = logits.iter().zip(&target).map(|(&a, &t)| bit_log_prob(a, t)).collect();
    ComponentBlock {
        name,
        kind: ComponentKind::LinearLogProb,
        binding,
        input_layer,
        output_layer,
        input: input.to_vec(),
        logits,
        target,
        values,
    }
}

/// Split the ELBO integrand for datum `x` and the latent sample in `trace`
/// into components: reconstruction, the conditional priors, the top prior,
/// and the entropy of every encoder layer.
pub fn build_elbo_components(vae: &Vae, trace: &ForwardTrace, x: &[f64]) -> Result<FunctionComponentSet> {
    let depth = vae.depth();
    if x.len() != vae.n_visible() {
        return Err(Error::config(format!(
            "datum has {} pixels, model expects {}",
            x.len(),
            vae.n_visible()
        )));
    }
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::config("datum must be binarized to 0/1"));
    }
    if trace.layers.len() != depth || trace.head.is_some() {
        return Err(Error::config("trace does not come from this encoder"));
    }
    for (t, w) in trace.layers.iter().zip(vae.widths()) {
        if t.sample.len() != w {
            return Err(Error::config("trace widths do not match the encoder"));
        }
    }
    let sample = |l: usize| &trace.layers[l].sample[..];
    let mut blocks = Vec::with_capacity(2 * depth + 1);
    blocks.push(linear_block(
        "recon".into(),
        ParamBinding::Decoder(0),
        &vae.decoder[0],
        Some(0),
        None,
        sample(0),
        bits(x),
    ));
    for l in 1..depth {
        blocks.push(linear_block(
            format!("p{l}"),
            ParamBinding::Decoder(l),
            &vae.decoder[l],
            Some(l),
            Some(l - 1),
            sample(l),
            bits(sample(l - 1)),
        ));
    }
    let top = bits(sample(depth - 1));
    blocks.push(ComponentBlock {
        name: "prior".into(),
        kind: ComponentKind::PriorLogProb,
        binding: ParamBinding::Prior,
        input_layer: None,
        output_layer: Some(depth - 1),
        input: Vec::new(),
        logits: vae.prior.clone(),
        values: vae.prior.iter().zip(&top).map(|(&a, &t)| bit_log_prob(a, t)).collect(),
        target: top,
    });
    for (l, t) in trace.layers.iter().enumerate() {
        blocks.push(ComponentBlock {
            name: format!("entropy{l}"),
            kind: ComponentKind::BernoulliEntropy,
            binding: ParamBinding::Encoder(l),
            input_layer: l.checked_sub(1),
            output_layer: None,
            input: t.input.clone(),
            logits: t.logits.clone(),
            target: Vec::new(),
            values: t.logits.iter().map(|&a| bernoulli_entropy(a)).collect(),
        });
    }
    Ok(FunctionComponentSet { depth, blocks })
}

pub(crate) fn bound_linear(vae: &Vae, binding: ParamBinding) -> Option<&Linear> {
    match binding {
        ParamBinding::Decoder(l) => Some(&vae.decoder[l]),
        ParamBinding::Encoder(l) => Some(&vae.encoder.hidden[l].linear),
        ParamBinding::Prior => None,
    }
}

/// Counterfactual values of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCounterfactuals {
    pub value: f64,
    /// `(f_hi, f_lo)` over the latent inputs of the component, when its
    /// inputs are latent.
    pub inputs: Option<(Vec<f64>, Vec<f64>)>,
    /// `(f_hi, f_lo)` with the scored latent unit pinned, when the component
    /// scores a latent.
    pub output: Option<(f64, f64)>,
}

/// Value of a component with each of its latent parents pinned high and
/// low, using the incremental logit update for input pins.
pub fn component_counterfactuals(vae: &Vae, c: FunctionComponent<'_>) -> ComponentCounterfactuals {
    let b = c.block;
    let o = c.index;
    let value = b.values[o];
    let bit = b.target.get(o).copied().unwrap_or(false);
    let inputs = match (b.input_layer, bound_linear(vae, b.binding)) {
        (Some(_), Some(lin)) => {
            let row = lin.row(o);
            let enc = Encoding::ZeroOne;
            let pin = |i: usize, v: f64| {
                let x = b.input[i];
                if x == v {
                    value
                } else {
                    component_value(b.kind, b.logits[o] + row[i] * (v - x), bit)
                }
            };
            let n = b.input.len();
            Some((
                (0..n).map(|i| pin(i, enc.high())).collect(),
                (0..n).map(|i| pin(i, enc.low())).collect(),
            ))
        }
        _ => None,
    };
    let output = b.output_layer.map(|_| {
        let a = b.logits[o];
        (bit_log_prob(a, true), bit_log_prob(a, false))
    });
    ComponentCounterfactuals {
        value,
        inputs,
        output,
    }
}

/// Per-unit changes of a block's total when one unit of `layer` is flipped
/// away from its realized value. Pinning to the realized value changes
/// nothing, so only the flip is returned.
pub(crate) fn flip_deltas(vae: &Vae, b: &ComponentBlock, layer: usize, realized_high: &[bool]) -> Vec<f64> {
    let mut delta = vec![0.0; realized_high.len()];
    if b.input_layer == Some(layer) {
        let lin = bound_linear(vae, b.binding).expect("latent inputs come with weights");
        for (o, (&a, &f)) in b.logits.iter().zip(&b.values).enumerate() {
            let bit = b.target.get(o).copied().unwrap_or(false);
            let row = lin.row(o);
            for (i, d) in delta.iter_mut().enumerate() {
                let w = row[i];
                if w == 0.0 {
                    continue;
                }
                // Zero-one inputs: flipping moves the input by ±1.
                let shift = if realized_high[i] { -w } else { w };
                *d += component_value(b.kind, a + shift, bit) - f;
            }
        }
    }
    if b.output_layer == Some(layer) {
        for (o, d) in delta.iter_mut().enumerate() {
            let a = b.logits[o];
            let bit = b.target[o];
            *d += bit_log_prob(a, !bit) - bit_log_prob(a, bit);
        }
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{forward_sample, trace_from_samples};
    use rand::SeedableRng;

    fn toy(widths: &[usize], seed: u64) -> (Vae, ForwardTrace, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vae = Vae::init(4, widths, &mut rng).unwrap();
        let x = vec![1.0, 0.0, 0.0, 1.0];
        let t = forward_sample(&vae.encoder, &x, &mut rng).unwrap();
        (vae, t, x)
    }

    #[test]
    fn two_layer_counts_and_classes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let vae = Vae::init(784, &[200, 200], &mut rng).unwrap();
        let x: Vec<f64> = (0..784).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let t = forward_sample(&vae.encoder, &x, &mut rng).unwrap();
        let set = build_elbo_components(&vae, &t, &x).unwrap();
        assert_eq!(set.len(), 784 + 200 + 200 + 200 + 200);
        use ConnectionClass::*;
        let class = |name: &str, l: usize| {
            set.blocks.iter().find(|b| b.name == name).unwrap().class(l, 2)
        };
        assert_eq!(class("recon", 0), DirectOnly);
        assert_eq!(class("p1", 0), DirectAndMediated);
        assert_eq!(class("prior", 0), MediatedOnly);
        assert_eq!(class("entropy0", 0), Upstream);
        assert_eq!(class("entropy1", 0), DirectOnly);
        assert_eq!(class("recon", 1), Upstream);
        assert_eq!(class("p1", 1), DirectOnly);
        assert_eq!(class("prior", 1), DirectOnly);
        assert_eq!(class("entropy1", 1), Upstream);
    }

    #[test]
    fn single_layer_has_no_mediated_components() {
        let (vae, t, x) = toy(&[3], 2);
        let set = build_elbo_components(&vae, &t, &x).unwrap();
        assert_eq!(set.count_class(0, ConnectionClass::MediatedOnly), 0);
        assert_eq!(set.count_class(0, ConnectionClass::DirectAndMediated), 0);
    }

    #[test]
    fn total_matches_log_weight_plus_entropy_gap() {
        let (vae, t, x) = toy(&[3, 3], 3);
        let set = build_elbo_components(&vae, &t, &x).unwrap();
        let entropies: f64 = set.blocks.iter().filter(|b| b.kind == ComponentKind::BernoulliEntropy).map(|b| b.total()).sum();
        assert!((set.total() - (vae.log_joint(&x, &t) + entropies)).abs() < 1e-12);
    }

    #[test]
    fn component_examples() {
        let lin = Linear::from_parts(1, 1, vec![0.0], vec![0.0]).unwrap();
        let block = ComponentBlock {
            name: "t".into(),
            kind: ComponentKind::LinearLogProb,
            binding: ParamBinding::Decoder(0),
            input_layer: None,
            output_layer: None,
            input: vec![1.0],
            logits: lin.logits(&[1.0]),
            target: vec![true],
            values: vec![bit_log_prob(0.0, true)],
        };
        assert!((block.values[0] - 0.5f64.ln()).abs() < 1e-15);
        assert!((bernoulli_entropy(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    /// Rebuild the whole set with one latent unit replaced.
    fn pinned_set(vae: &Vae, t: &ForwardTrace, x: &[f64], layer: usize, unit: usize, high: bool) -> FunctionComponentSet {
        let mut h: Vec<Vec<bool>> = t.layers.iter().map(|l| l.high.clone()).collect();
        h[layer][unit] = high;
        let pinned = trace_from_samples(&vae.encoder, x, &h, None).unwrap();
        // Entropy of a layer is a function of its input only, so the pinned
        // unit's own layer keeps its logits.
        build_elbo_components(vae, &pinned, x).unwrap()
    }

    #[test]
    fn counterfactuals_match_pin_and_recompute() {
        for seed in 0..5 {
            let (mut vae, t, x) = toy(&[3, 4, 2], seed);
            vae.prior = vec![0.3, -1.2];
            let set = build_elbo_components(&vae, &t, &x).unwrap();
            for (bi, b) in set.blocks.iter().enumerate() {
                for o in 0..b.values.len() {
                    let cf = component_counterfactuals(&vae, FunctionComponent { block: b, index: o });
                    if let (Some(l), Some((hi, lo))) = (b.input_layer, &cf.inputs) {
                        for i in 0..hi.len() {
                            let rh = pinned_set(&vae, &t, &x, l, i, true).blocks[bi].values[o];
                            let rl = pinned_set(&vae, &t, &x, l, i, false).blocks[bi].values[o];
                            assert!((hi[i] - rh).abs() < 1e-12);
                            assert!((lo[i] - rl).abs() < 1e-12);
                        }
                    }
                    if let (Some(l), Some((hi, lo))) = (b.output_layer, cf.output) {
                        let rh = pinned_set(&vae, &t, &x, l, o, true).blocks[bi].values[o];
                        let rl = pinned_set(&vae, &t, &x, l, o, false).blocks[bi].values[o];
                        assert!((hi - rh).abs() < 1e-12);
                        assert!((lo - rl).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn flip_deltas_agree_with_counterfactuals() {
        let (vae, t, x) = toy(&[3, 4], 9);
        let set = build_elbo_components(&vae, &t, &x).unwrap();
        for b in &set.blocks {
            for layer in 0..2 {
                let realized = &t.layers[layer].high;
                let d = flip_deltas(&vae, b, layer, realized);
                for u in 0..realized.len() {
                    let full = pinned_set(&vae, &t, &x, layer, u, !realized[u]);
                    let other = full.blocks.iter().find(|o| o.name == b.name).unwrap();
                    // Entropy blocks of the flipped unit's children change too
                    // in the full rebuild, exactly as the delta accounts for.
                    let expect = other.total() - b.total();
                    if b.reads(layer) {
                        assert!((d[u] - expect).abs() < 1e-12, "{} {layer} {u}", b.name);
                    } else {
                        assert_eq!(d[u], 0.0);
                    }
                }
            }
        }
    }
}
