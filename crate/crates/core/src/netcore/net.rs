use rand::Rng;

use super::layer::{BernoulliLayer, Encoding, Linear, SoftmaxLayer};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, sigmoid, softmax_into};

/// Feedforward stack of Bernoulli layers with an optional softmax head.
///
/// Layer 0 reads the context; every later layer reads the samples of the
/// layer below it, and the head reads the top hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticNet {
    pub context_dim: usize,
    pub hidden: Vec<BernoulliLayer>,
    pub head: Option<SoftmaxLayer>,
}

impl StochasticNet {
    pub fn new(
        context_dim: usize,
        hidden: Vec<BernoulliLayer>,
        head: Option<SoftmaxLayer>,
    ) -> Result<Self> {
        let net = StochasticNet {
            context_dim,
            hidden,
            head,
        };
        net.validate()?;
        Ok(net)
    }

    /// Randomly initialized network with the given hidden widths.
    pub fn init<R: Rng + ?Sized>(
        context_dim: usize,
        widths: &[usize],
        encoding: Encoding,
        n_actions: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut n_in = context_dim;
        let mut hidden = Vec::with_capacity(widths.len());
        for &w in widths {
            hidden.push(BernoulliLayer::new(Linear::init_uniform(n_in, w, rng), encoding));
            n_in = w;
        }
        let head = match n_actions {
            Some(a) => Some(SoftmaxLayer::new(Linear::init_uniform(n_in, a, rng))?),
            None => None,
        };
        Self::new(context_dim, hidden, head)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_dim == 0 {
            return Err(Error::config("context dimension must be positive"));
        }
        let mut n_in = self.context_dim;
        for (k, layer) in self.hidden.iter().enumerate() {
            layer.linear.validate()?;
            if layer.n_in() != n_in {
                return Err(Error::config(format!(
                    "hidden layer {k} expects {} inputs but receives {n_in}",
                    layer.n_in()
                )));
            }
            n_in = layer.n_out();
        }
        if let Some(head) = &self.head {
            head.linear.validate()?;
            if head.linear.n_in != n_in {
                return Err(Error::config(format!(
                    "softmax head expects {} inputs but receives {n_in}",
                    head.linear.n_in
                )));
            }
            if head.n_actions() < 2 {
                return Err(Error::config("softmax head needs at least 2 actions"));
            }
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.n_out()).collect()
    }

    /// Number of Bernoulli units.
    pub fn hidden_units(&self) -> usize {
        self.hidden.iter().map(|l| l.n_out()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.hidden.iter().map(|l| l.linear.num_params()).sum::<usize>()
            + self.head.as_ref().map_or(0, |h| h.linear.num_params())
    }

    /// Total number of parent → unit edges, `Σ |pa(Φ)|`.
    pub fn edge_count(&self) -> usize {
        self.hidden.iter().map(|l| l.linear.weights.len()).sum::<usize>()
            + self.head.as_ref().map_or(0, |h| h.linear.weights.len())
    }

    /// Alphabet of the parents feeding hidden layer `k`, or `None` for the
    /// context-fed first layer.
    pub fn parent_encoding(&self, k: usize) -> Option<Encoding> {
        k.checked_sub(1).map(|p| self.hidden[p].encoding)
    }

    fn check_context(&self, context: &[f64]) -> Result<()> {
        if context.len() != self.context_dim {
            return Err(Error::config(format!(
                "context has {} entries, network expects {}",
                context.len(),
                self.context_dim
            )));
        }
        Ok(())
    }
}

/// Everything one hidden layer computed during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input: Vec<f64>,
    pub logits: Vec<f64>,
    /// Probability of the high symbol, `σ(logit)`.
    pub probs: Vec<f64>,
    pub high: Vec<bool>,
    /// The emitted symbols, each in the layer's alphabet.
    pub sample: Vec<f64>,
}

impl LayerTrace {
    /// Probability the unit gave to the symbol it actually emitted.
    #[inline]
    pub fn realized_prob(&self, j: usize) -> f64 {
        if self.high[j] {
            self.probs[j]
        } else {
            1.0 - self.probs[j]
        }
    }

    /// `log π(φ_j | x)` computed from the logit.
    #[inline]
    pub fn realized_log_prob(&self, j: usize) -> f64 {
        let l = self.logits[j];
        if self.high[j] {
            log_sigmoid(l)
        } else {
            log_sigmoid(-l)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub input: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub action: usize,
}

/// Record of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub context: Vec<f64>,
    pub layers: Vec<LayerTrace>,
    pub head: Option<HeadTrace>,
}

impl ForwardTrace {
    /// `log P(all samples | context)`.
    pub fn log_prob(&self) -> f64 {
        let hidden: f64 = self
            .layers
            .iter()
            .map(|t| (0..t.high.len()).map(|j| t.realized_log_prob(j)).sum::<f64>())
            .sum();
        let head = self.head.as_ref().map_or(0.0, |h| {
            let lse = crate::math::log_sum_exp(&h.logits);
            h.logits[h.action] - lse
        });
        hidden + head
    }

    /// Samples of the top hidden layer, or the context when there is none.
    pub fn top_sample(&self) -> &[f64] {
        self.layers.last().map_or(&self.context[..], |t| &t.sample[..])
    }
}

fn layer_pass(
    layer: &BernoulliLayer,
    k: usize,
    input: Vec<f64>,
    mut pick: impl FnMut(usize, f64) -> bool,
) -> Result<LayerTrace> {
    let logits = layer.linear.logits(&input);
    if let Some(j) = logits.iter().position(|l| !l.is_finite()) {
        return Err(Error::numeric(
            format!("hidden layer {k}, unit {j}"),
            format!("logit is {}", logits[j]),
        ));
    }
    let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let high: Vec<bool> = probs.iter().enumerate().map(|(j, &p)| pick(j, p)).collect();
    let sample = high.iter().map(|&h| layer.encoding.value(h)).collect();
    Ok(LayerTrace {
        input,
        logits,
        probs,
        high,
        sample,
    })
}

fn head_pass(head: &SoftmaxLayer, input: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let logits = head.linear.logits(&input);
    if let Some(a) = logits.iter().position(|l| !l.is_finite()) {
        return Err(Error::numeric(
            format!("softmax head, action {a}"),
            format!("logit is {}", logits[a]),
        ));
    }
    let mut probs = vec![0.0; logits.len()];
    softmax_into(&logits, &mut probs);
    Ok((logits, probs))
}

/// Inverse-CDF draw from a categorical distribution.
fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.len() - 1
}

/// Sample every unit of the network for one context.
///
/// Draws exactly one uniform per unit in layer-major, unit-minor order, then
/// one more for the head. A unit emits its high symbol when `u < p`.
pub fn forward_sample<R: Rng + ?Sized>(
    net: &StochasticNet,
    context: &[f64],
    rng: &mut R,
) -> Result<ForwardTrace> {
    net.check_context(context)?;
    let mut layers = Vec::with_capacity(net.hidden.len());
    let mut input = context.to_vec();
    for (k, layer) in net.hidden.iter().enumerate() {
        let trace = layer_pass(layer, k, input, |_, p| rng.random::<f64>() < p)?;
        input = trace.sample.clone();
        layers.push(trace);
    }
    let head = match &net.head {
        Some(h) => {
            let (logits, probs) = head_pass(h, input.clone())?;
            let action = categorical(&probs, rng.random::<f64>());
            Some(HeadTrace {
                input,
                logits,
                probs,
                action,
            })
        }
        None => None,
    };
    Ok(ForwardTrace {
        context: context.to_vec(),
        layers,
        head,
    })
}

/// Evaluate the network with every sample pinned to a given value.
///
/// `high[k][j]` fixes unit `j` of layer `k`; `action` fixes the head. This is
/// the deterministic counterpart of [`forward_sample`] used by enumeration
/// oracles and by tests that need a specific configuration.
pub fn trace_from_samples(
    net: &StochasticNet,
    context: &[f64],
    high: &[Vec<bool>],
    action: Option<usize>,
) -> Result<ForwardTrace> {
    net.check_context(context)?;
    if high.len() != net.hidden.len() {
        return Err(Error::config(format!(
            "{} pinned layers for a network with {}",
            high.len(),
            net.hidden.len()
        )));
    }
    let mut layers = Vec::with_capacity(net.hidden.len());
    let mut input = context.to_vec();
    for (k, layer) in net.hidden.iter().enumerate() {
        if high[k].len() != layer.n_out() {
            return Err(Error::config(format!(
                "layer {k} has {} units but {} pinned values",
                layer.n_out(),
                high[k].len()
            )));
        }
        let trace = layer_pass(layer, k, input, |j, _| high[k][j])?;
        input = trace.sample.clone();
        layers.push(trace);
    }
    let head = match (&net.head, action) {
        (Some(h), Some(a)) => {
            if a >= h.n_actions() {
                return Err(Error::config(format!("action {a} out of range")));
            }
            let (logits, probs) = head_pass(h, input.clone())?;
            Some(HeadTrace {
                input,
                logits,
                probs,
                action: a,
            })
        }
        (None, None) => None,
        (Some(_), None) => return Err(Error::config("network has a head but no action was pinned")),
        (None, Some(_)) => return Err(Error::config("action pinned on a network without a head")),
    };
    Ok(ForwardTrace {
        context: context.to_vec(),
        layers,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{global_rng, Purpose};
    use rand::SeedableRng;

    fn single_unit(theta: Vec<f64>, b: f64, enc: Encoding) -> StochasticNet {
        let n_in = theta.len();
        let lin = Linear::from_parts(n_in, 1, theta, vec![b]).unwrap();
        StochasticNet::new(n_in, vec![BernoulliLayer::new(lin, enc)], None).unwrap()
    }

    #[test]
    fn zero_parameters_give_half_probabilities() {
        let lin = Linear::zeros(3, 4);
        let net = StochasticNet::new(3, vec![BernoulliLayer::new(lin, Encoding::ZeroOne)], None).unwrap();
        let mut rng = global_rng(1, Purpose::Sample);
        let t = forward_sample(&net, &[0.3, -2.0, 9.0], &mut rng).unwrap();
        assert!(t.layers[0].probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn single_unit_logit_and_probability() {
        let net = single_unit(vec![1.0, -2.0], 0.5, Encoding::ZeroOne);
        let mut rng = global_rng(2, Purpose::Sample);
        let t = forward_sample(&net, &[1.0, 0.0], &mut rng).unwrap();
        assert_eq!(t.layers[0].logits[0], 1.5);
        // σ(1.5) from a 30-digit reference evaluation.
        let reference = 0.817_574_476_193_643_659_607_217_178_656_f64;
        assert!((t.layers[0].probs[0] - reference).abs() < 1e-15);
    }

    #[test]
    fn saturated_plus_minus_unit_always_emits_plus_one() {
        let net = single_unit(vec![0.0], 1e6, Encoding::PlusMinusOne);
        let mut rng = global_rng(3, Purpose::Sample);
        for _ in 0..1000 {
            let t = forward_sample(&net, &[1.0], &mut rng).unwrap();
            assert_eq!(t.layers[0].sample[0], 1.0);
        }
    }

    #[test]
    fn traces_chain_inputs_and_stay_in_alphabet() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let net = StochasticNet::init(5, &[4, 3], Encoding::PlusMinusOne, Some(3), &mut rng).unwrap();
        let t = forward_sample(&net, &[1.0, 0.0, 1.0, 1.0, 0.0], &mut rng).unwrap();
        assert_eq!(t.layers[0].input, t.context);
        assert_eq!(t.layers[1].input, t.layers[0].sample);
        assert_eq!(t.head.as_ref().unwrap().input, t.layers[1].sample);
        for lt in &t.layers {
            for (j, &s) in lt.sample.iter().enumerate() {
                assert_eq!(Encoding::PlusMinusOne.classify(s), Some(lt.high[j]));
                assert_eq!(lt.probs[j], sigmoid(lt.logits[j]));
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let mut init = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let net = StochasticNet::init(6, &[8, 8], Encoding::ZeroOne, Some(4), &mut init).unwrap();
        let ctx = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let a = forward_sample(&net, &ctx, &mut global_rng(9, Purpose::Sample)).unwrap();
        let b = forward_sample(&net, &ctx, &mut global_rng(9, Purpose::Sample)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn sampled_frequency_matches_probability() {
        let net = single_unit(vec![0.8, -0.3], 0.1, Encoding::ZeroOne);
        let mut rng = global_rng(6, Purpose::Sample);
        let n = 100_000;
        let mut hits = 0usize;
        let mut p = 0.0;
        for _ in 0..n {
            let t = forward_sample(&net, &[1.0, 1.0], &mut rng).unwrap();
            p = t.layers[0].probs[0];
            hits += t.layers[0].high[0] as usize;
        }
        let freq = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "freq {freq} vs p {p}");
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let net = single_unit(vec![1.0, 1.0], 0.0, Encoding::ZeroOne);
        let err = forward_sample(&net, &[1.0], &mut global_rng(0, Purpose::Sample)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn overflowing_logit_is_a_numeric_error() {
        let net = single_unit(vec![1e308, 1e308], 0.0, Encoding::ZeroOne);
        let err = forward_sample(&net, &[1.0, 1.0], &mut global_rng(0, Purpose::Sample)).unwrap_err();
        match err {
            Error::Numeric { location, .. } => assert!(location.contains("layer 0, unit 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pinned_trace_log_prob_sums_unit_terms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let net = StochasticNet::init(2, &[2], Encoding::ZeroOne, Some(2), &mut rng).unwrap();
        let t = trace_from_samples(&net, &[1.0, 0.0], &[vec![true, false]], Some(1)).unwrap();
        let manual = t.layers[0].probs[0].ln() + (1.0 - t.layers[0].probs[1]).ln()
            + t.head.as_ref().unwrap().probs[1].ln();
        assert!((t.log_prob() - manual).abs() < 1e-12);
    }
}
