use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{GradEstimate, LayerGrad};
use crate::math::log_sigmoid;
use crate::netcore::snapshot::{read_blocks, write_blocks, Block, BlockKind};
use crate::netcore::{BernoulliLayer, Encoding, ForwardTrace, Linear, StochasticNet};
use crate::params::ParamVisit;

/// Discrete VAE with `L` latent layers of zero-one Bernoulli units.
///
/// The encoder maps `x → Φ1 → … → ΦL`. The generative side is
/// `p(ΦL) Π p_l(Φl | Φl+1) p_0(x | Φ1)`: `decoder[0]` maps `Φ1` to visible
/// logits and `decoder[l]` maps `Φl+1` to `Φl` logits. `prior` holds the
/// logits of `ΦL`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub encoder: StochasticNet,
    pub decoder: Vec<Linear>,
    pub prior: Vec<f64>,
}

impl Vae {
    pub fn new(encoder: StochasticNet, decoder: Vec<Linear>, prior: Vec<f64>) -> Result<Self> {
        let vae = Vae {
            encoder,
            decoder,
            prior,
        };
        vae.validate()?;
        Ok(vae)
    }

    /// Fan-in uniform weights, zero biases and zero prior logits.
    pub fn init<R: Rng + ?Sized>(n_visible: usize, widths: &[usize], rng: &mut R) -> Result<Self> {
        let encoder = StochasticNet::init(n_visible, widths, Encoding::ZeroOne, None, rng)?;
        let mut decoder = vec![Linear::init_uniform(widths[0], n_visible, rng)];
        for l in 1..widths.len() {
            decoder.push(Linear::init_uniform(widths[l], widths[l - 1], rng));
        }
        let prior = vec![0.0; *widths.last().expect("nonempty widths")];
        Vae::new(encoder, decoder, prior)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.encoder.head.is_some() {
            return Err(Error::config("a VAE encoder has no softmax head"));
        }
        if self.encoder.hidden.iter().any(|l| l.encoding != Encoding::ZeroOne) {
            return Err(Error::config("VAE latent units use the zero-one encoding"));
        }
        let widths = self.encoder.widths();
        if self.decoder.len() != widths.len() {
            return Err(Error::config(format!(
                "{} decoder layers for {} latent layers",
                self.decoder.len(),
                widths.len()
            )));
        }
        for (l, d) in self.decoder.iter().enumerate() {
            d.validate()?;
            let n_out = if l == 0 { self.n_visible() } else { widths[l - 1] };
            if d.n_in != widths[l] || d.n_out != n_out {
                return Err(Error::config(format!(
                    "decoder layer {l} is {}x{}, expected {}x{}",
                    d.n_out, d.n_in, n_out, widths[l]
                )));
            }
        }
        if self.prior.len() != *widths.last().expect("validated") {
            return Err(Error::config("prior width does not match the top latent layer"));
        }
        if self.prior.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("prior logits must be finite"));
        }
        Ok(())
    }

    pub fn n_visible(&self) -> usize {
        self.encoder.context_dim
    }

    pub fn depth(&self) -> usize {
        self.encoder.hidden.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.encoder.widths()
    }

    pub fn latent_units(&self) -> usize {
        self.encoder.hidden_units()
    }

    /// `log p(x, Φ)` for the latent sample held in `trace`.
    pub fn log_joint(&self, x: &[f64], trace: &ForwardTrace) -> f64 {
        let n = self.depth();
        let mut total = bernoulli_log_lik(&self.decoder[0], &trace.layers[0].sample, x);
        for l in 1..n {
            total += bernoulli_log_lik(&self.decoder[l], &trace.layers[l].sample, &trace.layers[l - 1].sample);
        }
        total
            + self
                .prior
                .iter()
                .zip(&trace.layers[n - 1].sample)
                .map(|(&a, &s)| log_sigmoid(if s == 1.0 { a } else { -a }))
                .sum::<f64>()
    }

    /// `log p(x, Φ) − log q(Φ | x)`, the single-sample ELBO integrand.
    pub fn log_weight(&self, x: &[f64], trace: &ForwardTrace) -> f64 {
        self.log_joint(x, trace) - trace.log_prob()
    }
}

/// `Σ_o log p(target_o | input)` for a linear-sigmoid model of zero-one bits.
pub(crate) fn bernoulli_log_lik(linear: &Linear, input: &[f64], target: &[f64]) -> f64 {
    let mut logits = vec![0.0; linear.n_out];
    linear.logits_into(input, &mut logits);
    logits
        .iter()
        .zip(target)
        .map(|(&a, &t)| log_sigmoid(if t == 1.0 { a } else { -a }))
        .sum()
}

impl ParamVisit for Vae {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder.visit(f);
        for d in &self.decoder {
            d.visit(f);
        }
        f(&self.prior);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        for d in &mut self.decoder {
            d.visit_mut(f);
        }
        f(&mut self.prior);
    }
}

/// Gradient for every VAE parameter, in the same layout as [`Vae`].
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrad {
    pub encoder: GradEstimate,
    pub decoder: Vec<LayerGrad>,
    pub prior: Vec<f64>,
}

impl VaeGrad {
    pub fn zeros_like(vae: &Vae) -> Self {
        VaeGrad {
            encoder: GradEstimate::zeros_like(&vae.encoder),
            decoder: vae.decoder.iter().map(LayerGrad::zeros_like).collect(),
            prior: vec![0.0; vae.prior.len()],
        }
    }

    pub fn axpy(&mut self, c: f64, other: &VaeGrad) {
        self.encoder.axpy(c, &other.encoder);
        for (a, b) in self.decoder.iter_mut().zip(&other.decoder) {
            a.axpy(c, b);
        }
        for (a, b) in self.prior.iter_mut().zip(&other.prior) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= c));
    }
}

impl ParamVisit for VaeGrad {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder.visit(f);
        for d in &self.decoder {
            d.visit(f);
        }
        f(&self.prior);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        for d in &mut self.decoder {
            d.visit_mut(f);
        }
        f(&mut self.prior);
    }
}

/// Write encoder, decoder and prior blocks in [`ParamVisit`] order.
pub fn save_vae(vae: &Vae, stem: &Path) -> Result<()> {
    let prior = Linear {
        n_in: 0,
        n_out: vae.prior.len(),
        weights: Vec::new(),
        bias: vae.prior.clone(),
    };
    let mut blocks: Vec<Block<'_>> = vae
        .encoder
        .hidden
        .iter()
        .enumerate()
        .map(|(l, h)| Block {
            name: format!("encoder.{l}"),
            kind: BlockKind::Bernoulli,
            encoding: Some(h.encoding),
            linear: &h.linear,
        })
        .collect();
    blocks.extend(vae.decoder.iter().enumerate().map(|(l, d)| Block {
        name: format!("decoder.{l}"),
        kind: BlockKind::Decoder,
        encoding: None,
        linear: d,
    }));
    blocks.push(Block {
        name: "prior".into(),
        kind: BlockKind::Prior,
        encoding: None,
        linear: &prior,
    });
    write_blocks(stem, Some(vae.n_visible()), &blocks)
}

pub fn load_vae(stem: &Path) -> Result<Vae> {
    let (manifest, linears) = read_blocks(stem)?;
    let n_visible = manifest
        .context_dim
        .ok_or_else(|| Error::config("snapshot sidecar lacks context_dim"))?;
    let mut hidden = Vec::new();
    let mut decoder = Vec::new();
    let mut prior = None;
    for (spec, lin) in manifest.blocks.iter().zip(linears) {
        match spec.kind {
            BlockKind::Bernoulli => {
                let enc = spec
                    .encoding
                    .ok_or_else(|| Error::config(format!("block {:?} lacks an encoding", spec.name)))?;
                hidden.push(BernoulliLayer::new(lin, enc));
            }
            BlockKind::Decoder => decoder.push(lin),
            BlockKind::Prior => prior = Some(lin.bias),
            BlockKind::Softmax => {
                return Err(Error::config(format!("block {:?} is a softmax head, not part of a VAE", spec.name)))
            }
        }
    }
    let prior = prior.ok_or_else(|| Error::config("snapshot has no prior block"))?;
    Vae::new(StochasticNet::new(n_visible, hidden, None)?, decoder, prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn init_shapes_chain() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let vae = Vae::init(6, &[4, 3], &mut rng).unwrap();
        assert_eq!(vae.decoder[0].n_out, 6);
        assert_eq!(vae.decoder[1].n_in, 3);
        assert_eq!(vae.decoder[1].n_out, 4);
        assert_eq!(vae.prior.len(), 3);
        assert_eq!(VaeGrad::zeros_like(&vae).param_count(), vae.param_count());
    }

    #[test]
    fn mismatched_decoder_is_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut vae = Vae::init(6, &[4, 3], &mut rng).unwrap();
        vae.decoder.pop();
        assert!(matches!(vae.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn vae_snapshot_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut vae = Vae::init(5, &[4, 2], &mut rng).unwrap();
        vae.prior = vec![0.25, -1.5];
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("vae");
        save_vae(&vae, &stem).unwrap();
        assert_eq!(load_vae(&stem).unwrap(), vae);
    }
}
