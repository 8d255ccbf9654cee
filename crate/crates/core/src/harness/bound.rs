use crate::error::{Error, Result};
use crate::fhnca::Vae;
use crate::math::log_sum_exp;
use crate::netcore::forward_sample;
use crate::rng::Rng;

/// `log (1/K) Σ_k p(x, φ_k) / q(φ_k | x)` with `φ_k ~ q(· | x)`.
pub fn multisample_bound<R: Rng + ?Sized>(vae: &Vae, x: &[f64], k: usize, rng: &mut R) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("the multi-sample bound needs at least one sample"));
    }
    let mut logw = Vec::with_capacity(k);
    for _ in 0..k {
        let t = forward_sample(&vae.encoder, x, rng)?;
        logw.push(vae.log_weight(x, &t));
    }
    Ok(log_sum_exp(&logw) - (k as f64).ln())
}
