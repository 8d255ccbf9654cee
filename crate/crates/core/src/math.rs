//! Scalar helpers shared by every module.

/// Lower clamp for probabilities that end up in a ratio denominator.
pub const PROB_FLOOR: f64 = 1e-7;
/// Upper clamp, `1 - PROB_FLOOR`.
pub const PROB_CEIL: f64 = 1.0 - PROB_FLOOR;

/// Logistic sigmoid evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log σ(x)`, accurate in both tails.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Derivative of the sigmoid expressed through its value.
#[inline]
pub fn sigmoid_slope(p: f64) -> f64 {
    p * (1.0 - p)
}

/// Entropy in nats of a Bernoulli variable with logit `x`.
///
/// Uses `H = softplus(x) - x σ(x)`, which stays finite when the
/// probability saturates.
#[inline]
pub fn bernoulli_entropy(x: f64) -> f64 {
    softplus(x) - x * sigmoid(x)
}

/// d/dx of [`bernoulli_entropy`]: `-x σ(x)(1 - σ(x))`.
#[inline]
pub fn bernoulli_entropy_slope(x: f64) -> f64 {
    -x * sigmoid_slope(sigmoid(x))
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, PROB_CEIL)
}

/// `log Σ exp(xs)` with the usual max shift. Empty input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize the loop.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
