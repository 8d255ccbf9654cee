//! The HNCA backward pass.
//!
//! Each hidden unit replaces its sampled score with the expectation of the
//! score given its Markov blanket. The weights are the counterfactual child
//! likelihood ratios `q_φ / q̄`, where `q_φ` is the product over children of
//! each child's probability of its realized sample with the unit pinned to
//! `φ`.
//!
//! [`hnca_backward_reference`] builds the full counterfactual matrices and is
//! kept as the readable version. [`HncaPlan`] is the production path: pinning
//! a parent to its realized value changes nothing, so only the flipped entry
//! of each edge is needed, and with `E = exp(span·θ)` tabulated once per
//! parameter snapshot the flipped child probability is `1 / (1 + a·E^{±1})`
//! with `a = exp(−s·l)` shared by the whole row. That leaves a multiply-add,
//! a clamp and a multiply per edge.

use super::baseline::{centered, BaselineState};
use super::grad::{GradEstimate, LayerGrad};
use super::messages::{bernoulli_messages, softmax_output_backward};
use super::reinforce::{check_trace, softmax_signal};
use crate::error::{Error, Result};
use crate::math::{clamp_prob, log_sum_exp, sigmoid_slope, PROB_CEIL, PROB_FLOOR};
use crate::netcore::{ForwardTrace, HeadTrace, LayerTrace, Linear, SoftmaxLayer, StochasticNet};

/// Largest exponent fed to `exp` when tabulating; beyond it every
/// probability involved is pinned by the clamp anyway.
const EXP_LIMIT: f64 = 700.0;
/// Rows multiplied together before folding the running product into a log.
/// Each factor lies in `[1, 1e7]`, so 32 of them stay far from overflow.
const FOLD_EVERY: usize = 32;

/// `(q1/q̄, q0/q̄)` for a unit with high-symbol probability `p`, given the log
/// child products under each pin. The shared max keeps both terms finite.
pub fn hnca_rho(p: f64, log_q1: f64, log_q0: f64) -> (f64, f64) {
    let m = log_q1.max(log_q0);
    let q1 = (log_q1 - m).exp();
    let q0 = (log_q0 - m).exp();
    let pc = clamp_prob(p);
    let qbar = pc * q1 + (1.0 - pc) * q0;
    (q1 / qbar, q0 / qbar)
}

/// Per-unit HNCA signal on the logit, `σ′(l)·(q1 − q0)/q̄·(R − b)`, for a
/// layer whose children reported `log_ratio[j] = Σ_c log(q_flip / q_real)`.
pub(crate) fn hnca_signal(
    t: &LayerTrace,
    k: usize,
    log_ratio: &[f64],
    centered: f64,
) -> Result<Vec<f64>> {
    t.probs
        .iter()
        .zip(&t.high)
        .zip(log_ratio)
        .enumerate()
        .map(|(j, ((&p, &h), &r))| {
            let (lq1, lq0) = if h { (0.0, r) } else { (r, 0.0) };
            let (w1, w0) = hnca_rho(p, lq1, lq0);
            let s = sigmoid_slope(p) * (w1 - w0) * centered;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::numeric(
                    format!("hidden layer {k}, unit {j}"),
                    "q̄ underflowed after log-space stabilization",
                ))
            }
        })
        .collect()
}

/// Flipped-edge factors for one Bernoulli layer: `E = exp(span·θ)` and its
/// reciprocal, stored parent-major (`[i][j]`) so that one parent's children
/// are contiguous.
#[derive(Debug, Clone)]
struct FlipTable {
    n_out: usize,
    e: Vec<f64>,
    e_inv: Vec<f64>,
}

impl FlipTable {
    fn new(linear: &Linear, span: f64) -> Self {
        let (n_in, n_out) = (linear.n_in, linear.n_out);
        let mut e = vec![0.0; n_in * n_out];
        let mut e_inv = vec![0.0; n_in * n_out];
        for j in 0..n_out {
            for (i, &w) in linear.row(j).iter().enumerate() {
                let v = (span * w).clamp(-EXP_LIMIT, EXP_LIMIT).exp();
                e[i * n_out + j] = v;
                e_inv[i * n_out + j] = 1.0 / v;
            }
        }
        FlipTable { n_out, e, e_inv }
    }

    fn parent(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.n_out..(i + 1) * self.n_out;
        (&self.e[r.clone()], &self.e_inv[r])
    }
}

/// Precomputed tables for a frozen parameter snapshot. Valid until the
/// parameters change; build one per minibatch.
#[derive(Debug, Clone)]
pub struct HncaPlan {
    tables: Vec<Option<FlipTable>>,
}

impl HncaPlan {
    pub fn new(net: &StochasticNet) -> Self {
        let tables = net
            .hidden
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                net.parent_encoding(k)
                    .map(|enc| FlipTable::new(&layer.linear, enc.span()))
            })
            .collect();
        HncaPlan { tables }
    }

    /// HNCA estimate for one trace. The network must be the one the plan was
    /// built from.
    pub fn backward(
        &self,
        net: &StochasticNet,
        trace: &ForwardTrace,
        reward: f64,
        baseline: Option<&BaselineState>,
    ) -> Result<GradEstimate> {
        let mut out = GradEstimate::zeros_like(net);
        self.backward_into(net, trace, reward, baseline, &mut out)?;
        Ok(out)
    }

    /// [`HncaPlan::backward`] writing into an existing gradient laid out
    /// like `net`. Every entry of `out` is overwritten.
    pub fn backward_into(
        &self,
        net: &StochasticNet,
        trace: &ForwardTrace,
        reward: f64,
        baseline: Option<&BaselineState>,
        out: &mut GradEstimate,
    ) -> Result<()> {
        check_trace(net, trace)?;
        let (head, head_trace) = match (&net.head, &trace.head) {
            (Some(h), Some(t)) => (h, t),
            _ => return Err(Error::config("HNCA needs a softmax head")),
        };
        debug_assert_eq!(self.tables.len(), net.hidden.len());
        let out_head = match &mut out.head {
            Some(g) if out.layers.len() == net.hidden.len() => g,
            _ => return Err(Error::config("gradient buffer does not match the network")),
        };
        let c = centered(reward, baseline);
        out_head.assign_outer(&softmax_signal(head_trace, c), &head_trace.input);
        let n = net.hidden.len();
        let top = net.hidden.last().expect("validated nets have a hidden layer");
        let mut log_ratio = head_log_ratio(head, head_trace, &trace.layers[n - 1].high, top.encoding.span());
        for k in (0..n).rev() {
            let t = &trace.layers[k];
            let signal = hnca_signal(t, k, &log_ratio, c)?;
            out.layers[k].assign_outer(&signal, &t.input);
            if k > 0 {
                log_ratio = self.child_log_ratio(net, k, t, &trace.layers[k - 1].high);
            }
        }
        Ok(())
    }

    /// Log child ratios for the parents of hidden layer `k`, computed from
    /// that layer's realized samples.
    pub(crate) fn child_log_ratio(
        &self,
        net: &StochasticNet,
        k: usize,
        child: &LayerTrace,
        parent_high: &[bool],
    ) -> Vec<f64> {
        let table = self.tables[k].as_ref().expect("hidden parents have a table");
        flip_log_ratio(&net.hidden[k].linear, table, child, parent_high)
    }
}

/// Independent running products in [`flip_log_product`].
const LANES: usize = 4;

/// `Σ_j ln clamp(1 + x_j·p_j + y_j·q_j)`, where at most one of `x_j`, `y_j`
/// is nonzero.
fn flip_log_product(x: &[f64], y: &[f64], p: &[f64], q: &[f64]) -> f64 {
    // Clamping P_flip to [floor, ceil] is clamping 1 + a·T to this range.
    let (f_min, f_max) = (1.0 / PROB_CEIL, 1.0 / PROB_FLOOR);
    let factor = |x: f64, y: f64, p: f64, q: f64| (1.0 + x * p + y * q).clamp(f_min, f_max);
    let mut acc = [1.0; LANES];
    let mut log = 0.0;
    let mut rounds = 0;
    let (xc, yc, pc, qc) = (
        x.chunks_exact(LANES),
        y.chunks_exact(LANES),
        p.chunks_exact(LANES),
        q.chunks_exact(LANES),
    );
    let tail = (xc.remainder(), yc.remainder(), pc.remainder(), qc.remainder());
    for (((x, y), p), q) in xc.zip(yc).zip(pc).zip(qc) {
        for l in 0..LANES {
            acc[l] *= factor(x[l], y[l], p[l], q[l]);
        }
        rounds += 1;
        if rounds == FOLD_EVERY {
            log += acc.iter().map(|a| a.ln()).sum::<f64>();
            acc = [1.0; LANES];
            rounds = 0;
        }
    }
    for (((&x, &y), &p), &q) in tail.0.iter().zip(tail.1).zip(tail.2).zip(tail.3) {
        acc[0] *= factor(x, y, p, q);
    }
    log + acc.iter().map(|a| a.ln()).sum::<f64>()
}

/// `Σ_c log(q_c(flipped parent i) / q_c(realized))` for every parent `i`.
fn flip_log_ratio(
    linear: &Linear,
    table: &FlipTable,
    child: &LayerTrace,
    parent_high: &[bool],
) -> Vec<f64> {
    let n_out = linear.n_out;
    // With `a = exp(−s·l)`, the flipped child probability is 1/(1 + a·T).
    // T is the reciprocal table entry when the child is high and the parent
    // flips up, or the child is low and the parent flips down.
    let mut a_high = vec![0.0; n_out];
    let mut a_low = vec![0.0; n_out];
    let mut real_log = 0.0;
    for (j, (&l, &h)) in child.logits.iter().zip(&child.high).enumerate() {
        let s = if h { 1.0 } else { -1.0 };
        let a = (-s * l).clamp(-EXP_LIMIT, EXP_LIMIT).exp();
        if h {
            a_high[j] = a;
        } else {
            a_low[j] = a;
        }
        real_log += clamp_prob(child.realized_prob(j)).ln();
    }
    parent_high
        .iter()
        .enumerate()
        .map(|(i, &up)| {
            let (e, e_inv) = table.parent(i);
            let (x, y) = if up { (&a_low, &a_high) } else { (&a_high, &a_low) };
            -flip_log_product(x, y, e_inv, e) - real_log
        })
        .collect()
}

/// Log ratio of the realized action's probability with each parent flipped
/// to its probability as realized.
fn head_log_ratio(head: &SoftmaxLayer, t: &HeadTrace, parent_high: &[bool], span: f64) -> Vec<f64> {
    let n_in = head.linear.n_in;
    let n_actions = head.n_actions();
    let log_real = clamp_prob(t.probs[t.action]).ln();
    let mut col = vec![0.0; n_actions];
    (0..n_in)
        .map(|i| {
            let d = if parent_high[i] { -span } else { span };
            for (a, c) in col.iter_mut().enumerate() {
                *c = t.logits[a] + head.linear.weight(a, i) * d;
            }
            let lp = col[t.action] - log_sum_exp(&col);
            clamp_prob(lp.exp()).ln() - log_real
        })
        .collect()
}

/// HNCA estimate for one trace. Builds a fresh [`HncaPlan`]; when many traces
/// share one parameter snapshot, build the plan once instead.
pub fn hnca_backward(
    net: &StochasticNet,
    trace: &ForwardTrace,
    reward: f64,
    baseline: Option<&BaselineState>,
) -> Result<GradEstimate> {
    HncaPlan::new(net).backward(net, trace, reward, baseline)
}

/// Same estimate as [`hnca_backward`], computed from the explicit
/// counterfactual matrices of every layer.
pub fn hnca_backward_reference(
    net: &StochasticNet,
    trace: &ForwardTrace,
    reward: f64,
    baseline: Option<&BaselineState>,
) -> Result<GradEstimate> {
    check_trace(net, trace)?;
    let (head, head_trace) = match (&net.head, &trace.head) {
        (Some(h), Some(t)) => (h, t),
        _ => return Err(Error::config("HNCA needs a softmax head")),
    };
    let c = centered(reward, baseline);
    let n = net.hidden.len();
    let (head_grad, mut msgs) =
        softmax_output_backward(head, head_trace, net.hidden[n - 1].encoding, reward, baseline);
    let mut layers = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let t = &trace.layers[k];
        let (log_hi, log_lo) = msgs.log_products();
        let signal: Vec<f64> = (0..t.probs.len())
            .map(|j| {
                let (w1, w0) = hnca_rho(t.probs[j], log_hi[j], log_lo[j]);
                sigmoid_slope(t.probs[j]) * (w1 - w0) * c
            })
            .collect();
        if signal.iter().any(|s| !s.is_finite()) {
            return Err(Error::numeric(format!("hidden layer {k}"), "non-finite HNCA signal"));
        }
        layers.push(LayerGrad::outer(&signal, &t.input));
        if k > 0 {
            msgs = bernoulli_messages(&net.hidden[k], t, net.hidden[k - 1].encoding);
        }
    }
    layers.reverse();
    Ok(GradEstimate {
        layers,
        head: Some(head_grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::reinforce_grad;
    use crate::netcore::{forward_sample, trace_from_samples, BernoulliLayer, Encoding};
    use crate::params::ParamVisit;
    use rand::SeedableRng;

    fn close(a: &GradEstimate, b: &GradEstimate, tol: f64) -> bool {
        a.flatten()
            .iter()
            .zip(b.flatten())
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn fused_matches_reference_on_random_nets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for &enc in &[Encoding::PlusMinusOne, Encoding::ZeroOne] {
            for widths in [vec![3], vec![5, 4], vec![40, 70, 33]] {
                let mut net = StochasticNet::init(6, &widths, enc, Some(4), &mut rng).unwrap();
                // Larger weights exercise the clamps.
                net.visit_mut(&mut |s| s.iter_mut().for_each(|w| *w *= 3.0));
                let plan = HncaPlan::new(&net);
                for _ in 0..5 {
                    let t = forward_sample(&net, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0], &mut rng).unwrap();
                    let b = BaselineState::fixed(0.3);
                    let fast = plan.backward(&net, &t, 1.0, Some(&b)).unwrap();
                    let slow = hnca_backward_reference(&net, &t, 1.0, Some(&b)).unwrap();
                    assert!(close(&fast, &slow, 1e-9), "{widths:?} {enc:?}");
                }
            }
        }
    }

    #[test]
    fn insensitive_children_give_zero_hidden_gradient() {
        let hidden = BernoulliLayer::new(
            Linear::from_parts(2, 2, vec![0.4, -0.3, 0.9, 0.2], vec![0.1, -0.2]).unwrap(),
            Encoding::PlusMinusOne,
        );
        let head = SoftmaxLayer::new(Linear::from_parts(2, 3, vec![0.0; 6], vec![0.5, 0.0, -0.5]).unwrap()).unwrap();
        let net = StochasticNet::new(2, vec![hidden], Some(head)).unwrap();
        let t = trace_from_samples(&net, &[1.0, 0.0], &[vec![true, false]], Some(0)).unwrap();
        let g = hnca_backward(&net, &t, 1.0, None).unwrap();
        assert!(g.layers[0].weights.iter().chain(&g.layers[0].bias).all(|&v| v == 0.0));
        let r = reinforce_grad(&net, &t, 1.0, None).unwrap();
        assert!(r.layers[0].bias.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn missing_head_is_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let net = StochasticNet::init(2, &[2], Encoding::ZeroOne, None, &mut rng).unwrap();
        let t = forward_sample(&net, &[1.0, 1.0], &mut rng).unwrap();
        assert!(matches!(hnca_backward(&net, &t, 1.0, None), Err(Error::Config(_))));
    }

    #[test]
    fn rho_is_stable_for_large_log_gaps() {
        let (w1, w0) = hnca_rho(0.5, 0.0, -2000.0);
        assert!((w1 - 2.0).abs() < 1e-12);
        assert_eq!(w0, 0.0);
    }
}
