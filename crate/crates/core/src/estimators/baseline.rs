use serde::{Deserialize, Serialize};

pub const DEFAULT_DISCOUNT: f64 = 0.99;

/// Exponential moving average of a reward signal.
///
/// The first update adopts the observed value outright. Before any update
/// the baseline reads as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub value: f64,
    pub discount: f64,
    pub initialized: bool,
}

impl BaselineState {
    pub fn new(discount: f64) -> Self {
        BaselineState {
            value: 0.0,
            discount,
            initialized: false,
        }
    }

    /// A baseline pinned at `value`, useful in tests.
    pub fn fixed(value: f64) -> Self {
        BaselineState {
            value,
            discount: DEFAULT_DISCOUNT,
            initialized: true,
        }
    }

    #[inline]
    pub fn current(&self) -> f64 {
        if self.initialized {
            self.value
        } else {
            0.0
        }
    }

    pub fn update(&mut self, r: f64) {
        *self = baseline_update(*self, r);
    }
}

impl Default for BaselineState {
    fn default() -> Self {
        BaselineState::new(DEFAULT_DISCOUNT)
    }
}

pub fn baseline_update(state: BaselineState, r: f64) -> BaselineState {
    debug_assert!(r.is_finite());
    let value = if state.initialized {
        state.discount * state.value + (1.0 - state.discount) * r
    } else {
        r
    };
    BaselineState {
        value,
        discount: state.discount,
        initialized: true,
    }
}

/// `R − b`, treating a missing baseline as zero.
#[inline]
pub(crate) fn centered(r: f64, baseline: Option<&BaselineState>) -> f64 {
    r - baseline.map_or(0.0, BaselineState::current)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_update_adopts_reward() {
        let s = baseline_update(BaselineState::new(0.99), 1.0);
        assert_eq!(s.value, 1.0);
        assert!(s.initialized);
    }

    #[test]
    fn one_step_recursion() {
        let s = baseline_update(BaselineState::fixed(0.0), 1.0);
        assert!((s.value - 0.01).abs() < 1e-15);
    }

    #[test]
    fn constant_stream_approaches_value_monotonically() {
        let mut s = baseline_update(BaselineState::new(0.9), 0.0);
        let mut last = s.value;
        for _ in 0..500 {
            s.update(3.0);
            assert!(s.value >= last);
            last = s.value;
        }
        assert!((s.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn uninitialized_reads_zero() {
        let s = BaselineState { value: 5.0, discount: 0.99, initialized: false };
        assert_eq!(s.current(), 0.0);
    }
}
