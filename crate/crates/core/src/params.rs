//! Uniform access to parameter and gradient storage.
//!
//! Anything holding trainable values exposes them as an ordered sequence of
//! slices. A model and its gradient must yield congruent sequences, which is
//! what the optimizer relies on.

use crate::netcore::{Linear, StochasticNet};

pub trait ParamVisit {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    /// Overwrite from a flat vector produced by [`ParamVisit::flatten`].
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        assert_eq!(offset, flat.len(), "flat vector does not match the layout");
    }
}

impl ParamVisit for Linear {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weights);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weights);
        f(&mut self.bias);
    }
}

impl ParamVisit for StochasticNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.hidden {
            l.linear.visit(f);
        }
        if let Some(h) = &self.head {
            h.linear.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.hidden {
            l.linear.visit_mut(f);
        }
        if let Some(h) = &mut self.head {
            h.linear.visit_mut(f);
        }
    }
}

impl ParamVisit for Vec<f64> {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self);
    }
}
