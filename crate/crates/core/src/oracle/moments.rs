use serde::Serialize;

/// Running per-coordinate mean and variance (Welford).
#[derive(Debug, Clone)]
pub struct Moments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Moments {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample dimension changed");
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance (`n − 1` denominator); zero below two samples.
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        let d = (self.n - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Outcome of comparing an estimator against an exact gradient.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub n_samples: u64,
    pub exact_grad: Vec<f64>,
    pub estimator_mean: Vec<f64>,
    pub estimator_var: Vec<f64>,
    pub std_err: Vec<f64>,
    /// `max |mean − exact| / SE` over parameters with nonzero SE.
    pub max_z: f64,
    /// Tolerance multiplier used for [`OracleReport::pass`].
    pub z_threshold: f64,
    pub pass: bool,
}

/// Absolute slack for parameters whose estimator is (nearly) deterministic.
pub const ABS_FLOOR: f64 = 1e-9;

impl OracleReport {
    pub fn new(name: impl Into<String>, exact: Vec<f64>, moments: &Moments, z_threshold: f64) -> Self {
        let mean = moments.mean().to_vec();
        let se = moments.std_err();
        let mut max_z: f64 = 0.0;
        let mut pass = true;
        for ((&m, &e), &s) in mean.iter().zip(&exact).zip(&se) {
            let err = (m - e).abs();
            if err > z_threshold * s + ABS_FLOOR * (1.0 + e.abs()) {
                pass = false;
            }
            if s > 0.0 {
                max_z = max_z.max(err / s);
            }
        }
        OracleReport {
            name: name.into(),
            n_samples: moments.count(),
            exact_grad: exact,
            estimator_mean: mean,
            estimator_var: moments.variance(),
            std_err: se,
            max_z,
            z_threshold,
            pass,
        }
    }
}

/// Paired variance comparison of two estimators sharing every random draw.
///
/// With the exact mean `μ` known, `d = (a − μ)² − (b − μ)²` has expectation
/// `Var(a) − Var(b)` per coordinate, and its own sample mean comes with a
/// standard error.
#[derive(Debug, Clone)]
pub struct PairedVariance {
    exact: Vec<f64>,
    a: Moments,
    b: Moments,
    sq_a: Moments,
    sq_b: Moments,
    diff: Moments,
}

impl PairedVariance {
    pub fn new(exact: Vec<f64>) -> Self {
        let d = exact.len();
        PairedVariance {
            exact,
            a: Moments::new(d),
            b: Moments::new(d),
            sq_a: Moments::new(d),
            sq_b: Moments::new(d),
            diff: Moments::new(d),
        }
    }

    pub fn push(&mut self, a: &[f64], b: &[f64]) {
        let sa: Vec<f64> = a.iter().zip(&self.exact).map(|(x, m)| (x - m).powi(2)).collect();
        let sb: Vec<f64> = b.iter().zip(&self.exact).map(|(x, m)| (x - m).powi(2)).collect();
        let d: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x - y).collect();
        self.a.push(a);
        self.b.push(b);
        self.sq_a.push(&sa);
        self.sq_b.push(&sb);
        self.diff.push(&d);
    }

    pub fn report(&self, name: impl Into<String>, slack_se: f64) -> PairedReport {
        let var_a = self.sq_a.mean().to_vec();
        let var_b = self.sq_b.mean().to_vec();
        let diff_mean = self.diff.mean().to_vec();
        let diff_se = self.diff.std_err();
        let ordered = diff_mean
            .iter()
            .zip(&diff_se)
            .all(|(&m, &s)| m >= -slack_se * s - ABS_FLOOR);
        let mean_a = var_a.iter().sum::<f64>() / var_a.len() as f64;
        let mean_b = var_b.iter().sum::<f64>() / var_b.len() as f64;
        PairedReport {
            name: name.into(),
            n_samples: self.diff.count(),
            var_a,
            var_b,
            diff_mean,
            diff_se,
            mean_var_a: mean_a,
            mean_var_b: mean_b,
            elementwise_ordered: ordered,
            slack_se,
            mean_a: self.a.mean().to_vec(),
            mean_b: self.b.mean().to_vec(),
            hidden_params: self.exact.len(),
        }
    }
}

/// Result of a [`PairedVariance`] run. `a` is the reference estimator and
/// `b` the one expected to have lower variance.
#[derive(Debug, Clone, Serialize)]
pub struct PairedReport {
    pub name: String,
    pub n_samples: u64,
    pub var_a: Vec<f64>,
    pub var_b: Vec<f64>,
    pub diff_mean: Vec<f64>,
    pub diff_se: Vec<f64>,
    pub mean_var_a: f64,
    pub mean_var_b: f64,
    /// `Var(b) ≤ Var(a) + slack·SE` on every coordinate.
    pub elementwise_ordered: bool,
    pub slack_se: f64,
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    /// The leading coordinates that belong to hidden (or encoder) units,
    /// where the two estimators differ.
    pub hidden_params: usize,
}

impl PairedReport {
    /// `1 − mean Var(b) / mean Var(a)`.
    pub fn mean_reduction(&self) -> f64 {
        1.0 - self.mean_var_b / self.mean_var_a
    }

    /// [`PairedReport::mean_reduction`] restricted to hidden-unit parameters.
    pub fn hidden_mean_reduction(&self) -> f64 {
        let h = self.hidden_params;
        let a: f64 = self.var_a[..h].iter().sum();
        let b: f64 = self.var_b[..h].iter().sum();
        1.0 - b / a
    }
}
