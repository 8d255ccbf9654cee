use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub epoch: u64,
    /// Mean reward (bandit) or mean ELBO (VAE) over the interval's batches.
    pub train_metric: f64,
    /// Test accuracy (bandit) or mean test bound (VAE).
    pub test_metric: f64,
    /// `ln` of the mean per-parameter gradient variance over the interval.
    pub ln_grad_var: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
}

impl RunMetrics {
    pub fn push(&mut self, row: MetricRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.step < row.step));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(["step", "epoch", "train_metric", "test_metric", "ln_grad_var", "wall_ms"])
                .map_err(csv_err)?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::config(format!("csv flush: {e}")))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::config(format!("csv: {e}"))
}

/// Mean over coordinates of the per-coordinate sample variance (`n − 1`)
/// across the rows of a batch, restricted to the first `prefix` coordinates.
pub fn batch_grad_variance(rows: &[Vec<f64>], prefix: usize) -> f64 {
    let n = rows.len();
    if n < 2 || prefix == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..prefix {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        total += rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>();
    }
    total / ((n - 1) as f64 * prefix as f64)
}

/// Column means of the batch.
pub fn batch_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows.first().map_or(0, Vec::len)];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    let n = rows.len().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Running sums between two log rows.
#[derive(Debug, Clone, Default)]
pub(crate) struct Interval {
    metric_sum: f64,
    metric_count: usize,
    var_sum: f64,
    batches: usize,
}

impl Interval {
    pub(crate) fn add_batch(&mut self, metric_sum: f64, examples: usize, grad_var: f64) {
        self.metric_sum += metric_sum;
        self.metric_count += examples;
        self.var_sum += grad_var;
        self.batches += 1;
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.batches == 0
    }

    /// `(mean train metric, ln mean gradient variance)`, then reset.
    pub(crate) fn take(&mut self) -> (f64, f64) {
        let out = (
            self.metric_sum / self.metric_count.max(1) as f64,
            (self.var_sum / self.batches.max(1) as f64).ln(),
        );
        *self = Interval::default();
        out
    }
}
