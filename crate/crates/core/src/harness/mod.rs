//! Experiment drivers: IDX data, dynamic binarization, ADAM, the
//! contextual-bandit and VAE training loops, the multi-sample bound and
//! backward-pass timing.

mod adam;
mod bandit;
pub mod bench;
mod binarize;
mod bound;
mod idx;
mod metrics;
mod vae;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bandit::{bandit_train, test_accuracy, BanditConfig, BanditEstimator, BanditRun, N_ACTIONS};
pub use bench::{bench_timing, BenchConfig, BenchReport, BenchRow};
pub use binarize::{binarize_example, binarize_with, dynamic_binarize};
pub use bound::multisample_bound;
pub use idx::{load_idx, parse_idx, write_idx, Dataset, IdxArray, Split, IMAGES_MAGIC, LABELS_MAGIC};
pub use metrics::{batch_grad_variance, batch_mean, MetricRow, RunMetrics};
pub use vae::{test_bound, vae_example_estimate, vae_train, vae_train_from, VaeConfig, VaeEstimator, VaeRun};
