use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hnca_bench::Fixture;
use hnca_core::estimators::{reinforce_grad, HncaPlan};
use hnca_core::fhnca::{build_elbo_components, fhnca_backward_planned, FhncaMode, Vae};
use hnca_core::netcore::forward_sample;
use hnca_core::rng::{example_rng, global_rng, Purpose, Rng};
use hnca_core::GradEstimate;

const WIDTHS: [usize; 3] = [100, 200, 400];
const DEPTH: usize = 2;

fn bandit(c: &mut Criterion) {
    let mut group = c.benchmark_group("bandit");
    for width in WIDTHS {
        let fx = Fixture::new(width, DEPTH, 16, 1).expect("fixture");
        let edges = fx.net.edge_count() as u64;
        group.throughput(Throughput::Elements(edges));

        let mut rng = example_rng(1, Purpose::Sample, 1, width as u64);
        let mut i = 0;
        group.bench_function(BenchmarkId::new("forward", width), |b| {
            b.iter(|| {
                i = (i + 1) % fx.contexts.len();
                black_box(forward_sample(&fx.net, &fx.contexts[i], &mut rng).unwrap())
            })
        });

        let plan = HncaPlan::new(&fx.net);
        let mut grad = GradEstimate::zeros_like(&fx.net);
        group.bench_function(BenchmarkId::new("hnca_backward", width), |b| {
            b.iter(|| {
                i = (i + 1) % fx.traces.len();
                plan.backward_into(&fx.net, &fx.traces[i], 1.0, None, &mut grad).unwrap();
                black_box(&grad);
            })
        });

        group.bench_function(BenchmarkId::new("hnca_plan", width), |b| {
            b.iter(|| black_box(HncaPlan::new(&fx.net)))
        });

        group.bench_function(BenchmarkId::new("reinforce", width), |b| {
            b.iter(|| {
                i = (i + 1) % fx.traces.len();
                black_box(reinforce_grad(&fx.net, &fx.traces[i], 1.0, None).unwrap())
            })
        });
    }
    group.finish();
}

fn vae(c: &mut Criterion) {
    let mut group = c.benchmark_group("vae");
    group.sample_size(20);
    let vae = Vae::init(784, &[200, 200], &mut global_rng(2, Purpose::Init)).expect("vae");
    let mut rng = example_rng(2, Purpose::Binarize, 0, 0);
    let x: Vec<f64> = (0..784).map(|_| rng.random_range(0..2) as f64).collect();
    let plan = HncaPlan::new(&vae.encoder);
    group.bench_function("fhnca_backward", |b| {
        b.iter(|| {
            let t = forward_sample(&vae.encoder, &x, &mut rng).unwrap();
            let set = build_elbo_components(&vae, &t, &x).unwrap();
            black_box(fhnca_backward_planned(&plan, &vae, &t, &set, FhncaMode::Plain, None).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, bandit, vae);
criterion_main!(benches);
