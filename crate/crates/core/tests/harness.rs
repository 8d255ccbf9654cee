use hnca_core::fhnca::{load_vae, save_vae, Vae};
use hnca_core::harness::{
    bandit_train, load_idx, multisample_bound, write_idx, BanditConfig, BanditEstimator, Dataset,
    IdxArray, Split, IMAGES_MAGIC,
};
use hnca_core::netcore::snapshot::{load_net, save_net};
use hnca_core::rng::{global_rng, Purpose};
use hnca_core::{Encoding, ParamVisit, StochasticNet};

fn tiny_dataset(n: usize, split: Split) -> Dataset {
    let images: Vec<u8> = (0..n * 16).map(|i| ((i * 37) % 256) as u8).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    Dataset::new(images, labels, 4, 4, split).unwrap()
}

#[test]
fn idx_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("images.idx");
    let a = IdxArray {
        dims: vec![3, 2, 2],
        data: (0..12).collect(),
    };
    write_idx(&a, &path).unwrap();
    let b = load_idx(&path).unwrap();
    assert_eq!(a.dims, b.dims);
    assert_eq!(a.data, b.data);
    assert_eq!(b.magic(), IMAGES_MAGIC);
}

#[test]
fn truncated_idx_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.idx");
    let mut bytes = IdxArray {
        dims: vec![2, 2, 2],
        data: vec![1; 8],
    }
    .encode();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, bytes).unwrap();
    let err = load_idx(&path).unwrap_err().to_string();
    assert!(err.contains("truncated"), "{err}");
}

#[test]
fn snapshots_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = global_rng(3, Purpose::Init);
    let net = StochasticNet::init(6, &[4, 3], Encoding::PlusMinusOne, Some(10), &mut rng).unwrap();
    save_net(&net, &dir.path().join("net")).unwrap();
    assert_eq!(load_net(&dir.path().join("net")).unwrap().flatten(), net.flatten());

    let vae = Vae::init(6, &[3, 2], &mut rng).unwrap();
    save_vae(&vae, &dir.path().join("vae")).unwrap();
    assert_eq!(load_vae(&dir.path().join("vae")).unwrap().flatten(), vae.flatten());
}

#[test]
fn bandit_training_is_reproducible() {
    let train = tiny_dataset(40, Split::Train);
    let test = tiny_dataset(20, Split::Test);
    let cfg = BanditConfig {
        widths: vec![8],
        estimator: BanditEstimator::HncaB,
        batch_size: 10,
        epochs: 2,
        seed: 4,
        ..BanditConfig::default()
    };
    let a = bandit_train(&cfg, &train, &test).unwrap();
    let b = bandit_train(&cfg, &train, &test).unwrap();
    assert_eq!(a.metrics.to_csv().unwrap(), b.metrics.to_csv().unwrap());
    assert_eq!(a.net.flatten(), b.net.flatten());
}

#[test]
fn bound_tightens_with_more_samples() {
    let mut rng = global_rng(5, Purpose::Init);
    let vae = Vae::init(4, &[3], &mut rng).unwrap();
    let x = [1.0, 0.0, 1.0, 1.0];
    let mean = |k: usize| {
        let mut rng = global_rng(6 + k as u64, Purpose::Bound);
        (0..4000).map(|_| multisample_bound(&vae, &x, k, &mut rng).unwrap()).sum::<f64>() / 4000.0
    };
    let (one, four, sixteen) = (mean(1), mean(4), mean(16));
    assert!(one < four && four < sixteen, "{one} {four} {sixteen}");
}
