use super::idx::Dataset;
use crate::rng::{example_rng, Purpose, Rng, StreamRng};

/// Draw one binary pixel per intensity: 1 with probability `intensity/255`.
///
/// Exactly one uniform is consumed per pixel, so the rest of the stream is
/// free for later draws.
pub fn binarize_with<R: Rng + ?Sized>(pixels: &[u8], rng: &mut R) -> Vec<f64> {
    pixels
        .iter()
        .map(|&p| {
            let u: f64 = rng.random();
            if u * 255.0 < p as f64 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Binarization of example `index` in `epoch`, from its own stream.
pub fn binarize_example(pixels: &[u8], seed: u64, epoch: u64, index: u64) -> Vec<f64> {
    let mut rng: StreamRng = example_rng(seed, Purpose::Binarize, epoch, index);
    binarize_with(pixels, &mut rng)
}

/// Binary contexts for the listed examples of `data`.
pub fn dynamic_binarize(data: &Dataset, indices: &[usize], epoch: u64, seed: u64) -> Vec<Vec<f64>> {
    indices
        .iter()
        .map(|&i| binarize_example(data.pixels(i), seed, epoch, i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::idx::Split;

    #[test]
    fn endpoints_are_deterministic() {
        for index in 0..50 {
            let x = binarize_example(&[0, 255, 0, 255], 3, 1, index);
            assert_eq!(x, vec![0.0, 1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn mid_intensity_frequency() {
        let n = 100_000;
        let ones: f64 = (0..n).map(|i| binarize_example(&[128], 9, 0, i)[0]).sum();
        let p = 128.0 / 255.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ones / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn same_seed_and_epoch_repeat() {
        let data = Dataset::new((0..=255u8).cycle().take(784 * 3).collect(), vec![1, 2, 3], 28, 28, Split::Train).unwrap();
        let a = dynamic_binarize(&data, &[0, 2], 4, 11);
        assert_eq!(a, dynamic_binarize(&data, &[0, 2], 4, 11));
        assert_ne!(a, dynamic_binarize(&data, &[0, 2], 5, 11));
        assert_eq!(a[1], dynamic_binarize(&data, &[2], 4, 11)[0]);
    }
}
