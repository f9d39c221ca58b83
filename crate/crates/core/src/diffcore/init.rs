use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_INIT_STDDEV: f64 = 0.05;

/// Samples `N(0, stddev^2)` and redraws anything outside `[-2 stddev, 2 stddev]`.
pub fn truncated_normal<R: Rng + ?Sized>(shape: Vec<usize>, stddev: f64, rng: &mut R) -> Result<Tensor> {
    if !(stddev > 0.0) || !stddev.is_finite() {
        return Err(Error::contract(format!("stddev must be positive, got {stddev}")));
    }
    let normal = Normal::new(0.0, stddev).map_err(|e| Error::contract(e.to_string()))?;
    let bound = 2.0 * stddev;
    let numel = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    while data.len() < numel {
        let x: f64 = normal.sample(rng);
        if x.abs() <= bound {
            data.push(x);
        }
    }
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_truncated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = truncated_normal(vec![100, 50], 0.3, &mut rng).unwrap();
        assert!(t.data().iter().all(|x| x.abs() <= 0.6));
    }

    #[test]
    fn deterministic_for_seed() {
        let a = truncated_normal(vec![8, 8], 0.05, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = truncated_normal(vec![8, 8], 0.05, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_is_centred() {
        let sigma = 1.0;
        let n = 100_000;
        let t = truncated_normal(vec![n], sigma, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mean = t.data().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn rejects_bad_stddev() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(truncated_normal(vec![2], 0.0, &mut rng).is_err());
        assert!(truncated_normal(vec![2], -1.0, &mut rng).is_err());
    }
}
