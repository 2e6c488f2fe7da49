use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;

/// Constant used for every bias at initialization.
pub const BIAS_INIT: f64 = 0.01;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer), so
/// independent streams can be derived without sharing generator state.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fan-in and fan-out of a weight shape. For 3-D conv filters
/// `[window, in, out]` the window multiplies both.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [i, o] => (*i, *o),
        [k, i, o] => (k * i, k * o),
        _ => {
            let field: usize = shape[..shape.len() - 2].iter().product();
            (field * shape[shape.len() - 2], field * shape[shape.len() - 1])
        }
    }
}

/// Xavier (Glorot) normal: i.i.d. N(0, 2 / (fan_in + fan_out)).
pub fn xavier_normal(shape: &[usize], rng: &mut Rng) -> Tensor {
    let (fan_in, fan_out) = fans(shape);
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

pub fn bias(len: usize) -> Tensor {
    Tensor::filled(&[len], BIAS_INIT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_sample_std() {
        let mut rng = seeded(11);
        let t = xavier_normal(&[100, 100], &mut rng);
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = (1.0f64 / 100.0).sqrt();
        assert!((var.sqrt() - target).abs() < 0.1 * target);
    }

    #[test]
    fn xavier_is_seeded() {
        let a = xavier_normal(&[7, 5], &mut seeded(3));
        let b = xavier_normal(&[7, 5], &mut seeded(3));
        assert_eq!(a, b);
    }

    #[test]
    fn bias_is_constant() {
        assert!(bias(9).data().iter().all(|&b| b == 0.01));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
