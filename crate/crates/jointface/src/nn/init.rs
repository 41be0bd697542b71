//! Weight initialization.

use crate::tensor::Tensor;
use crate::SeedRng;

/// Kaiming-style fan-in scaled Gaussian init, `std = sqrt(2 / fan_in)`.
/// Stands in for loading pretrained weights, which do not exist at this
/// scale.
pub fn kaiming(shape: &[usize], fan_in: usize, rng: &mut SeedRng) -> Tensor {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    Tensor::randn(shape, std, rng).with_grad()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn kaiming_scale_tracks_fan_in() {
        let mut rng = SeedRng::seed_from_u64(0);
        let t = kaiming(&[64, 128], 128, &mut rng);
        let data = t.to_vec();
        let var: f64 = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
        let expect = 2.0 / 128.0;
        assert!((var - expect).abs() < expect * 0.2, "var {var} vs {expect}");
        assert!(t.requires_grad());
    }
}
