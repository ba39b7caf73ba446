//! Sample statistics shared by the estimators and tests.

use serde::{Deserialize, Serialize};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and `s / sqrt(n)` with the unbiased sample variance. Summation
    /// runs in slice order, so results are reproducible bit for bit.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }

    /// `(1 / c) mean(values)`, for weighted estimators with constant weight.
    pub fn scaled(self, c: f64) -> Self {
        Self { mean: self.mean / c, se: self.se / c, n: self.n }
    }

    /// Whether the two `z`-sigma intervals intersect.
    pub fn overlaps(&self, other: &Estimate, z: f64) -> bool {
        (self.mean - other.mean).abs() <= z * (self.se + other.se)
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `values` and
/// Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let x = x.clamp(0.0, 1.0);
        let above = (i + 1) as f64 / n - x;
        let below = x - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Empirical CDF points `(x_(i), i / n)` in sorted order.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn estimate_of_constant() {
        let e = Estimate::of(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = Estimate::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3
        assert!((e.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_of_perfect_grid() {
        let n = 1000;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!((ks_uniform(&v) - 0.5 / n as f64).abs() < 1e-12);
        assert!((ks_uniform(&[0.0; 10]) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ks_bounded(v in prop::collection::vec(0.0f64..1.0, 1..200)) {
            let d = ks_uniform(&v);
            prop_assert!(d >= 0.5 / v.len() as f64 - 1e-12 && d <= 1.0);
        }

        #[test]
        fn ecdf_is_monotone(v in prop::collection::vec(-5.0f64..5.0, 1..100)) {
            let e = ecdf(&v);
            prop_assert!(e.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(e.last().unwrap().1, 1.0);
        }
    }
}
