//! Small numerical helpers: the standard normal distribution, truncated-normal
//! and inverse-gamma draws, and descriptive statistics over slices.

use libm::erfc;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::erfc_inv;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Beyond this standardized distance from the mean the inverse-CDF route loses
/// precision and rejection sampling takes over.
const INVERSE_CDF_LIMIT: f64 = 4.0;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Log density of `N(mean, variance)` at `y`.
pub fn norm_log_pdf(y: f64, mean: f64, variance: f64) -> f64 {
    let d = y - mean;
    -LN_SQRT_2PI - 0.5 * variance.ln() - 0.5 * d * d / variance
}

/// Natural log of `Φ(x)`, finite for all finite `x`.
pub fn norm_log_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Mills-ratio asymptote; erfc underflows this far out.
        let x2 = x * x;
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `N(0,1)` restricted to `[alpha, ∞)`.
fn std_lower_truncated<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha > INVERSE_CDF_LIMIT {
        // Exponential proposal with the optimal rate; acceptance is at least
        // ~0.98 for alpha > 4.
        let lambda = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
        loop {
            let u: f64 = rng.random();
            let z = alpha - (1.0 - u).ln() / lambda;
            let v: f64 = rng.random();
            let d = z - lambda;
            if v <= (-0.5 * d * d).exp() {
                return z;
            }
        }
    } else if alpha < -INVERSE_CDF_LIMIT {
        // Almost all mass is retained, so plain rejection terminates quickly.
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= alpha {
                return z;
            }
        }
    } else {
        let tail = norm_sf(alpha);
        let u: f64 = rng.random();
        let p = tail * (1.0 - u);
        let z = SQRT_2 * erfc_inv(2.0 * p);
        z.max(alpha)
    }
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Draw from `N(mean, 1)` restricted to `[lower, ∞)`.
pub fn sample_truncated_above<R: Rng + ?Sized>(mean: f64, lower: f64, rng: &mut R) -> f64 {
    let x = mean + std_lower_truncated(lower - mean, rng);
    x.max(lower)
}

/// Draw from `N(mean, 1)` restricted to `(-∞, upper)`.
pub fn sample_truncated_below<R: Rng + ?Sized>(mean: f64, upper: f64, rng: &mut R) -> f64 {
    let x = mean - std_lower_truncated(mean - upper, rng);
    if x >= upper {
        upper.next_down()
    } else {
        x
    }
}

/// Draw from the inverse-gamma distribution with the given shape and rate.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / rate).expect("positive inverse-gamma parameters");
    1.0 / gamma.sample(rng)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Linear-interpolation quantile (R type 7) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// Posterior summary: mean with a central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(draws: &[f64]) -> Self {
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Interval {
            mean: mean(draws),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((norm_sf(1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
        assert!(norm_cdf(-40.0) >= 0.0);
    }

    #[test]
    fn log_cdf_matches_direct_and_asymptote() {
        for x in [-5.0, -1.0, 0.0, 2.0] {
            assert!((norm_log_cdf(x) - norm_cdf(x).ln()).abs() < 1e-10);
        }
        // continuity across the switch point
        let a = norm_log_cdf(-29.999_999);
        let b = norm_log_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-3);
        assert!(norm_log_cdf(-1e3).is_finite());
    }

    #[test]
    fn half_normal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let m: f64 = (0..n)
            .map(|_| sample_truncated_above(0.0, 0.0, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!(
            (m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02,
            "{m}"
        );
    }

    #[test]
    fn far_tail_draws_are_finite_and_on_the_right_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let z = sample_truncated_above(-8.0, 0.0, &mut rng);
            assert!(z.is_finite() && z >= 0.0);
            let w = sample_truncated_below(8.0, 0.0, &mut rng);
            assert!(w.is_finite() && w < 0.0);
            let v = sample_truncated_above(30.0, 0.0, &mut rng);
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn tail_rejection_moments() {
        // E[Z | Z >= a] = φ(a) / (1 - Φ(a)); at a = 5 this is 5.186_503_...
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let m: f64 = (0..n)
            .map(|_| sample_truncated_above(0.0, 5.0, &mut rng))
            .sum::<f64>()
            / n as f64;
        let phi = (-12.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expected = phi / norm_sf(5.0);
        assert!((m - expected).abs() < 0.01, "{m} vs {expected}");
    }

    #[test]
    fn quantiles_type7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        // IG(5, 8) has mean 8 / 4 = 2
        let m: f64 = (0..n)
            .map(|_| sample_inverse_gamma(5.0, 8.0, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((m - 2.0).abs() < 0.03, "{m}");
    }
}
