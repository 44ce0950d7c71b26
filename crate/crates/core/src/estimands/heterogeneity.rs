use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sample_sd, Interval};

use super::{likely_sace_draws, CsaceDraws, LikelySet};

/// Default benefit thresholds for the `q_i` tabulation.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.99, 0.95, 0.9, 0.8];

/// `D*` levels reported as evidence of heterogeneity.
pub const EVIDENCE_LEVELS: [f64; 3] = [0.9, 0.8, 0.7];

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn pooled_sorted(csace: &CsaceDraws, likely: &LikelySet) -> Vec<f64> {
    let mut all = Vec::with_capacity(csace.n_draws() * likely.len());
    for d in 0..csace.n_draws() {
        let row = csace.draw(d);
        all.extend(likely.units.iter().map(|&i| row[i]));
    }
    all.sort_unstable_by(f64::total_cmp);
    all
}

/// `H(u)`: average over likely units of the posterior probability that the
/// unit's CSACE is at most `u`.
pub fn csace_cdf(csace: &CsaceDraws, likely: &LikelySet, u: f64) -> f64 {
    let mut below = 0usize;
    for d in 0..csace.n_draws() {
        let row = csace.draw(d);
        below += likely.units.iter().filter(|&&i| row[i] <= u).count();
    }
    below as f64 / (csace.n_draws() * likely.len()) as f64
}

/// [`csace_cdf`] at every point of `grid`.
pub fn csace_cdf_grid(csace: &CsaceDraws, likely: &LikelySet, grid: &[f64]) -> Vec<f64> {
    let all = pooled_sorted(csace, likely);
    let total = all.len() as f64;
    grid.iter()
        .map(|&u| all.partition_point(|&v| v <= u) as f64 / total)
        .collect()
}

/// Kernel bandwidth `0.9 min(sigma, iqr) / (1.34 n^(1/5))`.
pub fn bandwidth(sigma: f64, iqr: f64, n: usize) -> f64 {
    0.9 * sigma.min(iqr) / (1.34 * (n as f64).powf(0.2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Posterior means of the draw-wise standard deviation and IQR of CSACE
    /// over the likely set.
    pub sigma: f64,
    pub iqr: f64,
    /// Set when the bandwidth is not positive: all mass is then placed on the
    /// grid points nearest to the draws.
    pub spike: bool,
}

/// Posterior means of the draw-wise standard deviation and inter-quartile
/// range of CSACE over the likely set.
fn spread(csace: &CsaceDraws, likely: &LikelySet) -> (f64, f64) {
    let (mut sd, mut iqr) = (0.0, 0.0);
    let mut values = Vec::with_capacity(likely.len());
    for d in 0..csace.n_draws() {
        let row = csace.draw(d);
        values.clear();
        values.extend(likely.units.iter().map(|&i| row[i]));
        sd += sample_sd(&values);
        values.sort_unstable_by(f64::total_cmp);
        iqr += quantile_sorted(&values, 0.75) - quantile_sorted(&values, 0.25);
    }
    let m = csace.n_draws() as f64;
    (sd / m, iqr / m)
}

/// Evenly spaced grid covering every likely-unit draw with `pad` to spare on
/// each side.
pub fn default_grid(csace: &CsaceDraws, likely: &LikelySet, pad: f64, n_points: usize) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for d in 0..csace.n_draws() {
        let row = csace.draw(d);
        for &i in &likely.units {
            lo = lo.min(row[i]);
            hi = hi.max(row[i]);
        }
    }
    let (lo, hi) = (lo - pad, hi + pad);
    if n_points < 2 || hi <= lo {
        return vec![lo.max(hi); n_points.max(1)];
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    (0..n_points).map(|k| lo + step * k as f64).collect()
}

/// Gaussian-kernel posterior density of CSACE over the likely set. Without a
/// grid, 512 points spanning the draws plus four bandwidths are used.
pub fn csace_density(
    csace: &CsaceDraws,
    likely: &LikelySet,
    grid: Option<&[f64]>,
) -> DensityEstimate {
    let (sigma, iqr) = spread(csace, likely);
    let lambda = bandwidth(sigma, iqr, likely.len());
    let spike = !(lambda > 0.0 && lambda.is_finite());
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(csace, likely, if spike { 1.0 } else { 4.0 * lambda }, 512),
    };
    let all = pooled_sorted(csace, likely);
    let total = all.len() as f64;
    let density = if spike {
        spike_density(&all, &grid)
    } else {
        let reach = 9.0 * lambda;
        grid.par_iter()
            .map(|&u| {
                let lo = all.partition_point(|&v| v < u - reach);
                let hi = all.partition_point(|&v| v <= u + reach);
                let sum: f64 = all[lo..hi]
                    .iter()
                    .map(|&v| {
                        let z = (u - v) / lambda;
                        (-0.5 * z * z).exp()
                    })
                    .sum();
                sum / (total * lambda * SQRT_2PI)
            })
            .collect()
    };
    DensityEstimate {
        grid,
        density,
        bandwidth: lambda,
        sigma,
        iqr,
        spike,
    }
}

/// Point masses on the nearest grid points, scaled by the trapezoid weights
/// so the result integrates to one.
fn spike_density(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut density = vec![0.0; grid.len()];
    if grid.len() < 2 {
        return density;
    }
    let weight = |k: usize| {
        let left = if k > 0 { grid[k] - grid[k - 1] } else { 0.0 };
        let right = if k + 1 < grid.len() {
            grid[k + 1] - grid[k]
        } else {
            0.0
        };
        0.5 * (left + right)
    };
    for &v in values {
        let k = grid.partition_point(|&g| g < v).min(grid.len() - 1);
        let k = if k > 0 && (v - grid[k - 1]).abs() <= (grid[k] - v).abs() {
            k - 1
        } else {
            k
        };
        density[k] += 1.0 / (values.len() as f64 * weight(k));
    }
    density
}

/// How `D_i` compares each CSACE draw with the likely-set average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferentialMode {
    /// Against the likely-set average of the same draw.
    #[default]
    PerDraw,
    /// Against the posterior mean of the likely-set average.
    PosteriorMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Differential {
    pub d: f64,
    pub d_star: f64,
}

/// `D* = |2D - 1|` from the count of draws at or below the reference, exact
/// at the usual fractions (19 of 20 gives 0.9).
pub fn d_star(below: usize, n_draws: usize) -> f64 {
    (2 * below).abs_diff(n_draws) as f64 / n_draws as f64
}

/// `(D_i, D*_i)` for every unit of the dataset.
pub fn differential_effects(
    csace: &CsaceDraws,
    likely: &LikelySet,
    mode: DifferentialMode,
) -> Vec<Differential> {
    let m = csace.n_draws();
    let averages = likely_sace_draws(csace, likely);
    let fixed = averages.iter().sum::<f64>() / m as f64;
    let mut below = vec![0usize; csace.n_units()];
    for (d, &avg) in averages.iter().enumerate() {
        let reference = match mode {
            DifferentialMode::PerDraw => avg,
            DifferentialMode::PosteriorMean => fixed,
        };
        for (b, &v) in below.iter_mut().zip(csace.draw(d)) {
            *b += usize::from(v <= reference);
        }
    }
    below
        .into_iter()
        .map(|b| Differential {
            d: b as f64 / m as f64,
            d_star: d_star(b, m),
        })
        .collect()
}

/// Fraction of likely units with `D*` strictly above each level.
pub fn evidence_bands(
    effects: &[Differential],
    likely: &LikelySet,
    levels: &[f64],
) -> Vec<(f64, f64)> {
    levels
        .iter()
        .map(|&level| {
            let k = likely
                .units
                .iter()
                .filter(|&&i| effects[i].d_star > level)
                .count();
            (level, k as f64 / likely.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenefitReport {
    /// Posterior probability of a negative CSACE, for every unit.
    pub q: Vec<f64>,
    /// Per-draw fraction of likely units with a negative CSACE.
    pub q_draws: Vec<f64>,
    pub q_summary: Interval,
    /// `(threshold, fraction of likely units with q_i above it)`.
    pub tabulation: Vec<(f64, f64)>,
}

pub fn benefit_probabilities(
    csace: &CsaceDraws,
    likely: &LikelySet,
    thresholds: &[f64],
) -> Result<BenefitReport> {
    let m = csace.n_draws();
    if m == 0 {
        return Err(Error::Input("no retained draws".into()));
    }
    let mut negative = vec![0usize; csace.n_units()];
    let mut q_draws = Vec::with_capacity(m);
    for d in 0..m {
        let row = csace.draw(d);
        for (c, &v) in negative.iter_mut().zip(row) {
            *c += usize::from(v < 0.0);
        }
        let k = likely.units.iter().filter(|&&i| row[i] < 0.0).count();
        q_draws.push(k as f64 / likely.len() as f64);
    }
    let q: Vec<f64> = negative.iter().map(|&c| c as f64 / m as f64).collect();
    let tabulation = thresholds
        .iter()
        .map(|&t| {
            let k = likely.units.iter().filter(|&&i| q[i] > t).count();
            (t, k as f64 / likely.len() as f64)
        })
        .collect();
    Ok(BenefitReport {
        q_summary: Interval::from_draws(&q_draws),
        q,
        q_draws,
        tabulation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn everyone(n: usize) -> LikelySet {
        LikelySet {
            p: 0.5,
            units: (0..n).collect(),
        }
    }

    #[test]
    fn cdf_by_enumeration() {
        // Unit 0 draws {-1, -1}, unit 1 draws {1, 1}.
        let c = CsaceDraws::new(2, vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let all = everyone(2);
        assert_eq!(csace_cdf(&c, &all, 0.0), 0.5);
        assert_eq!(csace_cdf(&c, &all, -2.0), 0.0);
        assert_eq!(csace_cdf(&c, &all, f64::INFINITY), 1.0);
        assert_eq!(csace_cdf(&c, &all, 1.0), 1.0);
        assert_eq!(
            csace_cdf_grid(&c, &all, &[-2.0, 0.0, 1.0]),
            vec![0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn bandwidth_reference() {
        let want = 1.35 / 2.68;
        assert!((bandwidth(2.0, 1.5, 32) - want).abs() < 1e-12);
        assert!((bandwidth(1.0, 3.0, 1) - 0.9 / 1.34).abs() < 1e-15);
    }

    #[test]
    fn d_star_is_exact_from_counts() {
        assert_eq!(d_star(10, 20), 0.0);
        assert_eq!(d_star(19, 20), 0.9);
        assert_eq!(d_star(1, 20), 0.9);
        assert_eq!(d_star(0, 7), 1.0);
    }

    #[test]
    fn all_negative_draws_mean_certain_benefit() {
        let c = CsaceDraws::new(3, vec![-1.0, -2.0, -0.5, -3.0, -0.1, -7.0]).unwrap();
        let r = benefit_probabilities(&c, &everyone(3), &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(r.q, vec![1.0; 3]);
        assert_eq!(r.q_draws, vec![1.0; 2]);
        assert!(r.tabulation.iter().all(|&(_, f)| f == 1.0));
    }

    #[test]
    fn constant_draws_fall_back_to_spikes() {
        let c = CsaceDraws::new(2, vec![0.5; 6]).unwrap();
        let est = csace_density(&c, &everyone(2), None);
        assert!(est.spike);
        let step = est.grid[1] - est.grid[0];
        let integral: f64 = est.density.iter().sum::<f64>() * step
            - 0.5 * step * (est.density[0] + est.density[est.density.len() - 1]);
        assert!((integral - 1.0).abs() < 1e-9);
    }
}
