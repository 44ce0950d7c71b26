use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::sampler::{PosteriorDraws, Stratum};

use super::LikelySet;

/// Absolute standardized difference `|mean_a - mean_b| / sqrt((var_a + var_b) / 2)`
/// with sample variances. Zero when both samples are constant and equal,
/// infinite when they are constant and differ.
pub fn asd(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input(
            "standardized difference of an empty sample".into(),
        ));
    }
    Ok(asd_from_moments(
        moments(a.iter().copied()),
        moments(b.iter().copied()),
    ))
}

/// `(mean, sample variance)` of `col` within each stratum, `None` when empty.
fn stratum_moments(strata: &[Stratum], col: &[f64]) -> [Option<(f64, f64)>; 3] {
    let mut acc = [(0usize, 0.0, 0.0); 3];
    for (s, &x) in strata.iter().zip(col) {
        let (n, sum, sq) = &mut acc[s.slot()];
        *n += 1;
        *sum += x;
        *sq += x * x;
    }
    acc.map(|(n, sum, sq)| (n > 0).then(|| finish(n, sum, sq)))
}

/// `(mean, sample variance)`.
fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        sum += x;
        sq += x * x;
    }
    finish(n, sum, sq)
}

fn finish(n: usize, sum: f64, sq: f64) -> (f64, f64) {
    let mean = sum / n as f64;
    let var = if n > 1 {
        ((sq - sum * mean) / (n - 1) as f64).max(0.0)
    } else {
        0.0
    };
    (mean, var)
}

fn asd_from_moments((ma, va): (f64, f64), (mb, vb): (f64, f64)) -> f64 {
    let diff = (ma - mb).abs();
    let pooled = ((va + vb) / 2.0).sqrt();
    if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    /// Mean over the likely set.
    pub likely_mean: f64,
    /// Posterior mean of the mean over units imputed `S = 11`.
    pub latent_mean: f64,
    /// Posterior mean ASD between the likely set and the imputed always-survivors.
    pub asd: f64,
    /// Posterior mean of each stratum's mean, indexed by [`Stratum::slot`].
    pub stratum_means: [f64; 3],
    /// Posterior mean of the largest pairwise ASD between the three strata.
    pub max_pairwise_asd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    /// Draws left out of each stratum's averages because the stratum was empty.
    pub empty_draws: [usize; 3],
    /// Draws left out of the pairwise comparison because some stratum was empty.
    pub pairwise_excluded: usize,
    /// Covariates whose ASD came out infinite in some draw.
    pub degenerate: Vec<String>,
}

/// Covariate balance between the likely set and the latent strata. Means are
/// reported on the natural covariate scale; ASDs are scale-free.
pub fn balance_report(
    draws: &PosteriorDraws,
    likely: &LikelySet,
    dataset: &TrialDataset,
) -> Result<BalanceReport> {
    let n = dataset.n_units();
    if draws.n_units != n {
        return Err(Error::Input(
            "draws and dataset have different units".into(),
        ));
    }
    if draws.n_draws() == 0 {
        return Err(Error::Input("no retained draws".into()));
    }
    let x = dataset.covariates();
    let spec = dataset.spec();
    let mut empty_draws = [0usize; 3];
    let mut pairwise_excluded = 0;
    for d in 0..draws.n_draws() {
        let mut seen = [false; 3];
        for s in draws.strata_of(d) {
            seen[s.slot()] = true;
        }
        for k in 0..3 {
            empty_draws[k] += usize::from(!seen[k]);
        }
        pairwise_excluded += usize::from(seen.contains(&false));
    }

    let mut rows = Vec::with_capacity(x.n_cols());
    let mut degenerate = Vec::new();
    for k in 0..x.n_cols() {
        let col = x.column(k);
        let likely_m = moments(likely.units.iter().map(|&i| col[i]));
        let mut latent_sum = 0.0;
        let mut asd_sum = 0.0;
        let mut stratum_sums = [0.0; 3];
        let mut pair_sum = 0.0;
        let mut infinite = false;
        for d in 0..draws.n_draws() {
            let per = stratum_moments(draws.strata_of(d), &col);
            for (sum, m) in stratum_sums.iter_mut().zip(&per) {
                if let Some((mean, _)) = m {
                    *sum += mean;
                }
            }
            // The always-survivor stratum contains the observed ones, so it is never empty.
            let always = per[Stratum::AlwaysSurvivor.slot()].unwrap_or((f64::NAN, f64::NAN));
            latent_sum += always.0;
            let a = asd_from_moments(likely_m, always);
            infinite |= a.is_infinite();
            asd_sum += a;
            if let [Some(p0), Some(p1), Some(p2)] = per {
                let worst = asd_from_moments(p0, p1)
                    .max(asd_from_moments(p0, p2))
                    .max(asd_from_moments(p1, p2));
                infinite |= worst.is_infinite();
                pair_sum += worst;
            }
        }
        let m = draws.n_draws() as f64;
        let natural = |v: f64| spec.to_natural(k, v);
        let mut stratum_means = [f64::NAN; 3];
        for s in 0..3 {
            let kept = draws.n_draws() - empty_draws[s];
            if kept > 0 {
                stratum_means[s] = natural(stratum_sums[s] / kept as f64);
            }
        }
        let pair_kept = draws.n_draws() - pairwise_excluded;
        if infinite {
            degenerate.push(spec.names[k].clone());
        }
        rows.push(BalanceRow {
            covariate: spec.names[k].clone(),
            likely_mean: natural(likely_m.0),
            latent_mean: natural(latent_sum / m),
            asd: asd_sum / m,
            stratum_means,
            max_pairwise_asd: if pair_kept > 0 {
                pair_sum / pair_kept as f64
            } else {
                f64::NAN
            },
        });
    }
    Ok(BalanceReport {
        rows,
        empty_draws,
        pairwise_excluded,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asd_reference_values() {
        assert_eq!(asd(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // Means 0 and 1, both sample variances 1.
        let a = asd(&[-1.0, 0.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-15);
        assert_eq!(asd(&[2.0, 2.0], &[2.0]).unwrap(), 0.0);
        assert_eq!(asd(&[2.0, 2.0], &[3.0]).unwrap(), f64::INFINITY);
        assert!(asd(&[], &[1.0]).is_err());
    }

    #[test]
    fn binary_covariates_use_proportions() {
        // Proportions 0.5 and 0.25 with sample variances 1/3 and 1/4.
        let a = asd(&[0.0, 1.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let want = 0.25 / ((1.0 / 3.0 + 0.25) / 2.0f64).sqrt();
        assert!((a - want).abs() < 1e-12);
    }
}
