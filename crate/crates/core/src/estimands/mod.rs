//! Posterior summaries of the survivor average causal effect: SACE draws,
//! stratum membership, the likely always-survivor set, covariate balance and
//! the heterogeneity metrics built on unit-level CSACE draws.

mod balance;
mod heterogeneity;

pub use balance::{asd, balance_report, BalanceReport, BalanceRow};
pub use heterogeneity::{
    bandwidth, benefit_probabilities, csace_cdf, csace_cdf_grid, csace_density, d_star,
    default_grid, differential_effects, evidence_bands, BenefitReport, DensityEstimate,
    Differential, DifferentialMode, DEFAULT_THRESHOLDS, EVIDENCE_LEVELS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{PosteriorDraws, Stratum};
use crate::stats::{mean, Interval};

/// `m111(X_i) - m110(X_i)` for every retained draw and unit, draw-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CsaceDraws {
    n_units: usize,
    values: Vec<f64>,
}

impl CsaceDraws {
    /// `values[d * n_units + i]` is draw `d` for unit `i`.
    pub fn new(n_units: usize, values: Vec<f64>) -> Result<Self> {
        if n_units == 0 || !values.len().is_multiple_of(n_units) {
            return Err(Error::Input(format!(
                "{} values do not fill whole draws of {n_units} units",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                unit: k % n_units,
                message: "CSACE draw is not finite".into(),
            });
        }
        Ok(CsaceDraws { n_units, values })
    }

    pub fn from_draws(draws: &PosteriorDraws) -> Result<Self> {
        let values = draws
            .m111
            .iter()
            .zip(&draws.m110)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(draws.n_units, values)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_draws(&self) -> usize {
        self.values.len() / self.n_units
    }

    pub fn draw(&self, d: usize) -> &[f64] {
        &self.values[d * self.n_units..(d + 1) * self.n_units]
    }

    pub fn get(&self, d: usize, unit: usize) -> f64 {
        self.values[d * self.n_units + unit]
    }

    /// All draws of one unit.
    pub fn unit(&self, unit: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|d| self.get(d, unit)).collect()
    }

    /// Posterior mean CSACE of every unit.
    pub fn posterior_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_units];
        for d in 0..self.n_draws() {
            for (s, v) in sums.iter_mut().zip(self.draw(d)) {
                *s += v;
            }
        }
        let m = self.n_draws() as f64;
        sums.into_iter().map(|s| s / m).collect()
    }

    /// Per-unit posterior mean with a central 95% interval.
    pub fn unit_intervals(&self) -> Vec<Interval> {
        (0..self.n_units)
            .map(|i| Interval::from_draws(&self.unit(i)))
            .collect()
    }
}

/// SACE draws over the units imputed as always-survivors in each draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaceDraws {
    pub values: Vec<f64>,
    /// Index into the retained draws of each value.
    pub draws: Vec<usize>,
    /// Retained draws with no always-survivor, left out of `values`.
    pub skipped: usize,
}

impl SaceDraws {
    pub fn summary(&self) -> Result<Interval> {
        if self.values.is_empty() {
            return Err(Error::Input("no draw contains an always-survivor".into()));
        }
        Ok(Interval::from_draws(&self.values))
    }
}

pub fn sace_draws(draws: &PosteriorDraws) -> SaceDraws {
    let mut out = SaceDraws {
        values: Vec::with_capacity(draws.n_draws()),
        draws: Vec::with_capacity(draws.n_draws()),
        skipped: 0,
    };
    for d in 0..draws.n_draws() {
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &s) in draws.strata_of(d).iter().enumerate() {
            if s == Stratum::AlwaysSurvivor {
                sum += draws.csace(d, i);
                n += 1;
            }
        }
        if n == 0 {
            out.skipped += 1;
        } else {
            out.values.push(sum / n as f64);
            out.draws.push(d);
        }
    }
    out
}

/// Per-unit posterior stratum frequencies, indexed by [`Stratum::slot`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipPosterior {
    pub probs: Vec<[f64; 3]>,
    /// Mean over units of `P(S = 11)`.
    pub marginal_always: f64,
}

impl MembershipPosterior {
    pub fn n_units(&self) -> usize {
        self.probs.len()
    }

    pub fn always(&self, unit: usize) -> f64 {
        self.probs[unit][Stratum::AlwaysSurvivor.slot()]
    }
}

pub fn membership_posterior(draws: &PosteriorDraws) -> Result<MembershipPosterior> {
    let m = draws.n_draws();
    if m == 0 {
        return Err(Error::Input("no retained draws".into()));
    }
    let mut counts = vec![[0usize; 3]; draws.n_units];
    for d in 0..m {
        for (c, s) in counts.iter_mut().zip(draws.strata_of(d)) {
            c[s.slot()] += 1;
        }
    }
    let probs: Vec<[f64; 3]> = counts
        .iter()
        .map(|c| c.map(|k| k as f64 / m as f64))
        .collect();
    let marginal_always = mean(
        &probs
            .iter()
            .map(|p| p[Stratum::AlwaysSurvivor.slot()])
            .collect::<Vec<_>>(),
    );
    Ok(MembershipPosterior {
        probs,
        marginal_always,
    })
}

/// Default threshold grid 0.50, 0.51, ..., 0.99.
pub fn p_grid() -> Vec<f64> {
    (50..100).map(|k| k as f64 / 100.0).collect()
}

/// Threshold on the grid whose likely set has the relative size closest to
/// the marginal always-survivor proportion; ties go to the larger threshold.
pub fn choose_p(membership: &MembershipPosterior, grid: &[f64]) -> Result<f64> {
    let n = membership.n_units() as f64;
    let mut best: Option<(f64, f64)> = None;
    for &p in grid {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("threshold {p} is outside (0, 1]")));
        }
        let size = (0..membership.n_units())
            .filter(|&i| membership.always(i) >= p)
            .count();
        let gap = (size as f64 / n - membership.marginal_always).abs();
        match best {
            Some((_, g)) if gap > g => {}
            Some((q, g)) if gap == g && q > p => {}
            _ => best = Some((p, gap)),
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::Config("empty threshold grid".into()))
}

/// Likely always-survivors: units whose posterior probability of `S = 11`
/// is at least `p`. Observed always-survivors have probability 1 and are
/// always included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelySet {
    pub p: f64,
    pub units: Vec<usize>,
}

impl LikelySet {
    pub fn build(membership: &MembershipPosterior, p: f64) -> Result<Self> {
        let units: Vec<usize> = (0..membership.n_units())
            .filter(|&i| membership.always(i) >= p)
            .collect();
        if units.is_empty() {
            return Err(Error::EmptyLikelySet(format!(
                "no unit has always-survivor probability >= {p}"
            )));
        }
        Ok(LikelySet { p, units })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn mask(&self, n_units: usize) -> Vec<bool> {
        let mut mask = vec![false; n_units];
        for &i in &self.units {
            mask[i] = true;
        }
        mask
    }
}

/// Per-draw average CSACE over the likely set.
pub fn likely_sace_draws(csace: &CsaceDraws, likely: &LikelySet) -> Vec<f64> {
    let n = likely.len() as f64;
    (0..csace.n_draws())
        .map(|d| {
            let row = csace.draw(d);
            likely.units.iter().map(|&i| row[i]).sum::<f64>() / n
        })
        .collect()
}

/// The likely-set average of posterior-mean CSACE and the posterior mean of
/// the likely-set SACE. Equal up to rounding by linearity.
pub fn likely_set_means(csace: &CsaceDraws, likely: &LikelySet) -> (f64, f64) {
    let means = csace.posterior_means();
    let of_means = likely.units.iter().map(|&i| means[i]).sum::<f64>() / likely.len() as f64;
    (of_means, mean(&likely_sace_draws(csace, likely)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn membership(p11: &[f64]) -> MembershipPosterior {
        let probs: Vec<[f64; 3]> = p11.iter().map(|&p| [1.0 - p, 0.0, p]).collect();
        let marginal_always = mean(p11);
        MembershipPosterior {
            probs,
            marginal_always,
        }
    }

    #[test]
    fn choose_p_ties_go_to_the_largest_threshold() {
        let m = membership(&[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(choose_p(&m, &p_grid()).unwrap(), 0.99);
    }

    #[test]
    fn choose_p_snaps_to_the_largest_admitting_threshold() {
        // Target 3/4 = 0.75 needs exactly one of the two ambiguous units.
        let mut m = membership(&[1.0, 1.0, 0.85, 0.75]);
        m.marginal_always = 0.75;
        let p = choose_p(&m, &p_grid()).unwrap();
        assert_eq!(p, 0.85);
        assert_eq!(LikelySet::build(&m, p).unwrap().units, vec![0, 1, 2]);
    }

    #[test]
    fn empty_likely_set_is_an_error() {
        let m = membership(&[0.2, 0.3]);
        assert!(matches!(
            LikelySet::build(&m, 0.5),
            Err(Error::EmptyLikelySet(_))
        ));
    }

    #[test]
    fn csace_draws_reject_ragged_input() {
        assert!(CsaceDraws::new(3, vec![0.0; 7]).is_err());
        assert!(CsaceDraws::new(2, vec![0.0, f64::NAN]).is_err());
        let c = CsaceDraws::new(2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(c.n_draws(), 2);
        assert_eq!(c.posterior_means(), vec![2.0, 4.0]);
        assert_eq!(c.unit(1), vec![2.0, 6.0]);
    }
}
