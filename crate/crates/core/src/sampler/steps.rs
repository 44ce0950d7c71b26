use rand::Rng;

use crate::data::ObservedGroup;
use crate::error::{Error, Result};
use crate::stats::{
    norm_cdf, norm_log_cdf, norm_log_pdf, norm_sf, sample_inverse_gamma, sample_truncated_above,
    sample_truncated_below,
};

use super::state::{cell_mask, ModelData, SamplerState};
use super::{Cell, ChainConfig, Stratum};

/// `(pi00, pi10, pi11)` for probit means `mz`, `mw`.
pub fn strata_probabilities(mz: f64, mw: f64) -> (f64, f64, f64) {
    let alive = norm_sf(mz);
    (norm_cdf(mz), alive * norm_cdf(mw), alive * norm_sf(mw))
}

/// Step 1: one update of each outcome mean on its current stratum/arm cell.
pub fn update_outcome_means<R: Rng + ?Sized>(
    state: &mut SamplerState,
    data: &ModelData,
    rng: &mut R,
) -> Result<()> {
    for cell in Cell::ALL {
        let mask = cell_mask(data, &state.strata, cell);
        let s2 = state.sigma2[cell.slot()];
        state.outcome[cell.slot()].update(&data.index, &data.y, &mask, s2, rng)?;
    }
    Ok(())
}

/// Step 2: conjugate inverse-gamma draws of the three outcome variances.
pub fn update_variances<R: Rng + ?Sized>(
    state: &mut SamplerState,
    data: &ModelData,
    config: &ChainConfig,
    rng: &mut R,
) {
    for cell in Cell::ALL {
        let fitted = state.outcome[cell.slot()].fitted();
        let (mut n, mut ss) = (0usize, 0.0);
        for i in 0..data.n_units() {
            if Cell::of(state.strata[i], data.treat[i]) == Some(cell) {
                let r = data.y[i] - fitted[i];
                n += 1;
                ss += r * r;
            }
        }
        state.sigma2[cell.slot()] =
            sample_inverse_gamma(config.a0 + 0.5 * n as f64, config.b0 + 0.5 * ss, rng);
    }
}

/// Steps 3 and 4: the `Z` mean on every unit, the `W` mean on units with
/// `S` in {10, 11}.
pub fn update_probit_means<R: Rng + ?Sized>(
    state: &mut SamplerState,
    data: &ModelData,
    rng: &mut R,
) -> Result<()> {
    let n = data.n_units();
    state
        .mz
        .update(&data.index, &state.z, &vec![true; n], 1.0, rng)?;
    let active: Vec<bool> = state.w.iter().map(Option::is_some).collect();
    let response: Vec<f64> = state.w.iter().map(|w| w.unwrap_or(0.0)).collect();
    state.mw.update(&data.index, &response, &active, 1.0, rng)
}

/// Probability of the first of two options given their log weights.
fn first_of_two(unit: usize, a: f64, b: f64) -> Result<f64> {
    let m = a.max(b);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return Err(Error::Numerical {
            unit,
            message: "both candidate strata have zero probability".into(),
        });
    }
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    Ok(ea / (ea + eb))
}

/// Step 5: draw each unit's stratum from its full conditional.
pub fn impute_strata<R: Rng + ?Sized>(
    state: &mut SamplerState,
    data: &ModelData,
    rng: &mut R,
) -> Result<()> {
    let mz = state.mz.fitted();
    let mw = state.mw.fitted();
    let m111 = state.outcome[Cell::Always1.slot()].fitted();
    let m101 = state.outcome[Cell::Protected1.slot()].fitted();
    let s111 = state.sigma2[Cell::Always1.slot()];
    let s101 = state.sigma2[Cell::Protected1.slot()];
    for i in 0..data.n_units() {
        state.strata[i] = match data.groups[i] {
            ObservedGroup::TreatedDied => Stratum::NeverSurvivor,
            ObservedGroup::ControlSurvived => Stratum::AlwaysSurvivor,
            ObservedGroup::ControlDied => {
                let p00 = first_of_two(
                    i,
                    norm_log_cdf(mz[i]),
                    norm_log_cdf(-mz[i]) + norm_log_cdf(mw[i]),
                )?;
                if rng.random::<f64>() < p00 {
                    Stratum::NeverSurvivor
                } else {
                    Stratum::Protected
                }
            }
            ObservedGroup::TreatedSurvived => {
                let y = data.y[i];
                let p10 = first_of_two(
                    i,
                    norm_log_cdf(mw[i]) + norm_log_pdf(y, m101[i], s101),
                    norm_log_cdf(-mw[i]) + norm_log_pdf(y, m111[i], s111),
                )?;
                if rng.random::<f64>() < p10 {
                    Stratum::Protected
                } else {
                    Stratum::AlwaysSurvivor
                }
            }
        };
    }
    Ok(())
}

/// Steps 6 and 7: truncated-normal draws of `Z` and `W` matching the strata.
pub fn sample_latents<R: Rng + ?Sized>(state: &mut SamplerState, data: &ModelData, rng: &mut R) {
    let mz = state.mz.fitted();
    let mw = state.mw.fitted();
    for i in 0..data.n_units() {
        state.z[i] = match state.strata[i] {
            Stratum::NeverSurvivor => sample_truncated_above(mz[i], 0.0, rng),
            _ => sample_truncated_below(mz[i], 0.0, rng),
        };
    }
    for i in 0..data.n_units() {
        state.w[i] = match state.strata[i] {
            Stratum::NeverSurvivor => None,
            Stratum::Protected => Some(sample_truncated_above(mw[i], 0.0, rng)),
            Stratum::AlwaysSurvivor => Some(sample_truncated_below(mw[i], 0.0, rng)),
        };
    }
}

/// Observed-data log-likelihood at the current mean functions and variances,
/// with the strata summed out: each unit contributes the probability of its
/// observed group times the density of its outcome, if any. Outcomes are on
/// the internal scale.
pub fn observed_log_likelihood(state: &SamplerState, data: &ModelData) -> f64 {
    let mz = state.mz.fitted();
    let mw = state.mw.fitted();
    let m = |c: Cell| state.outcome[c.slot()].fitted();
    let (m111, m110, m101) = (m(Cell::Always1), m(Cell::Always0), m(Cell::Protected1));
    let [s111, s110, s101] = state.sigma2;
    let mut total = 0.0;
    for i in 0..data.n_units() {
        let log00 = norm_log_cdf(mz[i]);
        let log_alive = norm_log_cdf(-mz[i]);
        let log10 = log_alive + norm_log_cdf(mw[i]);
        let log11 = log_alive + norm_log_cdf(-mw[i]);
        let y = data.y[i];
        total += match data.groups[i] {
            ObservedGroup::TreatedDied => log00,
            ObservedGroup::ControlSurvived => log11 + norm_log_pdf(y, m110[i], s110),
            ObservedGroup::ControlDied => log_sum_exp(log00, log10),
            ObservedGroup::TreatedSurvived => log_sum_exp(
                log11 + norm_log_pdf(y, m111[i], s111),
                log10 + norm_log_pdf(y, m101[i], s101),
            ),
        };
    }
    total
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// One full sweep of the sampler, steps 1 to 7 in order.
pub fn gibbs_iteration<R: Rng + ?Sized>(
    state: &mut SamplerState,
    data: &ModelData,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<()> {
    update_outcome_means(state, data, rng)?;
    update_variances(state, data, config, rng);
    update_probit_means(state, data, rng)?;
    impute_strata(state, data, rng)?;
    sample_latents(state, data, rng);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_at_zero() {
        assert_eq!(strata_probabilities(0.0, 0.0), (0.5, 0.25, 0.25));
        let (p00, p10, p11) = strata_probabilities(-40.0, 0.3);
        assert!(p00 < 1e-300);
        assert!((p10 + p11 - 1.0).abs() < 1e-15);
        let (a, b, c) = strata_probabilities(0.0, -40.0);
        assert_eq!((a, c), (0.5, 0.5));
        assert!(b < 1e-300);
    }

    #[test]
    fn outlying_outcome_favours_the_central_model() {
        // m101 = 0, m111 = 5, sigma2 = 1, y = 5: density ratio e^-12.5 : 1.
        let p10 = first_of_two(
            0,
            norm_log_cdf(0.0) + norm_log_pdf(5.0, 0.0, 1.0),
            norm_log_cdf(0.0) + norm_log_pdf(5.0, 5.0, 1.0),
        )
        .unwrap();
        let want = (-12.5f64).exp() / (1.0 + (-12.5f64).exp());
        assert!((p10 - want).abs() < 1e-15);
    }

    #[test]
    fn far_tail_ratios_stay_finite() {
        let p = first_of_two(0, -2000.0, -2001.0).unwrap();
        assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert!(first_of_two(7, f64::NEG_INFINITY, f64::NEG_INFINITY).is_err());
    }
}
