use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bart::{BartConfig, SplitIndex};
use crate::data::{ObservedGroup, TrialDataset};
use crate::error::{Error, Result};
use crate::parametric::design_matrix;
use crate::stats::{
    norm_quantile, sample_truncated_above, sample_truncated_below, sample_variance,
};

use super::glm::probit_glm;
use super::mean::{MeanFunction, MeanSnapshot};
use super::steps::{update_outcome_means, update_variances};
use super::{Cell, ChainConfig, ModelKind, Stratum};

/// Affine map of the observed outcomes onto `[-0.5, 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScale {
    pub mid: f64,
    pub range: f64,
}

impl OutcomeScale {
    pub fn from_outcomes(ys: &[f64]) -> Self {
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if ys.is_empty() {
            return OutcomeScale {
                mid: 0.0,
                range: 1.0,
            };
        }
        OutcomeScale {
            mid: 0.5 * (lo + hi),
            range: hi - lo,
        }
    }

    pub fn to_internal(&self, y: f64) -> f64 {
        if self.range > 0.0 {
            (y - self.mid) / self.range
        } else {
            0.0
        }
    }

    pub fn to_natural(&self, m: f64) -> f64 {
        self.mid + self.range * m
    }

    pub fn variance_to_natural(&self, s2: f64) -> f64 {
        self.range * self.range * s2
    }
}

/// Dataset quantities the sampler reads every iteration.
#[derive(Clone, Debug)]
pub struct ModelData {
    pub(crate) treat: Vec<bool>,
    pub(crate) groups: Vec<ObservedGroup>,
    /// Outcomes on the internal scale; 0 where undefined.
    pub(crate) y: Vec<f64>,
    pub(crate) scale: OutcomeScale,
    pub(crate) index: SplitIndex,
    /// Constant centres of the `Z` and `W` forests.
    pub(crate) probit_offsets: [f64; 2],
}

impl ModelData {
    pub fn new(dataset: &TrialDataset) -> Result<Self> {
        if dataset.n_units() == 0 {
            return Err(Error::Input("dataset has no units".into()));
        }
        let scale = OutcomeScale::from_outcomes(&dataset.observed_outcomes());
        let treat = dataset.treat().to_vec();
        let groups: Vec<ObservedGroup> = (0..dataset.n_units()).map(|i| dataset.group(i)).collect();
        Ok(ModelData {
            probit_offsets: probit_offsets(&treat, &groups),
            treat,
            groups,
            y: dataset
                .outcome()
                .iter()
                .map(|y| y.map_or(0.0, |v| scale.to_internal(v)))
                .collect(),
            scale,
            index: SplitIndex::new(dataset.covariates()),
        })
    }

    pub fn n_units(&self) -> usize {
        self.treat.len()
    }

    pub fn scale(&self) -> OutcomeScale {
        self.scale
    }

    pub fn index(&self) -> &SplitIndex {
        &self.index
    }

    /// Offsets of the `Z` and `W` forests.
    pub fn probit_offsets(&self) -> [f64; 2] {
        self.probit_offsets
    }
}

/// Survival rates in the treated and control arms, 0.5 for an empty arm.
fn arm_survival(treat: &[bool], groups: &[ObservedGroup]) -> (f64, f64) {
    let rate = |arm: bool| {
        let (mut n, mut d) = (0usize, 0usize);
        for (t, g) in treat.iter().zip(groups) {
            if *t == arm {
                n += 1;
                if matches!(
                    g,
                    ObservedGroup::TreatedSurvived | ObservedGroup::ControlSurvived
                ) {
                    d += 1;
                }
            }
        }
        if n == 0 {
            0.5
        } else {
            d as f64 / n as f64
        }
    };
    (rate(true), rate(false))
}

/// `Phi^-1(P(S = 00))` and `Phi^-1(P(S = 10 | S != 00))` from the arm survival
/// rates, with the probabilities kept in `[0.02, 0.98]`.
fn probit_offsets(treat: &[bool], groups: &[ObservedGroup]) -> [f64; 2] {
    let (s1, s0) = arm_survival(treat, groups);
    let p00 = 1.0 - s1;
    let p10 = if s1 > 0.0 { (s1 - s0) / s1 } else { 0.5 };
    [p00, p10].map(|p| norm_quantile(p.clamp(0.02, 0.98)))
}

/// Current values of every unknown in the mixture.
#[derive(Clone, Debug)]
pub struct SamplerState {
    pub(crate) strata: Vec<Stratum>,
    pub(crate) z: Vec<f64>,
    pub(crate) w: Vec<Option<f64>>,
    pub(crate) mz: MeanFunction,
    pub(crate) mw: MeanFunction,
    /// Outcome means indexed by `Cell::slot`.
    pub(crate) outcome: [MeanFunction; 3],
    /// Outcome variances on the internal scale, indexed by `Cell::slot`.
    pub(crate) sigma2: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub strata: Vec<Stratum>,
    pub z: Vec<f64>,
    pub w: Vec<Option<f64>>,
    pub mz: MeanSnapshot,
    pub mw: MeanSnapshot,
    pub outcome: Vec<MeanSnapshot>,
    pub sigma2: [f64; 3],
}

impl SamplerState {
    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// `W` for units with `S` in {10, 11}; `None` for never-survivors.
    pub fn w(&self) -> &[Option<f64>] {
        &self.w
    }

    pub fn mz(&self) -> &MeanFunction {
        &self.mz
    }

    pub fn mw(&self) -> &MeanFunction {
        &self.mw
    }

    pub fn outcome_mean(&self, cell: Cell) -> &MeanFunction {
        &self.outcome[cell.slot()]
    }

    /// Internal-scale variance of an outcome cell.
    pub fn sigma2(&self, cell: Cell) -> f64 {
        self.sigma2[cell.slot()]
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            strata: self.strata.clone(),
            z: self.z.clone(),
            w: self.w.clone(),
            mz: self.mz.snapshot(),
            mw: self.mw.snapshot(),
            outcome: self.outcome.iter().map(MeanFunction::snapshot).collect(),
            sigma2: self.sigma2,
        }
    }

    pub fn restore(
        snapshot: &StateSnapshot,
        data: &ModelData,
        config: &ChainConfig,
    ) -> Result<Self> {
        let n = data.n_units();
        if snapshot.strata.len() != n || snapshot.z.len() != n || snapshot.w.len() != n {
            return Err(Error::Structural(format!(
                "snapshot covers {} units, dataset has {n}",
                snapshot.strata.len()
            )));
        }
        if snapshot.outcome.len() != 3 {
            return Err(Error::Structural(
                "snapshot must hold three outcome means".into(),
            ));
        }
        let b = &config.bart;
        let lin = &config.linear;
        let idx = &data.index;
        Ok(SamplerState {
            strata: snapshot.strata.clone(),
            z: snapshot.z.clone(),
            w: snapshot.w.clone(),
            mz: MeanFunction::restore(&snapshot.mz, idx, &b.z, lin)?,
            mw: MeanFunction::restore(&snapshot.mw, idx, &b.w, lin)?,
            outcome: [
                MeanFunction::restore(&snapshot.outcome[0], idx, &b.y111, lin)?,
                MeanFunction::restore(&snapshot.outcome[1], idx, &b.y110, lin)?,
                MeanFunction::restore(&snapshot.outcome[2], idx, &b.y101, lin)?,
            ],
            sigma2: snapshot.sigma2,
        })
    }
}

fn fresh_mean(
    data: &ModelData,
    config: &ChainConfig,
    bart: &BartConfig,
    offset: f64,
    coefficients: Option<Vec<f64>>,
) -> Result<MeanFunction> {
    match config.model {
        ModelKind::Bart => Ok(MeanFunction::empty_forest(&data.index, bart, offset)),
        ModelKind::Parametric => MeanFunction::linear(&data.index, &config.linear, coefficients),
    }
}

/// Probabilities used to randomize the ambiguous groups: `P(S=11)` for
/// treated survivors and `P(S=10)` for control deaths, both set from the
/// arm-specific survival rates (which identify the stratum shares under
/// monotonicity) and kept away from 0 and 1.
fn initial_shares(data: &ModelData) -> (f64, f64) {
    let (s1, s0) = arm_survival(&data.treat, &data.groups);
    let p11 = if s1 > 0.0 { s0 / s1 } else { 0.5 };
    let p10 = if s0 < 1.0 {
        (s1 - s0) / (1.0 - s0)
    } else {
        0.5
    };
    (p11.clamp(0.1, 0.9), p10.clamp(0.1, 0.9))
}

fn random_strata<R: Rng + ?Sized>(data: &ModelData, rng: &mut R) -> Vec<Stratum> {
    let (p11, p10) = initial_shares(data);
    data.groups
        .iter()
        .map(|g| match g {
            ObservedGroup::TreatedDied => Stratum::NeverSurvivor,
            ObservedGroup::ControlSurvived => Stratum::AlwaysSurvivor,
            ObservedGroup::TreatedSurvived => {
                if rng.random::<f64>() < p11 {
                    Stratum::AlwaysSurvivor
                } else {
                    Stratum::Protected
                }
            }
            ObservedGroup::ControlDied => {
                if rng.random::<f64>() < p10 {
                    Stratum::Protected
                } else {
                    Stratum::NeverSurvivor
                }
            }
        })
        .collect()
}

pub(crate) fn cell_mask(data: &ModelData, strata: &[Stratum], cell: Cell) -> Vec<bool> {
    strata
        .iter()
        .zip(&data.treat)
        .map(|(&s, &t)| Cell::of(s, t) == Some(cell))
        .collect()
}

/// Random strata consistent with the observed groups, outcome means fitted to
/// them by standalone sweeps, probit means started from probit regressions of
/// the initial stratum indicators and latents drawn to match.
pub fn initialize<R: Rng + ?Sized>(
    data: &ModelData,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<SamplerState> {
    let mut strata = None;
    for _ in 0..config.init_retries.max(1) {
        let candidate = random_strata(data, rng);
        if Cell::ALL
            .iter()
            .all(|&c| cell_mask(data, &candidate, c).iter().any(|&m| m))
        {
            strata = Some(candidate);
            break;
        }
    }
    let strata = strata.ok_or_else(|| {
        Error::Initialization(format!(
            "every random stratum assignment left an outcome cell empty after {} attempts",
            config.init_retries.max(1)
        ))
    })?;
    let n = data.n_units();

    let b = &config.bart;
    let outcome = [
        fresh_mean(data, config, &b.y111, 0.0, None)?,
        fresh_mean(data, config, &b.y110, 0.0, None)?,
        fresh_mean(data, config, &b.y101, 0.0, None)?,
    ];
    let mut sigma2 = [0.0; 3];
    for cell in Cell::ALL {
        let ys: Vec<f64> = (0..n)
            .filter(|&i| Cell::of(strata[i], data.treat[i]) == Some(cell))
            .map(|i| data.y[i])
            .collect();
        let v = if ys.len() > 1 {
            sample_variance(&ys)
        } else {
            0.0
        };
        sigma2[cell.slot()] = if v > 0.0 { v } else { 0.25 };
    }

    let design = design_matrix(data.index.covariates(), config.linear.covariates.as_deref());
    let is00: Vec<bool> = strata
        .iter()
        .map(|&s| s == Stratum::NeverSurvivor)
        .collect();
    let is10: Vec<bool> = strata.iter().map(|&s| s == Stratum::Protected).collect();
    let survivors: Vec<bool> = is00.iter().map(|&d| !d).collect();
    let beta_z = probit_glm(&design, &is00, &vec![true; n]);
    let beta_w = probit_glm(&design, &is10, &survivors);
    let linear_predictor = |beta: &Option<Vec<f64>>, i: usize| {
        beta.as_ref().map_or(0.0, |b| {
            (0..b.len()).map(|j| design[(i, j)] * b[j]).sum::<f64>()
        })
    };

    let z: Vec<f64> = (0..n)
        .map(|i| {
            let m = linear_predictor(&beta_z, i);
            if is00[i] {
                sample_truncated_above(m, 0.0, rng)
            } else {
                sample_truncated_below(m, 0.0, rng)
            }
        })
        .collect();
    let w: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let m = linear_predictor(&beta_w, i);
            match strata[i] {
                Stratum::NeverSurvivor => None,
                Stratum::Protected => Some(sample_truncated_above(m, 0.0, rng)),
                Stratum::AlwaysSurvivor => Some(sample_truncated_below(m, 0.0, rng)),
            }
        })
        .collect();

    let mut mz = fresh_mean(data, config, &b.z, data.probit_offsets[0], beta_z)?;
    let mut mw = fresh_mean(data, config, &b.w, data.probit_offsets[1], beta_w)?;
    if config.model == ModelKind::Bart {
        let w_response: Vec<f64> = w.iter().map(|v| v.unwrap_or(0.0)).collect();
        for _ in 0..config.init_sweeps {
            mz.update(&data.index, &z, &vec![true; n], 1.0, rng)?;
            mw.update(&data.index, &w_response, &survivors, 1.0, rng)?;
        }
    }

    let mut state = SamplerState {
        strata,
        z,
        w,
        mz,
        mw,
        outcome,
        sigma2,
    };
    for _ in 0..config.init_sweeps {
        update_outcome_means(&mut state, data, rng)?;
        update_variances(&mut state, data, config, rng);
    }
    Ok(state)
}
