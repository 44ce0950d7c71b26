//! The principal-stratification mixture sampler.
//!
//! Units fall into three latent strata under monotonicity: never-survivors
//! (`00`), protected (`10`) and always-survivors (`11`). Membership follows a
//! nested probit with latents `Z` and `W`:
//!
//! ```text
//! pi00 = Phi(mZ)
//! pi10 = (1 - Phi(mZ)) Phi(mW)
//! pi11 = (1 - Phi(mZ)) (1 - Phi(mW))
//! ```
//!
//! with `Z >= 0` exactly when `S = 00` and, for survivors of the first probit,
//! `W >= 0` exactly when `S = 10`. Observed outcomes follow
//! `N(m_st(X), sigma2_st)` for the three identified stratum/arm cells `111`,
//! `110` and `101`. Each mean function is either a sum of trees or, for the
//! parametric baseline, a linear predictor.

mod chain;
mod cv;
mod glm;
mod mean;
mod state;
mod steps;

pub use chain::{
    merge_chains, run_chain, run_chains, Chain, Checkpoint, PosteriorDraws, CHECKPOINT_FORMAT,
};
pub use cv::{bart_regression, cross_validate, CvCell, CvConfig, CvResult};
pub use glm::probit_glm;
pub use mean::{MeanFunction, MeanSnapshot};
pub use state::{initialize, ModelData, OutcomeScale, SamplerState, StateSnapshot};
pub use steps::{
    gibbs_iteration, impute_strata, observed_log_likelihood, sample_latents, strata_probabilities,
    update_outcome_means, update_probit_means, update_variances,
};

use serde::{Deserialize, Serialize};

use crate::bart::BartConfig;
use crate::error::{Error, Result};
use crate::parametric::LinearModelConfig;

pub const SIGN_CONVENTION: &str = "pi00 = Phi(mZ), pi10 = (1 - Phi(mZ)) Phi(mW), \
pi11 = (1 - Phi(mZ)) (1 - Phi(mW)); Z >= 0 iff S = 00, W >= 0 iff S = 10";

/// Principal stratum under monotonicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    #[serde(rename = "00")]
    NeverSurvivor,
    #[serde(rename = "10")]
    Protected,
    #[serde(rename = "11")]
    AlwaysSurvivor,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [
        Stratum::NeverSurvivor,
        Stratum::Protected,
        Stratum::AlwaysSurvivor,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stratum::NeverSurvivor => "00",
            Stratum::Protected => "10",
            Stratum::AlwaysSurvivor => "11",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "00" => Some(Stratum::NeverSurvivor),
            "10" => Some(Stratum::Protected),
            "11" => Some(Stratum::AlwaysSurvivor),
            _ => None,
        }
    }

    pub fn slot(self) -> usize {
        match self {
            Stratum::NeverSurvivor => 0,
            Stratum::Protected => 1,
            Stratum::AlwaysSurvivor => 2,
        }
    }
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The three outcome cells `(stratum, arm)` with an observable outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    #[serde(rename = "111")]
    Always1,
    #[serde(rename = "110")]
    Always0,
    #[serde(rename = "101")]
    Protected1,
}

impl Cell {
    pub const ALL: [Cell; 3] = [Cell::Always1, Cell::Always0, Cell::Protected1];

    pub fn of(stratum: Stratum, treat: bool) -> Option<Cell> {
        match (stratum, treat) {
            (Stratum::AlwaysSurvivor, true) => Some(Cell::Always1),
            (Stratum::AlwaysSurvivor, false) => Some(Cell::Always0),
            (Stratum::Protected, true) => Some(Cell::Protected1),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Cell::Always1 => "111",
            Cell::Always0 => "110",
            Cell::Protected1 => "101",
        }
    }

    pub fn slot(self) -> usize {
        match self {
            Cell::Always1 => 0,
            Cell::Always0 => 1,
            Cell::Protected1 => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Bart,
    Parametric,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Bart => "bart",
            ModelKind::Parametric => "parametric",
        })
    }
}

/// Tree-prior settings for the five sum-of-trees mean functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfigs {
    pub z: BartConfig,
    pub w: BartConfig,
    pub y111: BartConfig,
    pub y110: BartConfig,
    pub y101: BartConfig,
}

impl Default for ForestConfigs {
    fn default() -> Self {
        Self::uniform(BartConfig::default())
    }
}

impl ForestConfigs {
    pub fn uniform(config: BartConfig) -> Self {
        ForestConfigs {
            z: config.clone(),
            w: config.clone(),
            y111: config.clone(),
            y110: config.clone(),
            y101: config,
        }
    }

    fn validate(&self) -> Result<()> {
        for c in [&self.z, &self.w, &self.y111, &self.y110, &self.y101] {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub a0: f64,
    pub b0: f64,
    pub model: ModelKind,
    pub bart: ForestConfigs,
    pub linear: LinearModelConfig,
    /// Standalone sweeps used to initialize each mean function.
    pub init_sweeps: usize,
    /// Attempts at a random initial stratum assignment with no empty cell.
    pub init_retries: usize,
    /// Independent initializations tried before iteration 0.
    pub init_restarts: usize,
    /// Sweeps run from each initialization; the state with the highest mean
    /// observed-data log-likelihood over the second half is kept.
    pub pilot_iters: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 10_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            a0: 0.001,
            b0: 0.001,
            model: ModelKind::Bart,
            bart: ForestConfigs::default(),
            linear: LinearModelConfig::default(),
            init_sweeps: 20,
            init_retries: 100,
            init_restarts: 4,
            pilot_iters: 100,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.init_restarts == 0 {
            return Err(Error::Config("init_restarts must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(Error::Config("a0 and b0 must be positive".into()));
        }
        self.bart.validate()?;
        self.linear.validate()
    }

    /// Number of retained draws: `(n_iter - burn_in) / thin`, rounded down.
    pub fn n_retained(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin
    }

    /// Whether 0-based iteration `it` is kept.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it + 1 - self.burn_in).is_multiple_of(self.thin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_counts() {
        let mut c = ChainConfig::default();
        assert_eq!(c.n_retained(), 5000);
        c.thin = 5;
        assert_eq!(c.n_retained(), 1000);
        assert_eq!((0..c.n_iter).filter(|&i| c.keeps(i)).count(), 1000);
        c.n_iter = 5007;
        c.burn_in = 5000;
        assert_eq!(
            (0..c.n_iter).filter(|&i| c.keeps(i)).count(),
            c.n_retained()
        );
    }

    #[test]
    fn burn_in_must_leave_iterations() {
        let c = ChainConfig {
            n_iter: 10,
            burn_in: 10,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
