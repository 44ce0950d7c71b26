use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bart::{BartConfig, Forest, ForestFit, MoveStats, SplitIndex};
use crate::error::Result;
use crate::parametric::{design_matrix, LinearFit, LinearModelConfig};

/// One of the five regression functions of the mixture.
#[derive(Clone, Debug)]
pub enum MeanFunction {
    /// `offset + sum of trees`; `fitted` caches the sum at the training rows.
    Forest {
        fit: ForestFit,
        config: BartConfig,
        offset: f64,
        fitted: Vec<f64>,
    },
    Linear(LinearFit),
}

/// Serializable content of a mean function, enough to rebuild it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeanSnapshot {
    Forest {
        forest: Forest,
        moves: MoveStats,
        #[serde(default)]
        offset: f64,
    },
    Linear {
        coefficients: Vec<f64>,
    },
}

impl MeanFunction {
    pub(crate) fn empty_forest(index: &SplitIndex, config: &BartConfig, offset: f64) -> Self {
        Self::from_fit(ForestFit::empty(index, config), config, offset)
    }

    fn from_fit(fit: ForestFit, config: &BartConfig, offset: f64) -> Self {
        let fitted = fit.fitted().iter().map(|f| offset + f).collect();
        MeanFunction::Forest {
            fit,
            config: config.clone(),
            offset,
            fitted,
        }
    }

    pub(crate) fn linear(
        index: &SplitIndex,
        config: &LinearModelConfig,
        coefficients: Option<Vec<f64>>,
    ) -> Result<Self> {
        let design = design_matrix(index.covariates(), config.covariates.as_deref());
        let p = design.ncols();
        Ok(MeanFunction::Linear(LinearFit::new(
            design,
            config.prior_variance,
            coefficients.unwrap_or_else(|| vec![0.0; p]),
        )?))
    }

    /// Current value at every training row.
    pub fn fitted(&self) -> &[f64] {
        match self {
            MeanFunction::Forest { fitted, .. } => fitted,
            MeanFunction::Linear(fit) => fit.fitted(),
        }
    }

    pub fn move_stats(&self) -> Option<&MoveStats> {
        match self {
            MeanFunction::Forest { fit, .. } => Some(fit.move_stats()),
            MeanFunction::Linear(_) => None,
        }
    }

    pub(crate) fn reset_move_stats(&mut self) {
        if let MeanFunction::Forest { fit, .. } = self {
            fit.reset_move_stats();
        }
    }

    pub fn forest(&self) -> Option<&Forest> {
        match self {
            MeanFunction::Forest { fit, .. } => Some(fit.forest()),
            MeanFunction::Linear(_) => None,
        }
    }

    /// One conditional update given `response` on the `active` rows.
    pub(crate) fn update<R: Rng + ?Sized>(
        &mut self,
        index: &SplitIndex,
        response: &[f64],
        active: &[bool],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<()> {
        match self {
            MeanFunction::Forest {
                fit,
                config,
                offset,
                fitted,
            } => {
                if *offset == 0.0 {
                    fit.backfit_sweep(index, response, active, sigma2, config, rng)?;
                } else {
                    let shifted: Vec<f64> = response.iter().map(|r| r - *offset).collect();
                    fit.backfit_sweep(index, &shifted, active, sigma2, config, rng)?;
                }
                for (f, t) in fitted.iter_mut().zip(fit.fitted()) {
                    *f = *offset + t;
                }
                Ok(())
            }
            MeanFunction::Linear(fit) => fit.update(response, active, sigma2, rng),
        }
    }

    pub fn snapshot(&self) -> MeanSnapshot {
        match self {
            MeanFunction::Forest { fit, offset, .. } => MeanSnapshot::Forest {
                forest: fit.forest().clone(),
                moves: *fit.move_stats(),
                offset: *offset,
            },
            MeanFunction::Linear(fit) => MeanSnapshot::Linear {
                coefficients: fit.coefficients().to_vec(),
            },
        }
    }

    pub(crate) fn restore(
        snapshot: &MeanSnapshot,
        index: &SplitIndex,
        bart: &BartConfig,
        linear: &LinearModelConfig,
    ) -> Result<Self> {
        match snapshot {
            MeanSnapshot::Forest {
                forest,
                moves,
                offset,
            } => {
                let mut fit = ForestFit::new(forest.clone(), index)?;
                fit.set_move_stats(*moves);
                Ok(Self::from_fit(fit, bart, *offset))
            }
            MeanSnapshot::Linear { coefficients } => {
                Self::linear(index, linear, Some(coefficients.clone()))
            }
        }
    }
}
