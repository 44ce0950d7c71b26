use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bart::{BartConfig, ForestFit, SplitIndex};
use crate::data::{CovariateMatrix, TrialDataset};
use crate::error::{Error, Result};
use crate::stats::{sample_inverse_gamma, sample_variance};

use super::state::OutcomeScale;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub w_grid: Vec<f64>,
    pub n_trees_grid: Vec<usize>,
    pub folds: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            w_grid: vec![1.0, 2.0, 3.0, 4.0],
            n_trees_grid: vec![50, 75, 100, 200],
            folds: 5,
            sweeps: 1000,
            burn_in: 500,
            seed: 0,
            a0: 0.001,
            b0: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub w: f64,
    pub n_trees: usize,
    /// Held-out RMSE averaged over folds.
    pub rmse: f64,
    pub fold_rmse: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub w: f64,
    pub n_trees: usize,
    pub cells: Vec<CvCell>,
}

/// Posterior-mean predictions at `x_test` from a single-forest BART regression
/// of `y_train` on `x_train`.
#[allow(clippy::too_many_arguments)]
pub fn bart_regression<R: Rng + ?Sized>(
    x_train: &CovariateMatrix,
    y_train: &[f64],
    x_test: &CovariateMatrix,
    config: &BartConfig,
    sweeps: usize,
    burn_in: usize,
    a0: f64,
    b0: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if y_train.len() != x_train.n_rows() || y_train.is_empty() {
        return Err(Error::Input(
            "training outcomes do not match training rows".into(),
        ));
    }
    if burn_in >= sweeps {
        return Err(Error::Config("burn_in must be below sweeps".into()));
    }
    let scale = OutcomeScale::from_outcomes(y_train);
    let y: Vec<f64> = y_train.iter().map(|&v| scale.to_internal(v)).collect();
    let index = SplitIndex::new(x_train);
    let mut fit = ForestFit::empty(&index, config);
    let active = vec![true; y.len()];
    let v = if y.len() > 1 {
        sample_variance(&y)
    } else {
        0.0
    };
    let mut sigma2 = if v > 0.0 { v } else { 0.25 };
    let mut total = vec![0.0; x_test.n_rows()];
    for sweep in 0..sweeps {
        fit.backfit_sweep(&index, &y, &active, sigma2, config, rng)?;
        let ss: f64 = y
            .iter()
            .zip(fit.fitted())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sigma2 = sample_inverse_gamma(a0 + 0.5 * y.len() as f64, b0 + 0.5 * ss, rng);
        if sweep >= burn_in {
            for (i, t) in total.iter_mut().enumerate() {
                *t += fit.forest().predict(x_test.row(i))?;
            }
        }
    }
    let kept = (sweeps - burn_in) as f64;
    Ok(total
        .into_iter()
        .map(|t| scale.to_natural(t / kept))
        .collect())
}

/// K-fold cross-validation of `(w, J)` for a BART regression of the observed
/// survivor outcomes. Ties go to the smallest `J`, then the smallest `w`.
pub fn cross_validate(dataset: &TrialDataset, config: &CvConfig) -> Result<CvResult> {
    if config.folds < 2 {
        return Err(Error::Config(
            "cross-validation needs at least two folds".into(),
        ));
    }
    if config.w_grid.is_empty() || config.n_trees_grid.is_empty() {
        return Err(Error::Config("empty cross-validation grid".into()));
    }
    let mut survivors: Vec<usize> = (0..dataset.n_units())
        .filter(|&i| dataset.survive()[i])
        .collect();
    if survivors.len() < config.folds {
        return Err(Error::Input(format!(
            "{} survivors cannot fill {} folds",
            survivors.len(),
            config.folds
        )));
    }
    survivors.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let folds: Vec<Vec<usize>> = (0..config.folds)
        .map(|f| {
            survivors
                .iter()
                .skip(f)
                .step_by(config.folds)
                .copied()
                .collect()
        })
        .collect();

    let grid: Vec<(f64, usize)> = config
        .w_grid
        .iter()
        .flat_map(|&w| config.n_trees_grid.iter().map(move |&j| (w, j)))
        .collect();
    let x = dataset.covariates();
    let y: Vec<f64> = dataset.outcome().iter().map(|v| v.unwrap_or(0.0)).collect();

    let cells: Vec<CvCell> = grid
        .par_iter()
        .enumerate()
        .map(|(c, &(w, n_trees))| {
            let bart = BartConfig::with_trees(w, n_trees);
            let mut fold_rmse = Vec::with_capacity(config.folds);
            for (f, test) in folds.iter().enumerate() {
                let train: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|&(g, _)| g != f)
                    .flat_map(|(_, rows)| rows.iter().copied())
                    .collect();
                let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let seed = config.seed.wrapping_add((c * config.folds + f) as u64 + 1);
                let pred = bart_regression(
                    &x.select_rows(&train),
                    &y_train,
                    &x.select_rows(test),
                    &bart,
                    config.sweeps,
                    config.burn_in,
                    config.a0,
                    config.b0,
                    &mut ChaCha8Rng::seed_from_u64(seed),
                )?;
                let mse = test
                    .iter()
                    .zip(&pred)
                    .map(|(&i, p)| (y[i] - p) * (y[i] - p))
                    .sum::<f64>()
                    / test.len() as f64;
                fold_rmse.push(mse.sqrt());
            }
            Ok(CvCell {
                w,
                n_trees,
                rmse: fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64,
                fold_rmse,
            })
        })
        .collect::<Result<_>>()?;

    let (w, n_trees) = cells
        .iter()
        .min_by(|a, b| {
            a.rmse
                .total_cmp(&b.rmse)
                .then(a.n_trees.cmp(&b.n_trees))
                .then(a.w.total_cmp(&b.w))
        })
        .map(|c| (c.w, c.n_trees))
        .expect("grid is non-empty");
    Ok(CvResult { w, n_trees, cells })
}
