//! Linear mean functions with conjugate Gaussian coefficient updates, used as
//! the parametric baseline inside the same augmentation scheme.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::sampler::{run_chain, ChainConfig, ModelKind, PosteriorDraws};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearModelConfig {
    /// Prior variance of every coefficient (prior mean zero, intercept included).
    pub prior_variance: f64,
    /// Covariate columns entering the design; all of them when unset.
    pub covariates: Option<Vec<usize>>,
}

impl Default for LinearModelConfig {
    fn default() -> Self {
        LinearModelConfig {
            prior_variance: 100.0,
            covariates: None,
        }
    }
}

impl LinearModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_variance > 0.0) || !self.prior_variance.is_finite() {
            return Err(Error::Config(format!(
                "prior_variance must be positive, got {}",
                self.prior_variance
            )));
        }
        Ok(())
    }
}

/// Intercept column followed by the selected covariates.
pub fn design_matrix(x: &crate::data::CovariateMatrix, columns: Option<&[usize]>) -> DMatrix<f64> {
    let cols: Vec<usize> = match columns {
        Some(c) => c.to_vec(),
        None => (0..x.n_cols()).collect(),
    };
    DMatrix::from_fn(x.n_rows(), cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            x.get(i, cols[j - 1])
        }
    })
}

/// Posterior precision and `X'y / sigma2` restricted to the active rows.
fn posterior_terms(
    design: &DMatrix<f64>,
    response: &[f64],
    active: Option<&[bool]>,
    sigma2: f64,
    prior_variance: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = design.ncols();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for i in 0..design.nrows() {
        if active.is_some_and(|a| !a[i]) {
            continue;
        }
        let row = design.row(i);
        for a in 0..p {
            xty[a] += row[a] * response[i];
            for b in 0..=a {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let mut precision = xtx / sigma2;
    for a in 0..p {
        precision[(a, a)] += 1.0 / prior_variance;
    }
    (precision, xty / sigma2)
}

/// Posterior mean and covariance of the coefficients.
pub fn coefficient_posterior(
    design: &DMatrix<f64>,
    response: &[f64],
    sigma2: f64,
    config: &LinearModelConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_inputs(design, response, sigma2)?;
    let (precision, b) = posterior_terms(design, response, None, sigma2, config.prior_variance);
    let chol = precision.cholesky().ok_or_else(|| Error::Numerical {
        unit: 0,
        message: "coefficient precision is not positive definite".into(),
    })?;
    Ok((chol.solve(&b), chol.inverse()))
}

fn check_inputs(design: &DMatrix<f64>, response: &[f64], sigma2: f64) -> Result<()> {
    if design.nrows() != response.len() {
        return Err(Error::Input(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            response.len()
        )));
    }
    if let Some(i) = design.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!(
            "non-finite design entry in row {}",
            i % design.nrows().max(1)
        )));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Input(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    Ok(())
}

/// Draw coefficients from `N(V X'y / sigma2, V)` with
/// `V = (X'X / sigma2 + I / prior_variance)^-1`.
pub fn update_linear_coefficients<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &[f64],
    sigma2: f64,
    config: &LinearModelConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_inputs(design, response, sigma2)?;
    sample_coefficients(design, response, None, sigma2, config.prior_variance, rng)
}

pub(crate) fn sample_coefficients<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &[f64],
    active: Option<&[bool]>,
    sigma2: f64,
    prior_variance: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (precision, b) = posterior_terms(design, response, active, sigma2, prior_variance);
    let chol = precision.cholesky().ok_or_else(|| Error::Numerical {
        unit: 0,
        message: "coefficient precision is not positive definite".into(),
    })?;
    let mean = chol.solve(&b);
    let z = DVector::<f64>::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    // precision = L L', so L'^-1 z has covariance precision^-1.
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .expect("cholesky factor has a positive diagonal");
    Ok((mean + noise).iter().copied().collect())
}

/// A linear mean function bound to a design matrix.
#[derive(Clone, Debug)]
pub struct LinearFit {
    design: DMatrix<f64>,
    prior_variance: f64,
    coefficients: Vec<f64>,
    fitted: Vec<f64>,
}

impl LinearFit {
    pub fn new(design: DMatrix<f64>, prior_variance: f64, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != design.ncols() {
            return Err(Error::Structural(format!(
                "{} coefficients for a design with {} columns",
                coefficients.len(),
                design.ncols()
            )));
        }
        let mut fit = LinearFit {
            fitted: vec![0.0; design.nrows()],
            design,
            prior_variance,
            coefficients,
        };
        fit.refresh();
        Ok(fit)
    }

    fn refresh(&mut self) {
        for (i, f) in self.fitted.iter_mut().enumerate() {
            let row = self.design.row(i);
            *f = self
                .coefficients
                .iter()
                .enumerate()
                .fold(0.0, |acc, (j, b)| acc + row[j] * b);
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub(crate) fn update<R: Rng + ?Sized>(
        &mut self,
        response: &[f64],
        active: &[bool],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<()> {
        self.coefficients = sample_coefficients(
            &self.design,
            response,
            Some(active),
            sigma2,
            self.prior_variance,
            rng,
        )?;
        self.refresh();
        Ok(())
    }
}

/// Run the mixture sampler with every mean function linear.
pub fn run_chain_parametric(
    dataset: &TrialDataset,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    let config = ChainConfig {
        model: ModelKind::Parametric,
        ..config.clone()
    };
    run_chain(dataset, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_data_draws_from_the_prior() {
        let design = DMatrix::<f64>::zeros(0, 2);
        let (mean, cov) =
            coefficient_posterior(&design, &[], 1.0, &LinearModelConfig::default()).unwrap();
        assert_eq!(mean.iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert!((cov[(0, 0)] - 100.0).abs() < 1e-9);
        assert!(cov[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn orthonormal_design_shrinks_by_100_over_101() {
        let design = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let y = [1.0, 2.0, 3.0, 5.0];
        let (mean, _) =
            coefficient_posterior(&design, &y, 1.0, &LinearModelConfig::default()).unwrap();
        let xty = [5.5, -1.5];
        for k in 0..2 {
            assert!((mean[k] - xty[k] * 100.0 / 101.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_prior_variance_pins_coefficients_at_zero() {
        let design = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let config = LinearModelConfig {
            prior_variance: 1e-12,
            covariates: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = update_linear_coefficients(&design, &[10.0, 20.0, 30.0], 1.0, &config, &mut rng)
            .unwrap();
        assert!(b[0].abs() < 1e-4);
    }

    #[test]
    fn non_finite_design_is_an_input_error() {
        let design = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = update_linear_coefficients(
            &design,
            &[0.0, 0.0],
            1.0,
            &LinearModelConfig::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
