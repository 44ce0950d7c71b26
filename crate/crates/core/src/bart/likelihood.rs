use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::{BartConfig, Tree};

/// Sufficient statistics of the residuals falling in one leaf.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LeafStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl LeafStats {
    #[inline]
    pub fn push(&mut self, r: f64) {
        self.n += 1;
        self.sum += r;
        self.sum_sq += r * r;
    }

    pub fn from_residuals(rs: impl IntoIterator<Item = f64>) -> Self {
        let mut s = LeafStats::default();
        rs.into_iter().for_each(|r| s.push(r));
        s
    }

    /// Terms of the integrated leaf likelihood that depend on how rows are
    /// grouped into leaves; the remaining data terms are identical for any
    /// partition of the same rows and cancel in Metropolis ratios.
    #[inline]
    pub(crate) fn log_ml_core(&self, sigma2: f64, leaf_var: f64) -> f64 {
        let n = self.n as f64;
        let denom = sigma2 + n * leaf_var;
        0.5 * (sigma2 / denom).ln() + leaf_var * self.sum * self.sum / (2.0 * sigma2 * denom)
    }

    /// Full log marginal likelihood of the leaf's residuals with its value
    /// integrated out under `N(0, leaf_var)`.
    pub fn log_marginal(&self, sigma2: f64, leaf_var: f64) -> f64 {
        let n = self.n as f64;
        -0.5 * n * (2.0 * PI * sigma2).ln() - self.sum_sq / (2.0 * sigma2)
            + self.log_ml_core(sigma2, leaf_var)
    }
}

/// Posterior mean and variance of a leaf value given its residual statistics.
pub fn leaf_posterior(stats: &LeafStats, sigma2: f64, leaf_var: f64) -> (f64, f64) {
    let precision = stats.n as f64 / sigma2 + 1.0 / leaf_var;
    (stats.sum / sigma2 / precision, 1.0 / precision)
}

/// Log integrated likelihood of `residuals` under `tree` with every leaf
/// value marginalized. `residuals[i]` belongs to row `rows[i]`.
pub fn log_marginal_likelihood(
    tree: &Tree,
    rows: &crate::data::CovariateMatrix,
    residuals: &[f64],
    sigma2: f64,
    config: &BartConfig,
) -> Result<f64> {
    if tree.n_nodes() == 0 {
        return Err(Error::Structural("empty tree".into()));
    }
    if residuals.len() != rows.n_rows() {
        return Err(Error::Input(format!(
            "{} residuals for {} rows",
            residuals.len(),
            rows.n_rows()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Input(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let mut stats = vec![LeafStats::default(); tree.n_nodes()];
    for (i, &r) in residuals.iter().enumerate() {
        let row = rows.row(i);
        tree.predict(row)?;
        stats[tree.leaf_for(row)].push(r);
    }
    let v = config.leaf_prior_variance();
    Ok(tree
        .leaves()
        .into_iter()
        .map(|l| stats[l].log_marginal(sigma2, v))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateMatrix;

    /// Trapezoid integration of prod N(r_i | mu, s2) N(mu | 0, v) over mu.
    fn integrate(rs: &[f64], s2: f64, v: f64) -> f64 {
        let sd = v.sqrt();
        let (lo, hi, steps) = (-12.0 * sd - 5.0, 12.0 * sd + 5.0, 400_000);
        let h = (hi - lo) / steps as f64;
        let f = |mu: f64| {
            let lik: f64 = rs
                .iter()
                .map(|r| (-(r - mu) * (r - mu) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt())
                .product();
            lik * (-(mu * mu) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
        };
        let mut total = 0.5 * (f(lo) + f(hi));
        for s in 1..steps {
            total += f(lo + s as f64 * h);
        }
        (total * h).ln()
    }

    #[test]
    fn single_leaf_matches_quadrature() {
        let rs = [0.3, -0.1, 0.45, 0.2, 0.05];
        let x = CovariateMatrix::new(5, 1, vec![0.0; 5]).unwrap();
        for (w, j, s2) in [(2.0, 1, 0.5), (1.0, 4, 0.1), (4.0, 2, 2.0)] {
            let cfg = BartConfig::with_trees(w, j);
            let got = log_marginal_likelihood(&Tree::leaf(0.0), &x, &rs, s2, &cfg).unwrap();
            let want = integrate(&rs, s2, cfg.leaf_prior_variance());
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_residuals_reduce_to_normalizing_constants() {
        let n = 7;
        let x = CovariateMatrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let mut tree = Tree::leaf(0.0);
        tree.grow(0, super::super::DecisionRule { var: 0, cut: 2.0 });
        let cfg = BartConfig::with_trees(2.0, 10);
        let (s2, v) = (0.7, cfg.leaf_prior_variance());
        let got = log_marginal_likelihood(&tree, &x, &vec![0.0; n], s2, &cfg).unwrap();
        let leaf = |m: f64| -0.5 * m * (2.0 * PI * s2).ln() + 0.5 * (s2 / (s2 + m * v)).ln();
        assert!((got - (leaf(3.0) + leaf(4.0))).abs() < 1e-12);
    }

    #[test]
    fn refining_a_constant_region_lowers_the_marginal_likelihood() {
        let x = CovariateMatrix::new(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let r = vec![0.4; 5];
        let cfg = BartConfig::with_trees(2.0, 1);
        let root = log_marginal_likelihood(&Tree::leaf(0.0), &x, &r, 0.25, &cfg).unwrap();
        for cut in [1.0, 2.0, 3.0, 4.0] {
            let mut t = Tree::leaf(0.0);
            t.grow(0, super::super::DecisionRule { var: 0, cut });
            let split = log_marginal_likelihood(&t, &x, &r, 0.25, &cfg).unwrap();
            assert!(split < root, "cut {cut}: {split} >= {root}");
        }
    }

    #[test]
    fn leaf_posterior_formula() {
        let s = LeafStats::from_residuals([1.0, 2.0, 3.0]);
        let (m, v) = leaf_posterior(&s, 2.0, 0.25);
        // precision = 3/2 + 4 = 5.5
        assert!((v - 1.0 / 5.5).abs() < 1e-15);
        assert!((m - 3.0 / 5.5).abs() < 1e-15);
    }
}
