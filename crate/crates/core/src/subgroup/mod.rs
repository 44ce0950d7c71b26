//! Effect-moderation search: a regression tree fitted to posterior-mean
//! CSACE over the likely always-survivors, covariates added stepwise, and the
//! CSACE draws projected onto the tree's leaves.

mod cart;

pub use cart::{fit_cart, CartNode, CartParams, RegressionTree};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateMatrix, TrialDataset};
use crate::error::{Error, Result};
use crate::estimands::{CsaceDraws, LikelySet};
use crate::stats::{mean, sample_sd, Interval};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepwiseParams {
    pub cart: CartParams,
    /// Stop once the best candidate raises R² by less than this.
    pub min_r2_gain: f64,
}

impl Default for StepwiseParams {
    fn default() -> Self {
        StepwiseParams {
            cart: CartParams::default(),
            min_r2_gain: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepwiseFit {
    /// Covariate columns in the order they were added.
    pub selected: Vec<usize>,
    /// R² after each addition.
    pub r2_path: Vec<f64>,
    pub tree: RegressionTree,
    /// Set when no covariate cleared the first step.
    pub root_only: bool,
}

/// Forward selection of covariates for the tree of `y` on `x`: each step adds
/// the covariate giving the largest R² (earlier columns win ties) and stops
/// when the gain falls below `params.min_r2_gain`.
pub fn stepwise_select(
    y: &[f64],
    x: &CovariateMatrix,
    params: &StepwiseParams,
) -> Result<StepwiseFit> {
    params.cart.validate()?;
    let mut selected: Vec<usize> = Vec::new();
    let mut r2_path = Vec::new();
    let mut tree = fit_cart(y, x, &[], &params.cart)?;
    let mut current = 0.0;
    loop {
        let candidates: Vec<usize> = (0..x.n_cols()).filter(|k| !selected.contains(k)).collect();
        if candidates.is_empty() {
            break;
        }
        let fits: Vec<RegressionTree> = candidates
            .par_iter()
            .map(|&k| {
                let mut vars = selected.clone();
                vars.push(k);
                fit_cart(y, x, &vars, &params.cart)
            })
            .collect::<Result<_>>()?;
        let (best, fit) = fits
            .into_iter()
            .enumerate()
            .fold(None::<(usize, RegressionTree)>, |acc, (c, f)| match acc {
                Some((_, ref a)) if a.r_squared() >= f.r_squared() => acc,
                _ => Some((c, f)),
            })
            .expect("at least one candidate");
        let r2 = fit.r_squared();
        if r2 - current < params.min_r2_gain {
            break;
        }
        selected.push(candidates[best]);
        r2_path.push(r2);
        current = r2;
        tree = fit;
    }
    Ok(StepwiseFit {
        root_only: selected.is_empty(),
        selected,
        r2_path,
        tree,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafPosterior {
    pub node: usize,
    /// Likely-set units in the leaf, as dataset row indices.
    pub units: Vec<usize>,
    /// Average posterior-mean CSACE of the leaf's units.
    pub mean: f64,
    /// Posterior of the per-draw leaf average of CSACE.
    pub posterior: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafContrast {
    pub a: usize,
    pub b: usize,
    /// Posterior of leaf `a` minus leaf `b`, both as node ids.
    pub difference: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub leaves: Vec<LeafPosterior>,
    /// `draws[l][d]`: mean CSACE of leaf `l` in retained draw `d`.
    pub draws: Vec<Vec<f64>>,
    pub contrasts: Vec<LeafContrast>,
}

/// Project every CSACE draw onto the leaves of `tree`: per draw, the mean
/// CSACE of the likely units in each leaf.
pub fn project_posterior(
    csace: &CsaceDraws,
    likely: &LikelySet,
    tree: &RegressionTree,
    x: &CovariateMatrix,
) -> Result<Projection> {
    if x.n_rows() != csace.n_units() {
        return Err(Error::Input(
            "covariates and CSACE draws differ in units".into(),
        ));
    }
    let leaf_ids = tree.leaves();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); leaf_ids.len()];
    for &i in &likely.units {
        let node = tree.leaf_of(x.row(i));
        let slot = leaf_ids
            .binary_search(&node)
            .expect("leaf_of returns a leaf");
        members[slot].push(i);
    }
    let means = csace.posterior_means();
    let draws: Vec<Vec<f64>> = members
        .iter()
        .map(|units| {
            (0..csace.n_draws())
                .map(|d| {
                    let row = csace.draw(d);
                    units.iter().map(|&i| row[i]).sum::<f64>() / units.len() as f64
                })
                .collect()
        })
        .collect();
    let leaves = leaf_ids
        .iter()
        .zip(&members)
        .zip(&draws)
        .filter(|((_, units), _)| !units.is_empty())
        .map(|((&node, units), d)| LeafPosterior {
            node,
            units: units.clone(),
            mean: units.iter().map(|&i| means[i]).sum::<f64>() / units.len() as f64,
            posterior: Interval::from_draws(d),
        })
        .collect::<Vec<_>>();
    let draws: Vec<Vec<f64>> = members
        .iter()
        .zip(draws)
        .filter(|(units, _)| !units.is_empty())
        .map(|(_, d)| d)
        .collect();
    let mut contrasts = Vec::new();
    for a in 0..leaves.len() {
        for b in a + 1..leaves.len() {
            let diff: Vec<f64> = draws[a].iter().zip(&draws[b]).map(|(u, v)| u - v).collect();
            contrasts.push(LeafContrast {
                a: leaves[a].node,
                b: leaves[b].node,
                difference: Interval::from_draws(&diff),
            });
        }
    }
    Ok(Projection {
        leaves,
        draws,
        contrasts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub covariate: String,
    /// Coefficient per standard deviation of the covariate within the likely set.
    pub coefficient: f64,
}

/// Supplementary summary: least-squares regression of posterior-mean CSACE
/// on the given covariates, each standardized within the sample. Terms are
/// ordered by absolute coefficient, largest first; constant covariates are
/// dropped.
pub fn standardized_regression(
    y: &[f64],
    x: &CovariateMatrix,
    vars: &[usize],
    names: &[String],
) -> Result<Vec<LinearTerm>> {
    let n = y.len();
    let vars: Vec<usize> = vars
        .iter()
        .copied()
        .filter(|&k| sample_sd(&x.column(k)) > 0.0)
        .collect();
    if vars.is_empty() {
        return Ok(Vec::new());
    }
    if n <= vars.len() {
        return Err(Error::Input("too few units for the linear summary".into()));
    }
    let mut design = DMatrix::from_element(n, vars.len() + 1, 1.0);
    for (c, &k) in vars.iter().enumerate() {
        let col = x.column(k);
        let (m, s) = (mean(&col), sample_sd(&col));
        for i in 0..n {
            design[(i, c + 1)] = (col[i] - m) / s;
        }
    }
    let response = DVector::from_column_slice(y);
    let beta = design
        .svd(true, true)
        .solve(&response, 1e-12)
        .map_err(|e| Error::Numerical {
            unit: 0,
            message: format!("linear summary failed: {e}"),
        })?;
    let mut terms: Vec<LinearTerm> = vars
        .iter()
        .enumerate()
        .map(|(c, &k)| LinearTerm {
            covariate: names[k].clone(),
            coefficient: beta[c + 1],
        })
        .collect();
    terms.sort_by(|a, b| b.coefficient.abs().total_cmp(&a.coefficient.abs()));
    Ok(terms)
}

/// Nested form of the tree for reports, with thresholds on both scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReportNode {
    Split {
        covariate: String,
        /// Threshold on the working (standardized) scale.
        cut: f64,
        /// Threshold on the covariate's natural scale.
        cut_natural: f64,
        left: Box<ReportNode>,
        right: Box<ReportNode>,
    },
    Leaf {
        node: usize,
        n: usize,
        mean: f64,
        posterior: Option<Interval>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub n_units: usize,
    pub selected: Vec<String>,
    pub r2_path: Vec<f64>,
    pub r2: f64,
    pub root_only: bool,
    pub tree: ReportNode,
    pub leaves: Vec<LeafPosterior>,
    pub contrasts: Vec<LeafContrast>,
    pub linear_summary: Vec<LinearTerm>,
    #[serde(skip)]
    pub leaf_draws: Vec<Vec<f64>>,
    #[serde(skip)]
    pub fit: Option<RegressionTree>,
}

fn report_node(
    tree: &RegressionTree,
    id: usize,
    dataset: &TrialDataset,
    leaves: &[LeafPosterior],
) -> ReportNode {
    match tree.nodes[id] {
        CartNode::Split {
            var,
            cut,
            left,
            right,
        } => ReportNode::Split {
            covariate: dataset.spec().names[var].clone(),
            cut,
            cut_natural: dataset.spec().to_natural(var, cut),
            left: Box::new(report_node(tree, left, dataset, leaves)),
            right: Box::new(report_node(tree, right, dataset, leaves)),
        },
        CartNode::Leaf { mean, n } => ReportNode::Leaf {
            node: id,
            n,
            mean,
            posterior: leaves.iter().find(|l| l.node == id).map(|l| l.posterior),
        },
    }
}

/// Full fit-the-fit analysis over the likely set: stepwise tree on
/// posterior-mean CSACE, projected leaf posteriors, pairwise leaf contrasts
/// and the standardized linear summary.
pub fn stepwise_fit_the_fit(
    csace: &CsaceDraws,
    likely: &LikelySet,
    dataset: &TrialDataset,
    params: &StepwiseParams,
) -> Result<SubgroupReport> {
    if dataset.n_units() != csace.n_units() {
        return Err(Error::Input(
            "dataset and CSACE draws differ in units".into(),
        ));
    }
    let means = csace.posterior_means();
    let y: Vec<f64> = likely.units.iter().map(|&i| means[i]).collect();
    let x_likely = dataset.covariates().select_rows(&likely.units);
    let fit = stepwise_select(&y, &x_likely, params)?;
    let projection = project_posterior(csace, likely, &fit.tree, dataset.covariates())?;
    let linear_summary =
        standardized_regression(&y, &x_likely, &fit.selected, &dataset.spec().names)?;
    Ok(SubgroupReport {
        n_units: likely.len(),
        selected: fit
            .selected
            .iter()
            .map(|&k| dataset.spec().names[k].clone())
            .collect(),
        r2_path: fit.r2_path.clone(),
        r2: fit.tree.r_squared(),
        root_only: fit.root_only,
        tree: report_node(&fit.tree, 0, dataset, &projection.leaves),
        leaves: projection.leaves,
        contrasts: projection.contrasts,
        linear_summary,
        leaf_draws: projection.draws,
        fit: Some(fit.tree),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_only_projection_is_the_likely_set_average() {
        let c = CsaceDraws::new(3, vec![1.0, 2.0, 6.0, 0.0, -3.0, 3.0]).unwrap();
        let likely = LikelySet {
            p: 0.8,
            units: vec![0, 2],
        };
        let x = CovariateMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let tree = fit_cart(
            &[0.0, 0.0],
            &x.select_rows(&[0, 2]),
            &[0],
            &CartParams::default(),
        )
        .unwrap();
        let p = project_posterior(&c, &likely, &tree, &x).unwrap();
        assert_eq!(p.draws, vec![vec![3.5, 1.5]]);
        assert!(p.contrasts.is_empty());
    }

    #[test]
    fn disjoint_constant_leaves_give_degenerate_contrasts() {
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 2) as f64]).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let per_draw: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 2.0 } else { -1.0 })
            .collect();
        let values = [per_draw.clone(), per_draw.clone()].concat();
        let c = CsaceDraws::new(n, values).unwrap();
        let likely = LikelySet {
            p: 0.5,
            units: (0..n).collect(),
        };
        let tree = fit_cart(&per_draw, &x, &[0], &CartParams::default()).unwrap();
        let p = project_posterior(&c, &likely, &tree, &x).unwrap();
        assert_eq!(p.contrasts.len(), 1);
        let d = p.contrasts[0].difference;
        assert_eq!((d.mean, d.lower, d.upper), (3.0, 3.0, 3.0));
    }

    #[test]
    fn no_moderation_stops_at_the_first_step() {
        let rows: Vec<Vec<f64>> = (0..80).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let fit = stepwise_select(&[1.5; 80], &x, &StepwiseParams::default()).unwrap();
        assert!(fit.root_only);
        assert!(fit.r2_path.is_empty());
    }

    #[test]
    fn linear_summary_recovers_standardized_slopes() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64, ((i * 7) % 11) as f64])
            .collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1]).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let terms = standardized_regression(&y, &x, &[0, 1], &names).unwrap();
        let sd0 = sample_sd(&x.column(0));
        assert_eq!(terms[0].covariate, "a");
        assert!((terms[0].coefficient - 2.0 * sd0).abs() < 1e-9);
    }
}
