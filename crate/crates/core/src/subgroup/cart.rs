use serde::{Deserialize, Serialize};

use crate::data::CovariateMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartParams {
    pub min_leaf: usize,
    pub max_depth: usize,
    /// A split must lower the SSE by at least this fraction of the total SST.
    pub min_improvement: f64,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            min_leaf: 20,
            max_depth: 4,
            min_improvement: 0.01,
        }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be positive".into()));
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::Config("min_improvement must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CartNode {
    Split {
        /// Column of the covariate matrix; `x <= cut` goes left.
        var: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        mean: f64,
        n: usize,
    },
}

/// A least-squares regression tree. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<CartNode>,
    pub params: CartParams,
    /// Total sum of squares of the response about its mean.
    pub sst: f64,
    /// Residual sum of squares over the leaves.
    pub sse: f64,
}

impl RegressionTree {
    /// `1 - SSE/SST`, zero for a constant response.
    pub fn r_squared(&self) -> f64 {
        if self.sst > 0.0 {
            1.0 - self.sse / self.sst
        } else {
            0.0
        }
    }

    pub fn is_root_only(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], CartNode::Leaf { .. }))
            .collect()
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut id = 0;
        while let CartNode::Split {
            var,
            cut,
            left,
            right,
        } = self.nodes[id]
        {
            id = if row[var] <= cut { left } else { right };
        }
        id
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(row)] {
            CartNode::Leaf { mean, .. } => mean,
            CartNode::Split { .. } => unreachable!("leaf_of ends at a leaf"),
        }
    }

    /// Covariates used by splits, in order of first use from the root down.
    pub fn split_vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let CartNode::Split { var, .. } = *node {
                if !out.contains(&var) {
                    out.push(var);
                }
            }
        }
        out
    }
}

fn sse_of(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sse = rows.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum();
    (mean, sse)
}

struct Best {
    var: usize,
    cut: f64,
    gain: f64,
    n_left: usize,
}

/// Best SSE-reducing split of `rows` over `vars`. Earlier variables and
/// smaller thresholds win ties.
fn best_split(
    y: &[f64],
    x: &CovariateMatrix,
    rows: &[usize],
    vars: &[usize],
    sse_here: f64,
    min_leaf: usize,
) -> Option<Best> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &var in vars {
        order.sort_by(|&a, &b| x.get(a, var).total_cmp(&x.get(b, var)));
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..n - 1 {
            let yi = y[order[k]];
            left_sum += yi;
            left_sq += yi * yi;
            let n_left = k + 1;
            let (lo, hi) = (x.get(order[k], var), x.get(order[k + 1], var));
            if n_left < min_leaf || n - n_left < min_leaf || lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            let sse_left = left_sq - left_sum * left_sum / n_left as f64;
            let sse_right = (total_sq - left_sq) - right_sum * right_sum / (n - n_left) as f64;
            let gain = sse_here - sse_left.max(0.0) - sse_right.max(0.0);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Best {
                    var,
                    cut: 0.5 * (lo + hi),
                    gain,
                    n_left,
                });
            }
        }
    }
    best
}

/// Greedy SSE-minimizing tree of `y` on the columns `vars` of `x`.
pub fn fit_cart(
    y: &[f64],
    x: &CovariateMatrix,
    vars: &[usize],
    params: &CartParams,
) -> Result<RegressionTree> {
    params.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::Input(
            "response and covariates differ in length".into(),
        ));
    }
    if y.is_empty() {
        return Err(Error::Input("regression tree on no units".into()));
    }
    if let Some(&v) = vars.iter().find(|&&v| v >= x.n_cols()) {
        return Err(Error::Input(format!("covariate {v} is out of range")));
    }
    let all: Vec<usize> = (0..y.len()).collect();
    let (_, sst) = sse_of(y, &all);
    let threshold = params.min_improvement * sst;

    let mut nodes = vec![CartNode::Leaf { mean: 0.0, n: 0 }];
    let mut stack = vec![(0usize, all, 0usize)];
    let mut sse = 0.0;
    while let Some((id, rows, depth)) = stack.pop() {
        let (mean, here) = sse_of(y, &rows);
        let split = if depth < params.max_depth && rows.len() >= 2 * params.min_leaf && here > 0.0 {
            best_split(y, x, &rows, vars, here, params.min_leaf)
                .filter(|b| b.gain > 0.0 && b.gain >= threshold)
        } else {
            None
        };
        match split {
            Some(b) => {
                let (mut left, mut right) = (Vec::with_capacity(b.n_left), Vec::new());
                for &i in &rows {
                    if x.get(i, b.var) <= b.cut {
                        left.push(i);
                    } else {
                        right.push(i);
                    }
                }
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(CartNode::Leaf { mean: 0.0, n: 0 });
                nodes.push(CartNode::Leaf { mean: 0.0, n: 0 });
                nodes[id] = CartNode::Split {
                    var: b.var,
                    cut: b.cut,
                    left: l,
                    right: r,
                };
                stack.push((r, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
            None => {
                sse += here;
                nodes[id] = CartNode::Leaf {
                    mean,
                    n: rows.len(),
                };
            }
        }
    }
    Ok(RegressionTree {
        nodes,
        params: params.clone(),
        sst,
        sse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_covariate_separates_perfectly() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 2) as f64, i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - 1.0).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let t = fit_cart(&y, &x, &[1, 0], &CartParams::default()).unwrap();
        assert_eq!(t.split_vars(), vec![0]);
        assert_eq!(t.r_squared(), 1.0);
        assert_eq!(t.leaves().len(), 2);
    }

    #[test]
    fn constant_response_stays_at_the_root() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let t = fit_cart(&[2.0; 50], &x, &[0], &CartParams::default()).unwrap();
        assert!(t.is_root_only());
        assert_eq!(t.r_squared(), 0.0);
        assert_eq!(t.predict(&[7.0]), 2.0);
    }

    #[test]
    fn depth_one_gives_a_single_split() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..200).map(|i| (i / 50) as f64).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let params = CartParams {
            max_depth: 1,
            ..CartParams::default()
        };
        let t = fit_cart(&y, &x, &[0], &params).unwrap();
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(
            t.nodes[0],
            CartNode::Split {
                var: 0,
                cut: 99.5,
                left: 1,
                right: 2
            }
        );
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let mut y = vec![0.0; 100];
        y[0] = 100.0;
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let t = fit_cart(&y, &x, &[0], &CartParams::default()).unwrap();
        for leaf in t.leaves() {
            let CartNode::Leaf { n, .. } = t.nodes[leaf] else {
                unreachable!()
            };
            assert!(n >= 20);
        }
    }
}
