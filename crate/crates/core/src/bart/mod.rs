//! Bayesian additive regression trees: the sum-of-trees prior and the
//! Metropolis-within-Gibbs primitives used to sample it.
//!
//! Each tree is updated by one grow, prune or change proposal with its leaf
//! values integrated out, followed by an exact conjugate draw of every leaf.
//! Cutpoints at a node are the distinct observed values of the chosen
//! covariate among *all* training rows reaching the node (the largest value is
//! excluded so that neither child is empty). Because the training covariates
//! never change during a run, this prior over trees is fixed even though the
//! set of rows contributing likelihood (the `active` mask) changes from sweep
//! to sweep.

mod forest;
mod likelihood;
mod prior;
mod splits;
mod tree;
mod update;

pub use forest::{Forest, ForestFit, FOREST_FORMAT, FOREST_FORMAT_VERSION};
pub use likelihood::{leaf_posterior, log_marginal_likelihood, LeafStats};
pub use prior::{sample_prior_forest, sample_prior_tree};
pub use splits::SplitIndex;
pub use tree::{DecisionRule, Node, NodeKind, Tree};
pub use update::{mh_accept_probability, update_tree, MoveKind, MoveStats, Scratch};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proposal probabilities for the three tree moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs {
            grow: 0.25,
            prune: 0.25,
            change: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BartConfig {
    /// Base split probability.
    pub tau: f64,
    /// Depth penalty exponent.
    pub gamma: f64,
    /// Leaf prior scale; leaves are `N(0, 1 / (4 w^2 J))`.
    pub w: f64,
    /// Number of trees `J`.
    pub n_trees: usize,
    pub move_probs: MoveProbs,
    /// Nodes at this depth or deeper never split. `None` leaves depth to the
    /// prior alone.
    pub max_depth: Option<usize>,
}

impl Default for BartConfig {
    fn default() -> Self {
        BartConfig {
            tau: 0.95,
            gamma: 2.0,
            w: 2.0,
            n_trees: 50,
            move_probs: MoveProbs::default(),
            max_depth: None,
        }
    }
}

impl BartConfig {
    pub fn with_trees(w: f64, n_trees: usize) -> Self {
        BartConfig {
            w,
            n_trees,
            ..BartConfig::default()
        }
    }

    /// Prior variance of a single leaf value.
    pub fn leaf_prior_variance(&self) -> f64 {
        1.0 / (4.0 * self.w * self.w * self.n_trees as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in [0, 1), got {}",
                self.tau
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(Error::Config(format!("w must be positive, got {}", self.w)));
        }
        if self.n_trees == 0 {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        let p = self.move_probs;
        if [p.grow, p.prune, p.change].iter().any(|&q| !(q >= 0.0))
            || ((p.grow + p.prune + p.change) - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "move probabilities must be a simplex, got {p:?}"
            )));
        }
        if (p.grow > 0.0) != (p.prune > 0.0) {
            return Err(Error::Config(
                "grow and prune must both be possible or both disabled".into(),
            ));
        }
        Ok(())
    }

    /// Prior probability that a splittable node at `depth` splits.
    pub(crate) fn node_split_probability(&self, depth: usize, splittable: bool) -> f64 {
        if !splittable || self.max_depth.is_some_and(|m| depth >= m) {
            0.0
        } else {
            split_probability(depth, self)
        }
    }
}

/// `tau * (1 + depth)^(-gamma)`.
pub fn split_probability(depth: usize, config: &BartConfig) -> f64 {
    config.tau * (1.0 + depth as f64).powf(-config.gamma)
}
