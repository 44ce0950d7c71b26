use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::likelihood::{leaf_posterior, LeafStats};
use super::{BartConfig, DecisionRule, SplitIndex, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
}

impl MoveKind {
    fn slot(self) -> usize {
        match self {
            MoveKind::Grow => 0,
            MoveKind::Prune => 1,
            MoveKind::Change => 2,
        }
    }
}

/// Proposal and acceptance counts per move type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

impl MoveStats {
    fn record(&mut self, kind: MoveKind, accepted: bool) {
        self.proposed[kind.slot()] += 1;
        if accepted {
            self.accepted[kind.slot()] += 1;
        }
    }

    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let p = self.proposed[kind.slot()];
        if p == 0 {
            0.0
        } else {
            self.accepted[kind.slot()] as f64 / p as f64
        }
    }

    pub fn overall_rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            self.accepted.iter().sum::<u64>() as f64 / p as f64
        }
    }

    pub fn merge(&mut self, other: &MoveStats) {
        for s in 0..3 {
            self.proposed[s] += other.proposed[s];
            self.accepted[s] += other.accepted[s];
        }
    }
}

/// Reusable marker buffer for distinct-value counting.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    pub(crate) marks: Vec<u32>,
    pub(crate) seen: Vec<u32>,
    stamp: u32,
}

impl Scratch {
    pub(crate) fn next_stamp(&mut self, size: usize) -> u32 {
        if self.marks.len() < size {
            self.marks.resize(size, 0);
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
        self.stamp
    }
}

/// `min(1, exp(log_ratio))`.
pub fn mh_accept_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Rows reaching each node of the tree (all training rows, active or not).
pub(crate) fn node_rows(tree: &Tree, index: &SplitIndex) -> Vec<Vec<u32>> {
    let mut rows = vec![Vec::new(); tree.n_nodes()];
    rows[0] = (0..index.n_rows() as u32).collect();
    partition_subtree(tree, index, 0, &mut rows);
    rows
}

/// Push the rows of `id` down through its subtree, overwriting descendants.
fn partition_subtree(tree: &Tree, index: &SplitIndex, id: usize, rows: &mut [Vec<u32>]) {
    let mut stack = vec![id];
    while let Some(node) = stack.pop() {
        if let (Some((l, r)), Some(rule)) = (tree.children(node), tree.rule(node)) {
            let (left, right) = split_rows(index, &rows[node], rule);
            rows[l] = left;
            rows[r] = right;
            stack.push(l);
            stack.push(r);
        }
    }
}

fn split_rows(index: &SplitIndex, rows: &[u32], rule: DecisionRule) -> (Vec<u32>, Vec<u32>) {
    let mut left = Vec::with_capacity(rows.len());
    let mut right = Vec::with_capacity(rows.len());
    for &i in rows {
        if index.value(i, rule.var) <= rule.cut {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

fn active_stats(rows: &[u32], residuals: &[f64], active: &[bool]) -> LeafStats {
    let mut s = LeafStats::default();
    for &i in rows {
        if active[i as usize] {
            s.push(residuals[i as usize]);
        }
    }
    s
}

fn uniform_index<R: Rng + ?Sized>(len: usize, rng: &mut R) -> usize {
    rng.random_range(0..len)
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log prior of the part of a tree strictly below `id`, given the rows
/// reaching each node. `None` when some rule is not admissible for its rows.
fn subtree_log_prior(
    tree: &Tree,
    index: &SplitIndex,
    id: usize,
    rows: &[Vec<u32>],
    config: &BartConfig,
    scratch: &mut Scratch,
) -> Option<f64> {
    let mut total = 0.0;
    for node in tree.subtree(id).into_iter().skip(1) {
        let depth = tree.node(node).depth;
        let here = &rows[node];
        match tree.rule(node) {
            Some(rule) => {
                if !index.cut_is_available(here, rule.var, rule.cut) {
                    return None;
                }
                let p = config.node_split_probability(depth, true);
                let n_vars = index.available_vars(here).len();
                let n_cuts = index.n_distinct(here, rule.var, scratch) - 1;
                total += ln_or_neg_inf(p) - (n_vars as f64).ln() - (n_cuts as f64).ln();
            }
            None => {
                let p = config.node_split_probability(depth, index.splittable(here));
                total += (1.0 - p).ln();
            }
        }
    }
    Some(total)
}

/// One Metropolis-Hastings grow/prune/change step on `tree` with leaf values
/// integrated out, followed by a conjugate Gibbs draw of every leaf value.
///
/// `residuals` and `active` are indexed by training row; only active rows
/// contribute likelihood. Proposals that are impossible for the current tree
/// (for example pruning a root-only tree) count as rejections.
#[allow(clippy::too_many_arguments)]
pub fn update_tree<R: Rng + ?Sized>(
    tree: &mut Tree,
    index: &SplitIndex,
    residuals: &[f64],
    active: &[bool],
    sigma2: f64,
    config: &BartConfig,
    stats: &mut MoveStats,
    scratch: &mut Scratch,
    rng: &mut R,
) {
    let mut rows = node_rows(tree, index);
    update_tree_rows(
        tree, index, &mut rows, residuals, active, sigma2, config, stats, scratch, rng,
    );
}

/// As [`update_tree`], with `rows` holding the training rows reaching each
/// node of `tree` on entry and of the updated tree on return.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_tree_rows<R: Rng + ?Sized>(
    tree: &mut Tree,
    index: &SplitIndex,
    rows: &mut Vec<Vec<u32>>,
    residuals: &[f64],
    active: &[bool],
    sigma2: f64,
    config: &BartConfig,
    stats: &mut MoveStats,
    scratch: &mut Scratch,
    rng: &mut R,
) {
    debug_assert_eq!(residuals.len(), index.n_rows());
    debug_assert_eq!(active.len(), index.n_rows());
    debug_assert_eq!(rows.len(), tree.n_nodes());
    let leaf_var = config.leaf_prior_variance();
    let probs = config.move_probs;

    let u: f64 = rng.random();
    let kind = if u < probs.grow {
        MoveKind::Grow
    } else if u < probs.grow + probs.prune {
        MoveKind::Prune
    } else {
        MoveKind::Change
    };

    let accepted = match kind {
        MoveKind::Grow => propose_grow(
            tree, index, rows, residuals, active, sigma2, config, scratch, rng,
        ),
        MoveKind::Prune => propose_prune(tree, index, rows, residuals, active, sigma2, config, rng),
        MoveKind::Change => propose_change(
            tree, index, rows, residuals, active, sigma2, config, scratch, rng,
        ),
    };
    stats.record(kind, accepted);

    for leaf in tree.leaves() {
        let s = active_stats(&rows[leaf], residuals, active);
        let (mean, var) = leaf_posterior(&s, sigma2, leaf_var);
        let z: f64 = StandardNormal.sample(rng);
        tree.set_leaf_value(leaf, mean + var.sqrt() * z);
    }
}

#[allow(clippy::too_many_arguments)]
fn propose_grow<R: Rng + ?Sized>(
    tree: &mut Tree,
    index: &SplitIndex,
    rows: &mut Vec<Vec<u32>>,
    residuals: &[f64],
    active: &[bool],
    sigma2: f64,
    config: &BartConfig,
    scratch: &mut Scratch,
    rng: &mut R,
) -> bool {
    let leaf_var = config.leaf_prior_variance();
    let leaves = tree.leaves();
    let n_leaves = leaves.len();
    let leaf = leaves[uniform_index(n_leaves, rng)];
    let depth = tree.node(leaf).depth;
    let p_here = config.node_split_probability(depth, true);
    if p_here <= 0.0 {
        return false;
    }
    let vars = index.available_vars(&rows[leaf]);
    if vars.is_empty() {
        return false;
    }
    let var = vars[uniform_index(vars.len(), rng)];
    let cut = index.random_cut(&rows[leaf], var, scratch, rng);
    let rule = DecisionRule { var, cut };
    let (left, right) = split_rows(index, &rows[leaf], rule);

    let p_left = config.node_split_probability(depth + 1, index.splittable(&left));
    let p_right = config.node_split_probability(depth + 1, index.splittable(&right));

    let parent_was_prunable = tree.node(leaf).parent.is_some_and(|p| tree.is_prunable(p));
    let n_prunable_after = tree.prunable_nodes().len() + 1 - usize::from(parent_was_prunable);

    let s_here = active_stats(&rows[leaf], residuals, active);
    let s_left = active_stats(&left, residuals, active);
    let s_right = active_stats(&right, residuals, active);
    let log_lik = s_left.log_ml_core(sigma2, leaf_var) + s_right.log_ml_core(sigma2, leaf_var)
        - s_here.log_ml_core(sigma2, leaf_var);
    let log_prior = p_here.ln() + (1.0 - p_left).ln() + (1.0 - p_right).ln() - (1.0 - p_here).ln();
    let log_proposal = ln_or_neg_inf(config.move_probs.prune)
        - (n_prunable_after as f64).ln()
        - config.move_probs.grow.ln()
        + (n_leaves as f64).ln();

    let log_ratio = log_lik + log_prior + log_proposal;
    let accept = rng.random::<f64>() < mh_accept_probability(log_ratio);
    if accept {
        let (l, r) = tree.grow(leaf, rule);
        rows.resize(tree.n_nodes(), Vec::new());
        rows[l] = left;
        rows[r] = right;
    }
    accept
}

#[allow(clippy::too_many_arguments)]
fn propose_prune<R: Rng + ?Sized>(
    tree: &mut Tree,
    index: &SplitIndex,
    rows: &mut Vec<Vec<u32>>,
    residuals: &[f64],
    active: &[bool],
    sigma2: f64,
    config: &BartConfig,
    rng: &mut R,
) -> bool {
    let leaf_var = config.leaf_prior_variance();
    let prunable = tree.prunable_nodes();
    if prunable.is_empty() {
        return false;
    }
    let node = prunable[uniform_index(prunable.len(), rng)];
    let (l, r) = tree.children(node).expect("prunable node has children");
    let depth = tree.node(node).depth;
    let n_leaves_after = tree.n_leaves() - 1;

    let p_here = config.node_split_probability(depth, true);
    let p_left = config.node_split_probability(depth + 1, index.splittable(&rows[l]));
    let p_right = config.node_split_probability(depth + 1, index.splittable(&rows[r]));

    let s_here = active_stats(&rows[node], residuals, active);
    let s_left = active_stats(&rows[l], residuals, active);
    let s_right = active_stats(&rows[r], residuals, active);
    let log_lik = s_here.log_ml_core(sigma2, leaf_var)
        - s_left.log_ml_core(sigma2, leaf_var)
        - s_right.log_ml_core(sigma2, leaf_var);
    let log_prior =
        (1.0 - p_here).ln() - ln_or_neg_inf(p_here) - (1.0 - p_left).ln() - (1.0 - p_right).ln();
    let log_proposal =
        config.move_probs.grow.ln() - (n_leaves_after as f64).ln() - config.move_probs.prune.ln()
            + (prunable.len() as f64).ln();

    let log_ratio = log_lik + log_prior + log_proposal;
    let accept = rng.random::<f64>() < mh_accept_probability(log_ratio);
    if accept {
        tree.prune(node);
        *rows = node_rows(tree, index);
    }
    accept
}

#[allow(clippy::too_many_arguments)]
fn propose_change<R: Rng + ?Sized>(
    tree: &mut Tree,
    index: &SplitIndex,
    rows: &mut Vec<Vec<u32>>,
    residuals: &[f64],
    active: &[bool],
    sigma2: f64,
    config: &BartConfig,
    scratch: &mut Scratch,
    rng: &mut R,
) -> bool {
    let leaf_var = config.leaf_prior_variance();
    let internal = tree.internal_nodes();
    if internal.is_empty() {
        return false;
    }
    let node = internal[uniform_index(internal.len(), rng)];
    let vars = index.available_vars(&rows[node]);
    let var = vars[uniform_index(vars.len(), rng)];
    let cut = index.random_cut(&rows[node], var, scratch, rng);
    let new_rule = DecisionRule { var, cut };

    let leaves_below = |t: &Tree| -> Vec<usize> {
        t.subtree(node)
            .into_iter()
            .filter(|&n| t.node(n).is_leaf())
            .collect()
    };
    let log_lik_of = |rows: &[Vec<u32>], leaves: &[usize]| -> f64 {
        leaves
            .iter()
            .map(|&l| active_stats(&rows[l], residuals, active).log_ml_core(sigma2, leaf_var))
            .sum()
    };

    let old_leaves = leaves_below(tree);
    let old_lik = log_lik_of(rows, &old_leaves);
    let old_prior = subtree_log_prior(tree, index, node, rows, config, scratch)
        .expect("current tree satisfies its own prior");

    let old_rule = tree.rule(node).expect("internal node has a rule");
    let below: Vec<usize> = tree.subtree(node).into_iter().skip(1).collect();
    let saved: Vec<Vec<u32>> = below
        .iter()
        .map(|&n| std::mem::take(&mut rows[n]))
        .collect();
    tree.set_rule(node, new_rule);
    partition_subtree(tree, index, node, rows);
    let accept = match subtree_log_prior(tree, index, node, rows, config, scratch) {
        Some(new_prior) => {
            let new_lik = log_lik_of(rows, &old_leaves);
            let log_ratio = new_lik - old_lik + new_prior - old_prior;
            rng.random::<f64>() < mh_accept_probability(log_ratio)
        }
        None => false,
    };
    if !accept {
        tree.set_rule(node, old_rule);
        for (&n, r) in below.iter().zip(saved) {
            rows[n] = r;
        }
    }
    accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_likelihood_symmetric_proposal_always_accepts() {
        assert_eq!(mh_accept_probability(0.0), 1.0);
        assert_eq!(mh_accept_probability(3.0), 1.0);
        assert!((mh_accept_probability(-2f64.ln()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn prune_on_root_only_tree_is_a_counted_rejection() {
        let x = CovariateMatrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let index = SplitIndex::new(&x);
        let cfg = BartConfig {
            move_probs: super::super::MoveProbs {
                grow: 0.0,
                prune: 0.0,
                change: 1.0,
            },
            ..BartConfig::with_trees(2.0, 1)
        };
        let mut tree = Tree::leaf(0.0);
        let mut stats = MoveStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        update_tree(
            &mut tree,
            &index,
            &[0.0; 4],
            &[true; 4],
            1.0,
            &cfg,
            &mut stats,
            &mut Scratch::default(),
            &mut rng,
        );
        assert!(tree.is_root_only());
        assert_eq!(stats.proposed[2], 1);
        assert_eq!(stats.accepted[2], 0);
    }

    #[test]
    fn grown_children_are_never_empty() {
        let x = CovariateMatrix::new(
            6,
            2,
            vec![0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 3.0, 0.0, 4.0, 1.0, 5.0, 0.0],
        )
        .unwrap();
        let index = SplitIndex::new(&x);
        let cfg = BartConfig::with_trees(0.5, 1);
        let r = [3.0, 3.0, 3.0, -3.0, -3.0, -3.0];
        let mut tree = Tree::leaf(0.0);
        let mut stats = MoveStats::default();
        let mut scratch = Scratch::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2_000 {
            update_tree(
                &mut tree,
                &index,
                &r,
                &[true; 6],
                0.1,
                &cfg,
                &mut stats,
                &mut scratch,
                &mut rng,
            );
            let rows = node_rows(&tree, &index);
            for id in 0..tree.n_nodes() {
                assert!(!rows[id].is_empty(), "empty node {id} in {tree:?}");
            }
        }
        assert!(stats.accepted[0] > 0);
    }
}
