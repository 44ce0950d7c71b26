use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::update::Scratch;
use super::{BartConfig, DecisionRule, Forest, SplitIndex, Tree};

/// Draw a tree from the prior: each node splits with the depth-dependent
/// probability, the split variable is uniform over covariates with an
/// admissible cut and the cut is uniform over the admissible values.
pub fn sample_prior_tree<R: Rng + ?Sized>(
    index: &SplitIndex,
    config: &BartConfig,
    rng: &mut R,
) -> Tree {
    let mut scratch = Scratch::default();
    let leaf = Normal::new(0.0, config.leaf_prior_variance().sqrt()).expect("finite leaf sd");
    let mut tree = Tree::leaf(0.0);
    let mut pending = vec![(0usize, (0..index.n_rows() as u32).collect::<Vec<_>>())];
    while let Some((node, rows)) = pending.pop() {
        let depth = tree.node(node).depth;
        let p = config.node_split_probability(depth, index.splittable(&rows));
        if rng.random::<f64>() < p {
            let vars = index.available_vars(&rows);
            let var = vars[rng.random_range(0..vars.len())];
            let cuts = index.available_cuts(&rows, var, &mut scratch);
            let cut = cuts[rng.random_range(0..cuts.len())];
            let (l, r) = tree.grow(node, DecisionRule { var, cut });
            let (left, right): (Vec<u32>, Vec<u32>) =
                rows.iter().partition(|&&i| index.value(i, var) <= cut);
            pending.push((r, right));
            pending.push((l, left));
        } else {
            tree.set_leaf_value(node, leaf.sample(rng));
        }
    }
    tree
}

pub fn sample_prior_forest<R: Rng + ?Sized>(
    index: &SplitIndex,
    config: &BartConfig,
    rng: &mut R,
) -> Forest {
    Forest::from_trees(
        (0..config.n_trees)
            .map(|_| sample_prior_tree(index, config, rng))
            .collect(),
    )
}
