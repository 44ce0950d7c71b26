//! Draw trees from the BART prior and tabulate how often nodes at each
//! depth split.
//!
//! cargo run --release --example prior_trees

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sacebart::bart::{sample_prior_tree, split_probability, BartConfig, SplitIndex};
use sacebart::data::CovariateMatrix;

fn main() -> sacebart::Result<()> {
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|i| vec![i as f64, (i * 7 % 500) as f64])
        .collect();
    let index = SplitIndex::new(&CovariateMatrix::from_rows(&rows)?);
    let config = BartConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut nodes = [0usize; 4];
    let mut splits = [0usize; 4];
    let mut leaves = 0;
    let n_trees = 20_000;
    for _ in 0..n_trees {
        let tree = sample_prior_tree(&index, &config, &mut rng);
        leaves += tree.n_leaves();
        for node in tree.nodes() {
            if node.depth < 4 {
                nodes[node.depth] += 1;
                splits[node.depth] += usize::from(!node.is_leaf());
            }
        }
    }
    println!("mean leaves per tree {:.3}", leaves as f64 / n_trees as f64);
    for d in 0..4 {
        println!(
            "depth {d}: split frequency {:.4}, prior {:.4}",
            splits[d] as f64 / nodes[d].max(1) as f64,
            split_probability(d, &config)
        );
    }
    Ok(())
}
