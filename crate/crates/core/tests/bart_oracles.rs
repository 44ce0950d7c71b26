use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sacebart::bart::{
    log_marginal_likelihood, sample_prior_forest, sample_prior_tree, split_probability,
    update_tree, BartConfig, DecisionRule, ForestFit, MoveStats, Node, NodeKind, Scratch,
    SplitIndex, Tree,
};
use sacebart::data::CovariateMatrix;
use sacebart::stats::{mean, sample_truncated_above, sample_truncated_below, sample_variance};

fn column(xs: &[f64]) -> CovariateMatrix {
    CovariateMatrix::new(xs.len(), 1, xs.to_vec()).unwrap()
}

#[test]
fn frozen_root_leaf_draws_match_the_conjugate_posterior() {
    let n = 50;
    let sigma2: f64 = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, sigma2.sqrt()).unwrap();
    let residuals: Vec<f64> = (0..n).map(|_| 1.0 + noise.sample(&mut rng)).collect();
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let index = SplitIndex::new(&column(&xs));
    // tau = 0 keeps the tree at its root.
    let config = BartConfig {
        tau: 0.0,
        n_trees: 1,
        ..BartConfig::default()
    };
    let prec = n as f64 / sigma2 + 4.0 * config.w * config.w;
    let want_mean = residuals.iter().sum::<f64>() / sigma2 / prec;
    let want_var = 1.0 / prec;

    let mut tree = Tree::leaf(0.0);
    let mut stats = MoveStats::default();
    let mut scratch = Scratch::default();
    let active = vec![true; n];
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            update_tree(
                &mut tree,
                &index,
                &residuals,
                &active,
                sigma2,
                &config,
                &mut stats,
                &mut scratch,
                &mut rng,
            );
            assert!(tree.is_root_only());
            tree.leaf_value(0).unwrap()
        })
        .collect();
    let (m, v) = (mean(&draws), sample_variance(&draws));
    assert!(
        (m / want_mean - 1.0).abs() < 0.02,
        "mean {m} want {want_mean}"
    );
    assert!((v / want_var - 1.0).abs() < 0.02, "var {v} want {want_var}");
}

#[test]
fn zero_residual_leaf_draws_are_centred() {
    let n = 20;
    let index = SplitIndex::new(&column(&(0..n).map(|i| i as f64).collect::<Vec<_>>()));
    let config = BartConfig {
        tau: 0.0,
        n_trees: 1,
        ..BartConfig::default()
    };
    let want_var = 1.0 / (n as f64 + 4.0 * config.w * config.w);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tree = Tree::leaf(0.0);
    let (mut stats, mut scratch) = (MoveStats::default(), Scratch::default());
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            update_tree(
                &mut tree,
                &index,
                &vec![0.0; n],
                &vec![true; n],
                1.0,
                &config,
                &mut stats,
                &mut scratch,
                &mut rng,
            );
            tree.leaf_value(0).unwrap()
        })
        .collect();
    assert!(mean(&draws).abs() < 4.0 * (want_var / 1e4).sqrt());
    assert!((sample_variance(&draws) / want_var - 1.0).abs() < 0.03);
}

#[test]
fn prior_split_frequencies_match_tau_depth_penalty() {
    let xs: Vec<f64> = (0..2000).map(|i| i as f64).collect();
    let index = SplitIndex::new(&column(&xs));
    let config = BartConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nodes = [0u64; 3];
    let mut splits = [0u64; 3];
    for _ in 0..100_000 {
        let tree = sample_prior_tree(&index, &config, &mut rng);
        for node in tree.nodes().iter().filter(|n| n.depth < 3) {
            nodes[node.depth] += 1;
            splits[node.depth] += u64::from(!node.is_leaf());
        }
    }
    for d in 0..3 {
        let p = split_probability(d, &config);
        let freq = splits[d] as f64 / nodes[d] as f64;
        let se = (p * (1.0 - p) / nodes[d] as f64).sqrt();
        assert!(
            (freq - p).abs() < 3.0 * se,
            "depth {d}: {freq} vs {p} (se {se})"
        );
    }
}

#[test]
fn root_only_forest_prior_variance_is_one_over_four_w_squared() {
    let index = SplitIndex::new(&column(&[0.0, 1.0, 2.0]));
    let config = BartConfig {
        tau: 0.0,
        w: 2.0,
        n_trees: 50,
        ..BartConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let preds: Vec<f64> = (0..20_000)
        .map(|_| {
            sample_prior_forest(&index, &config, &mut rng)
                .predict(&[1.0])
                .unwrap()
        })
        .collect();
    let want = 1.0 / (4.0 * config.w * config.w);
    assert!((sample_variance(&preds) / want - 1.0).abs() < 0.05);
}

/// All trees of depth at most two on a single covariate whose values are
/// `0..n`, with their prior probabilities.
fn enumerate_trees(n: usize, config: &BartConfig) -> Vec<(Tree, f64)> {
    let p0 = split_probability(0, config);
    let p1 = split_probability(1, config);
    let leaf = |depth, parent| Node {
        depth,
        parent,
        kind: NodeKind::Leaf { value: 0.0 },
    };
    let split = |depth, parent, cut, left, right| Node {
        depth,
        parent,
        kind: NodeKind::Split {
            rule: DecisionRule { var: 0, cut },
            left,
            right,
        },
    };
    // Options for a depth-1 child holding `m` consecutive values from `lo`:
    // stay a leaf or split at one of its `m - 1` cuts.
    let child_options = |lo: usize, m: usize| -> Vec<(Option<f64>, f64)> {
        if m < 2 {
            return vec![(None, 1.0)];
        }
        let mut out = vec![(None, 1.0 - p1)];
        out.extend((0..m - 1).map(|k| (Some((lo + k) as f64), p1 / (m - 1) as f64)));
        out
    };
    let mut trees = vec![(Tree::leaf(0.0), 1.0 - p0)];
    for c in 0..n - 1 {
        let prior_root = p0 / (n - 1) as f64;
        let (n_left, n_right) = (c + 1, n - c - 1);
        for (lcut, lp) in child_options(0, n_left) {
            for (rcut, rp) in child_options(c + 1, n_right) {
                let mut nodes = vec![
                    split(0, None, c as f64, 1, 2),
                    leaf(1, Some(0)),
                    leaf(1, Some(0)),
                ];
                for (slot, cut) in [(1usize, lcut), (2usize, rcut)] {
                    if let Some(cut) = cut {
                        let (l, r) = (nodes.len(), nodes.len() + 1);
                        nodes[slot] = split(1, Some(0), cut, l, r);
                        nodes.push(leaf(2, Some(slot)));
                        nodes.push(leaf(2, Some(slot)));
                    }
                }
                trees.push((Tree::from_nodes(nodes).unwrap(), prior_root * lp * rp));
            }
        }
    }
    trees
}

#[test]
fn tree_chain_matches_enumerated_depth_posterior() {
    let n = 10;
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let x = column(&xs);
    let index = SplitIndex::new(&x);
    let config = BartConfig {
        n_trees: 1,
        w: 1.0,
        max_depth: Some(2),
        ..BartConfig::default()
    };
    let sigma2 = 0.05;
    let residuals = [-0.3, -0.25, -0.35, -0.3, 0.1, 0.05, 0.12, 0.4, 0.35, 0.42];

    let trees = enumerate_trees(n, &config);
    let total_prior: f64 = trees.iter().map(|t| t.1).sum();
    assert!((total_prior - 1.0).abs() < 1e-12);
    let logs: Vec<f64> = trees
        .iter()
        .map(|(t, p)| p.ln() + log_marginal_likelihood(t, &x, &residuals, sigma2, &config).unwrap())
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut exact = [0.0; 3];
    for ((t, _), w) in trees.iter().zip(&weights) {
        exact[t.depth()] += w / z;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tree = Tree::leaf(0.0);
    let (mut stats, mut scratch) = (MoveStats::default(), Scratch::default());
    let active = vec![true; n];
    let mut counts = [0usize; 3];
    let (burn, keep) = (2_000, 200_000);
    for it in 0..burn + keep {
        update_tree(
            &mut tree,
            &index,
            &residuals,
            &active,
            sigma2,
            &config,
            &mut stats,
            &mut scratch,
            &mut rng,
        );
        if it >= burn {
            counts[tree.depth()] += 1;
        }
    }
    let tv: f64 = (0..3)
        .map(|d| (counts[d] as f64 / keep as f64 - exact[d]).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.05, "tv {tv}: chain {counts:?}, exact {exact:?}");
}

#[test]
fn backfitting_recovers_a_linear_response() {
    let n = 100;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let y: Vec<f64> = xs.iter().map(|x| x - 0.5).collect();
    let index = SplitIndex::new(&column(&xs));
    let config = BartConfig::default();
    let mut fit = ForestFit::empty(&index, &config);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let active = vec![true; n];
    let mut avg = vec![0.0; n];
    for sweep in 0..500 {
        fit.backfit_sweep(&index, &y, &active, 0.01, &config, &mut rng)
            .unwrap();
        if sweep >= 250 {
            avg.iter_mut()
                .zip(fit.fitted())
                .for_each(|(a, f)| *a += f / 250.0);
        }
    }
    let rmse = (avg
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    assert!(rmse < 0.1, "rmse {rmse}");
}

#[test]
fn probit_fit_crosses_zero_at_the_separating_cut() {
    let n = 200;
    let xs: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect();
    let positive: Vec<bool> = xs.iter().map(|&x| x > 0.0).collect();
    let index = SplitIndex::new(&column(&xs));
    let config = BartConfig::default();
    let mut fit = ForestFit::empty(&index, &config);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let active = vec![true; n];
    let mut latent = vec![0.0; n];
    let mut avg = vec![0.0; n];
    for sweep in 0..500 {
        for i in 0..n {
            let m = fit.fitted()[i];
            latent[i] = if positive[i] {
                sample_truncated_above(m, 0.0, &mut rng)
            } else {
                sample_truncated_below(m, 0.0, &mut rng)
            };
        }
        fit.probit_sweep(&index, &latent, &active, &config, &mut rng)
            .unwrap();
        if sweep >= 250 {
            avg.iter_mut()
                .zip(fit.fitted())
                .for_each(|(a, f)| *a += f / 250.0);
        }
    }
    let crossing = (1..n)
        .find(|&i| avg[i - 1] <= 0.0 && avg[i] > 0.0)
        .map(|i| 0.5 * (xs[i - 1] + xs[i]));
    let crossing = crossing.expect("fit changes sign");
    assert!(crossing.abs() <= 0.2, "crossing at {crossing}");
    assert!(avg[0] < 0.0 && avg[n - 1] > 0.0);
}
