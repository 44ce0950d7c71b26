use proptest::prelude::*;
use sacebart::data::CovariateMatrix;
use sacebart::diagnostics::{effective_sample_size, split_rhat};
use sacebart::estimands::{
    asd, csace_cdf, csace_cdf_grid, d_star, differential_effects, likely_sace_draws,
    likely_set_means, CsaceDraws, DifferentialMode, LikelySet,
};
use sacebart::sampler::strata_probabilities;
use sacebart::subgroup::{fit_cart, project_posterior, CartNode, CartParams};

/// CSACE draws for `n` units and `m` draws plus a non-empty likely set.
fn csace_and_likely() -> impl Strategy<Value = (CsaceDraws, LikelySet)> {
    (1usize..12, 1usize..30).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-10.0f64..10.0, n * m),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(values, mut keep)| {
                keep[0] = true;
                let units = (0..n).filter(|&i| keep[i]).collect();
                (
                    CsaceDraws::new(n, values).unwrap(),
                    LikelySet { p: 0.5, units },
                )
            })
    })
}

proptest! {
    #[test]
    fn stratum_probabilities_sum_to_one(mz in -40.0f64..40.0, mw in -40.0f64..40.0) {
        let (a, b, c) = strata_probabilities(mz, mw);
        prop_assert!([a, b, c].iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((a + b + c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn d_star_is_bounded_and_symmetric(m in 1usize..500, frac in 0.0f64..=1.0) {
        let below = ((m as f64) * frac).round() as usize;
        let v = d_star(below, m);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, d_star(m - below, m));
    }

    #[test]
    fn likely_means_agree((csace, likely) in csace_and_likely()) {
        let (of_means, mean_of) = likely_set_means(&csace, &likely);
        prop_assert!((of_means - mean_of).abs() < 1e-10);
    }

    #[test]
    fn cdf_is_monotone_and_matches_pointwise(
        (csace, likely) in csace_and_likely(),
        mut grid in prop::collection::vec(-12.0f64..12.0, 1..20),
    ) {
        grid.sort_by(f64::total_cmp);
        let h = csace_cdf_grid(&csace, &likely, &grid);
        for (k, &u) in grid.iter().enumerate() {
            prop_assert!((h[k] - csace_cdf(&csace, &likely, u)).abs() < 1e-12);
            if k > 0 {
                prop_assert!(h[k] >= h[k - 1]);
            }
        }
        prop_assert_eq!(csace_cdf(&csace, &likely, 11.0), 1.0);
    }

    #[test]
    fn constant_effects_sit_at_the_reference((csace, likely) in csace_and_likely(), c in -5i32..5) {
        let flat = CsaceDraws::new(csace.n_units(), vec![f64::from(c); csace.n_units() * csace.n_draws()]).unwrap();
        for mode in [DifferentialMode::PerDraw, DifferentialMode::PosteriorMean] {
            for e in differential_effects(&flat, &likely, mode) {
                prop_assert_eq!(e.d, 1.0);
                prop_assert_eq!(e.d_star, 1.0);
            }
        }
    }

    #[test]
    fn asd_is_symmetric_and_shift_invariant(
        a in prop::collection::vec(-5.0f64..5.0, 2..40),
        b in prop::collection::vec(-5.0f64..5.0, 2..40),
        shift in -100.0f64..100.0,
    ) {
        let v = asd(&a, &b).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v, asd(&b, &a).unwrap());
        let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
        let w = asd(&sa, &sb).unwrap();
        if v.is_finite() {
            prop_assert!((v - w).abs() < 1e-6 * (1.0 + v));
        }
    }

    #[test]
    fn ess_never_exceeds_the_draw_count(
        chains in (1usize..4, 4usize..80).prop_flat_map(|(m, n)| {
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), m)
        }),
    ) {
        let ess = effective_sample_size(&chains);
        let total: usize = chains.iter().map(Vec::len).sum();
        prop_assert!(ess.is_nan() || (ess > 0.0 && ess <= total as f64));
        let r = split_rhat(&chains);
        prop_assert!(r.is_nan() || r > 0.0);
    }

    #[test]
    fn cart_leaves_respect_min_leaf_and_reduce_error(
        rows in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 1..120),
        min_leaf in 1usize..15,
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let x = CovariateMatrix::from_rows(&rows.iter().map(|r| vec![r.0, r.1]).collect::<Vec<_>>()).unwrap();
        let params = CartParams { min_leaf, ..CartParams::default() };
        let tree = fit_cart(&y, &x, &[0, 1], &params).unwrap();
        prop_assert!(tree.sse <= tree.sst + 1e-9);
        let mut counts = vec![0usize; tree.nodes.len()];
        let mut sse = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let leaf = tree.leaf_of(x.row(i));
            counts[leaf] += 1;
            sse += (yi - tree.predict(x.row(i))).powi(2);
        }
        prop_assert!((sse - tree.sse).abs() < 1e-8 * (1.0 + tree.sst));
        for id in tree.leaves() {
            if let CartNode::Leaf { n, .. } = tree.nodes[id] {
                prop_assert_eq!(n, counts[id]);
                prop_assert!(tree.is_root_only() || n >= min_leaf);
            }
        }
    }

    #[test]
    fn leaf_projection_averages_back_to_the_likely_sace(
        (csace, likely) in csace_and_likely(),
        xs in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let x = CovariateMatrix::new(csace.n_units(), 1, xs[..csace.n_units()].to_vec()).unwrap();
        let means = csace.posterior_means();
        let y: Vec<f64> = likely.units.iter().map(|&i| means[i]).collect();
        let params = CartParams { min_leaf: 1, ..CartParams::default() };
        let tree = fit_cart(&y, &x.select_rows(&likely.units), &[0], &params).unwrap();
        let p = project_posterior(&csace, &likely, &tree, &x).unwrap();
        let overall = likely_sace_draws(&csace, &likely);
        for d in 0..csace.n_draws() {
            let weighted: f64 = p.leaves.iter().zip(&p.draws)
                .map(|(leaf, draws)| leaf.units.len() as f64 * draws[d])
                .sum::<f64>() / likely.len() as f64;
            prop_assert!((weighted - overall[d]).abs() < 1e-10);
        }
    }
}
