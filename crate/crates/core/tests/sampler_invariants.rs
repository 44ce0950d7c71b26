use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sacebart::data::{standardize, ObservedGroup};
use sacebart::estimands::sace_draws;
use sacebart::parametric::{coefficient_posterior, update_linear_coefficients, LinearModelConfig};
use sacebart::sampler::{run_chain, strata_probabilities, Chain, ChainConfig, ModelKind, Stratum};
use sacebart::stats::{mean, sample_sd, sample_variance};
use sacebart::synth::{dgp_a, generate, null_dgp};

fn short(seed: u64) -> ChainConfig {
    ChainConfig {
        n_iter: 300,
        burn_in: 100,
        seed,
        init_restarts: 2,
        pilot_iters: 20,
        ..ChainConfig::default()
    }
}

#[test]
fn strata_probabilities_form_a_simplex() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let (mz, mw) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let (a, b, c) = strata_probabilities(mz, mw);
        for p in [a, b, c] {
            assert!((0.0..=1.0).contains(&p));
        }
        assert!((a + b + c - 1.0).abs() < 1e-12, "{mz} {mw}");
    }
}

#[test]
fn every_iteration_respects_observed_groups_and_latent_signs() {
    let (raw, _) = generate(&dgp_a(200, 3)).unwrap();
    let data = standardize(&raw).unwrap();
    for model in [ModelKind::Bart, ModelKind::Parametric] {
        let config = ChainConfig { model, ..short(3) };
        let mut chain = Chain::new(&data, &config, 0).unwrap();
        for it in 1..=60 {
            chain.run_until(it).unwrap();
            let st = chain.state();
            for i in 0..data.n_units() {
                let s = st.strata()[i];
                match data.group(i) {
                    ObservedGroup::TreatedDied => assert_eq!(s, Stratum::NeverSurvivor),
                    ObservedGroup::ControlSurvived => assert_eq!(s, Stratum::AlwaysSurvivor),
                    ObservedGroup::TreatedSurvived => assert_ne!(s, Stratum::NeverSurvivor),
                    ObservedGroup::ControlDied => assert_ne!(s, Stratum::AlwaysSurvivor),
                }
                assert_eq!(st.z()[i] >= 0.0, s == Stratum::NeverSurvivor);
                match (s, st.w()[i]) {
                    (Stratum::NeverSurvivor, w) => assert!(w.is_none()),
                    (Stratum::Protected, Some(w)) => assert!(w >= 0.0),
                    (Stratum::AlwaysSurvivor, Some(w)) => assert!(w < 0.0),
                    (s, w) => panic!("stratum {s} with latent {w:?}"),
                }
            }
        }
    }
}

#[test]
fn retained_draws_follow_burn_in_and_thinning() {
    let (raw, _) = generate(&dgp_a(150, 4)).unwrap();
    let data = standardize(&raw).unwrap();
    let config = ChainConfig {
        n_iter: 61,
        burn_in: 10,
        thin: 5,
        ..short(4)
    };
    let draws = run_chain(&data, &config).unwrap();
    assert_eq!(draws.n_draws(), 10);
    assert_eq!(draws.n_draws(), config.n_retained());
    assert_eq!(
        draws.iteration,
        (0..10).map(|k| 14 + 5 * k).collect::<Vec<_>>()
    );
    for d in 0..draws.n_draws() {
        for i in 0..data.n_units() {
            let s = draws.strata_of(d)[i];
            match data.group(i) {
                ObservedGroup::TreatedDied => assert_eq!(s, Stratum::NeverSurvivor),
                ObservedGroup::ControlSurvived => assert_eq!(s, Stratum::AlwaysSurvivor),
                _ => {}
            }
        }
    }
}

#[test]
fn zero_iterations_past_the_current_one_change_nothing() {
    let (raw, _) = generate(&dgp_a(100, 5)).unwrap();
    let data = standardize(&raw).unwrap();
    let mut chain = Chain::new(&data, &short(5), 0).unwrap();
    chain.run_until(7).unwrap();
    let before = chain.checkpoint();
    chain.run_until(7).unwrap();
    assert_eq!(chain.checkpoint(), before);
}

#[test]
fn null_effect_intervals_cover_zero() {
    let mut covered = 0;
    let mut means = Vec::new();
    for seed in 1..=20u64 {
        let (raw, _) = generate(&null_dgp(500, seed)).unwrap();
        let sd = sample_sd(&raw.observed_outcomes());
        let data = standardize(&raw).unwrap();
        let config = ChainConfig {
            n_iter: 1500,
            burn_in: 500,
            seed,
            ..ChainConfig::default()
        };
        let s = sace_draws(&run_chain(&data, &config).unwrap())
            .summary()
            .unwrap();
        covered += usize::from(s.contains(0.0));
        means.push(s.mean / sd);
    }
    assert!(
        covered >= 18,
        "covered {covered}/20, standardized means {means:?}"
    );
}

#[test]
fn linear_coefficient_draws_match_the_closed_form() {
    let n = 40;
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (i as f64 / 10.0).sin(),
        _ => (i % 3) as f64 - 1.0,
    });
    let y: Vec<f64> = (0..n)
        .map(|i| 0.5 + design[(i, 1)] - 0.7 * design[(i, 2)])
        .collect();
    let config = LinearModelConfig::default();
    let sigma2 = 0.3;
    let (want_mean, want_cov) = coefficient_posterior(&design, &y, sigma2, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<Vec<f64>> = (0..100_000)
        .map(|_| update_linear_coefficients(&design, &y, sigma2, &config, &mut rng).unwrap())
        .collect();
    for k in 0..3 {
        let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (m, v) = (mean(&col), sample_variance(&col));
        assert!(
            (m - want_mean[k]).abs() <= 0.02 * want_mean[k].abs(),
            "coef {k}: {m} vs {}",
            want_mean[k]
        );
        assert!(
            (v / want_cov[(k, k)] - 1.0).abs() < 0.02,
            "coef {k}: var {v} vs {}",
            want_cov[(k, k)]
        );
    }
}
