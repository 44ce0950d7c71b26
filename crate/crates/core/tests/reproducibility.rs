use sacebart::data::standardize;
use sacebart::io::{read_draws, write_draws, OutputMeta};
use sacebart::sampler::{run_chains, Chain, ChainConfig, Checkpoint, ModelKind};
use sacebart::synth::{dgp_a, generate};

fn config(seed: u64) -> ChainConfig {
    ChainConfig {
        n_iter: 120,
        burn_in: 40,
        thin: 2,
        seed,
        init_restarts: 2,
        pilot_iters: 10,
        ..ChainConfig::default()
    }
}

#[test]
fn same_seed_gives_bitwise_identical_draws() {
    let (raw, _) = generate(&dgp_a(150, 1)).unwrap();
    let data = standardize(&raw).unwrap();
    let a = run_chains(&data, &config(9), 2).unwrap();
    let b = run_chains(&data, &config(9), 2).unwrap();
    assert_eq!(a, b);
    let c = run_chains(&data, &config(10), 2).unwrap();
    assert_ne!(a.m111, c.m111);
}

#[test]
fn thread_count_does_not_change_draws() {
    let (raw, _) = generate(&dgp_a(120, 2)).unwrap();
    let data = standardize(&raw).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_chains(&data, &config(3), 3).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn resumed_chains_match_uninterrupted_runs() {
    let (raw, _) = generate(&dgp_a(150, 3)).unwrap();
    let data = standardize(&raw).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for model in [ModelKind::Bart, ModelKind::Parametric] {
        let cfg = ChainConfig { model, ..config(4) };
        let straight = Chain::new(&data, &cfg, 1).unwrap().finish().unwrap();
        for stop in [0, 25, 41, 119] {
            let path = dir.path().join(format!("{model:?}-{stop}.json"));
            let mut chain = Chain::new(&data, &cfg, 1).unwrap();
            chain.run_until(stop).unwrap();
            chain.checkpoint().save(&path).unwrap();
            drop(chain);
            let resumed = Chain::resume(&data, &Checkpoint::load(&path).unwrap())
                .unwrap()
                .finish()
                .unwrap();
            assert_eq!(resumed, straight, "{model:?} stopped at {stop}");
        }
    }
}

#[test]
fn resume_rejects_a_different_dataset() {
    let (raw, _) = generate(&dgp_a(100, 5)).unwrap();
    let data = standardize(&raw).unwrap();
    let mut chain = Chain::new(&data, &config(5), 0).unwrap();
    chain.run_until(5).unwrap();
    let checkpoint = chain.checkpoint();
    let (other, _) = generate(&dgp_a(100, 6)).unwrap();
    assert!(Chain::resume(&standardize(&other).unwrap(), &checkpoint).is_err());
}

#[test]
fn draws_survive_a_disk_round_trip() {
    let (raw, _) = generate(&dgp_a(80, 7)).unwrap();
    let data = standardize(&raw).unwrap();
    let draws = run_chains(&data, &config(7), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = OutputMeta::new(
        serde_json::json!({"n_iter": 120}),
        draws.seeds.clone(),
        false,
    );
    write_draws(dir.path(), &draws, &meta).unwrap();
    let (back, header) = read_draws(dir.path()).unwrap();
    assert_eq!(back, draws);
    assert_eq!(header.meta, meta);
    assert_eq!(header.retained_per_chain, vec![40, 40]);
}
