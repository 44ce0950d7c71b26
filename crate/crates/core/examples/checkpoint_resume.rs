//! Interrupt a chain, save a checkpoint, resume it and check that the draws
//! match an uninterrupted run exactly.
//!
//! cargo run --release --example checkpoint_resume

use sacebart::data::standardize;
use sacebart::sampler::{Chain, ChainConfig, Checkpoint};
use sacebart::synth::{dgp_a, generate};

fn main() -> sacebart::Result<()> {
    let (raw, _) = generate(&dgp_a(300, 1))?;
    let data = standardize(&raw)?;
    let config = ChainConfig {
        n_iter: 400,
        burn_in: 200,
        seed: 1,
        ..ChainConfig::default()
    };
    let straight = Chain::new(&data, &config, 0)?.finish()?;

    let dir = std::env::temp_dir().join("sacebart-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| sacebart::Error::io(&dir, e))?;
    let path = dir.join("chain0.json");
    let mut chain = Chain::new(&data, &config, 0)?;
    chain.run_until(250)?;
    chain.checkpoint().save(&path)?;
    drop(chain);

    let resumed = Chain::resume(&data, &Checkpoint::load(&path)?)?.finish()?;
    println!("checkpoint at iteration 250 written to {}", path.display());
    println!("draws identical: {}", resumed == straight);
    Ok(())
}
