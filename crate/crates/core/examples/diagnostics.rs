//! Run several chains and check convergence with split R-hat, effective
//! sample sizes and tree-move acceptance rates.
//!
//! cargo run --release --example diagnostics

use sacebart::data::standardize;
use sacebart::diagnostics::diagnose;
use sacebart::sampler::{run_chains, ChainConfig};
use sacebart::synth::{dgp_a, generate};

fn main() -> sacebart::Result<()> {
    let (raw, _) = generate(&dgp_a(600, 8))?;
    let data = standardize(&raw)?;
    let config = ChainConfig {
        n_iter: 1200,
        burn_in: 600,
        seed: 8,
        ..ChainConfig::default()
    };
    let draws = run_chains(&data, &config, 3)?;
    let d = diagnose(&draws);
    println!("{} chains, {} retained draws", d.n_chains, draws.n_draws());
    for s in &d.series {
        println!(
            "{:<11} mean {:>8.4}  rhat {:.3}  ess {:>6.0}",
            s.name, s.mean, s.rhat, s.ess
        );
    }
    for a in &d.acceptance {
        println!(
            "forest {:<3} grow {:.3} prune {:.3} change {:.3} overall {:.3}",
            a.forest, a.grow, a.prune, a.change, a.overall
        );
    }
    Ok(())
}
