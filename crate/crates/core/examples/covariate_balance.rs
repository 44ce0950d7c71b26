//! Covariate balance between the likely always-survivors and the latent
//! always-survivor stratum, and across the three imputed strata.
//!
//! cargo run --release --example covariate_balance

use sacebart::data::standardize;
use sacebart::estimands::{balance_report, choose_p, membership_posterior, p_grid, LikelySet};
use sacebart::sampler::{run_chain, ChainConfig};
use sacebart::synth::{dgp_a, generate};

fn main() -> sacebart::Result<()> {
    let (raw, _) = generate(&dgp_a(800, 9))?;
    let data = standardize(&raw)?;
    let config = ChainConfig {
        n_iter: 1500,
        burn_in: 750,
        seed: 9,
        ..ChainConfig::default()
    };
    let draws = run_chain(&data, &config)?;
    let membership = membership_posterior(&draws)?;
    let likely = LikelySet::build(&membership, choose_p(&membership, &p_grid())?)?;
    let report = balance_report(&draws, &likely, &data)?;
    println!(
        "{:<4} {:>8} {:>8} {:>6} {:>8} {:>8} {:>8} {:>9}",
        "", "likely", "latent", "ASD", "00", "10", "11", "max ASD"
    );
    for r in &report.rows {
        println!(
            "{:<4} {:>8.3} {:>8.3} {:>6.3} {:>8.3} {:>8.3} {:>8.3} {:>9.3}",
            r.covariate,
            r.likely_mean,
            r.latent_mean,
            r.asd,
            r.stratum_means[0],
            r.stratum_means[1],
            r.stratum_means[2],
            r.max_pairwise_asd
        );
    }
    Ok(())
}
