//! Compare the BART mixture with the all-linear mixture on a trial whose
//! membership and outcome surfaces are nonlinear.
//!
//! cargo run --release --example parametric_baseline

use sacebart::data::standardize;
use sacebart::estimands::{sace_draws, CsaceDraws};
use sacebart::parametric::run_chain_parametric;
use sacebart::sampler::{run_chain, ChainConfig, PosteriorDraws};
use sacebart::synth::{dgp_b, generate};

fn csace_rmse(draws: &PosteriorDraws, truth: &[f64]) -> sacebart::Result<f64> {
    let means = CsaceDraws::from_draws(draws)?.posterior_means();
    let sse: f64 = means
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / truth.len() as f64).sqrt())
}

fn main() -> sacebart::Result<()> {
    let (raw, truth) = generate(&dgp_b(1000, 5))?;
    let data = standardize(&raw)?;
    let config = ChainConfig {
        n_iter: 2000,
        burn_in: 1000,
        seed: 5,
        ..ChainConfig::default()
    };
    let bart = run_chain(&data, &config)?;
    let linear = run_chain_parametric(&data, &config)?;
    println!("sample SACE {:.3}", truth.sample_sace);
    for (name, draws) in [("bart", &bart), ("parametric", &linear)] {
        let s = sace_draws(draws).summary()?;
        println!(
            "{name:>10}: SACE {:.3} [{:.3}, {:.3}], CSACE RMSE {:.3}",
            s.mean,
            s.lower,
            s.upper,
            csace_rmse(draws, &truth.csace)?
        );
    }
    Ok(())
}
