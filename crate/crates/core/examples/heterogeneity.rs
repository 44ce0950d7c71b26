//! Effect heterogeneity among the likely always-survivors: choice of the
//! membership threshold, the distribution of conditional effects, differential
//! effects and the probability of benefit.
//!
//! cargo run --release --example heterogeneity

use sacebart::data::standardize;
use sacebart::estimands::{
    benefit_probabilities, choose_p, csace_density, differential_effects, evidence_bands,
    likely_sace_draws, likely_set_means, membership_posterior, p_grid, CsaceDraws,
    DifferentialMode, LikelySet, DEFAULT_THRESHOLDS, EVIDENCE_LEVELS,
};
use sacebart::sampler::{run_chain, ChainConfig};
use sacebart::stats::Interval;
use sacebart::synth::{dgp_b, generate};

fn main() -> sacebart::Result<()> {
    let (raw, _) = generate(&dgp_b(800, 4))?;
    let data = standardize(&raw)?;
    let config = ChainConfig {
        n_iter: 1500,
        burn_in: 750,
        seed: 4,
        ..ChainConfig::default()
    };
    let draws = run_chain(&data, &config)?;

    let membership = membership_posterior(&draws)?;
    let p = choose_p(&membership, &p_grid())?;
    let likely = LikelySet::build(&membership, p)?;
    println!(
        "marginal P(always-survivor) {:.3}; p = {p}, {} likely units",
        membership.marginal_always,
        likely.len()
    );

    let csace = CsaceDraws::from_draws(&draws)?;
    let s = Interval::from_draws(&likely_sace_draws(&csace, &likely));
    let (of_means, _) = likely_set_means(&csace, &likely);
    println!(
        "likely-set SACE {:.3} [{:.3}, {:.3}]; mean of unit means {:.3}",
        s.mean, s.lower, s.upper, of_means
    );

    let density = csace_density(&csace, &likely, None);
    let peak = density
        .density
        .iter()
        .zip(&density.grid)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, u)| *u)
        .unwrap_or(f64::NAN);
    println!(
        "CSACE density mode {peak:.3}, bandwidth {:.4}",
        density.bandwidth
    );

    let effects = differential_effects(&csace, &likely, DifferentialMode::PerDraw);
    for (level, frac) in evidence_bands(&effects, &likely, &EVIDENCE_LEVELS) {
        println!("D* > {level}: {:.1}% of likely units", 100.0 * frac);
    }

    let benefit = benefit_probabilities(&csace, &likely, &DEFAULT_THRESHOLDS)?;
    println!(
        "share with negative effect Q: {:.3} [{:.3}, {:.3}]",
        benefit.q_summary.mean, benefit.q_summary.lower, benefit.q_summary.upper
    );
    for (t, frac) in &benefit.tabulation {
        println!("P(CSACE < 0) > {t}: {:.1}% of likely units", 100.0 * frac);
    }
    Ok(())
}
