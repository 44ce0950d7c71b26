//! Generate a synthetic trial with known principal strata and compare the
//! sample and population survivor average causal effects.
//!
//! cargo run --release --example simulate_trial

use sacebart::data::{classify_groups, ObservedGroup};
use sacebart::synth::{dgp_a, generate, oracle_sace};

fn main() -> sacebart::Result<()> {
    let spec = dgp_a(1000, 7);
    let (data, truth) = generate(&spec)?;
    let groups = classify_groups(&data);
    for g in [
        ObservedGroup::TreatedSurvived,
        ObservedGroup::TreatedDied,
        ObservedGroup::ControlSurvived,
        ObservedGroup::ControlDied,
    ] {
        let n = groups.iter().filter(|&&x| x == g).count();
        println!("{g}: {n}");
    }
    let oracle = oracle_sace(&spec, 1_000_000, 1)?;
    println!("sample SACE     {:.4}", truth.sample_sace);
    println!(
        "population SACE {:.4} (Monte Carlo se {:.4})",
        oracle.value, oracle.se
    );
    Ok(())
}
