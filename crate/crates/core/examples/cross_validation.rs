//! Pick the leaf prior scale and number of trees by K-fold cross-validation
//! on the observed outcomes.
//!
//! cargo run --release --example cross_validation

use sacebart::data::standardize;
use sacebart::sampler::{cross_validate, CvConfig};
use sacebart::synth::{dgp_b, generate};

fn main() -> sacebart::Result<()> {
    let (raw, _) = generate(&dgp_b(600, 2))?;
    let data = standardize(&raw)?;
    let config = CvConfig {
        w_grid: vec![1.0, 2.0, 4.0],
        n_trees_grid: vec![20, 50],
        sweeps: 300,
        burn_in: 150,
        seed: 2,
        ..CvConfig::default()
    };
    let cv = cross_validate(&data, &config)?;
    for c in &cv.cells {
        println!("w = {:<4} J = {:<4} rmse {:.4}", c.w, c.n_trees, c.rmse);
    }
    println!("chosen: w = {}, J = {}", cv.w, cv.n_trees);
    Ok(())
}
