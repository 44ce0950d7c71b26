//! Plain sum-of-trees regression of a noisy sine curve.
//!
//! cargo run --release --example bart_regression

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sacebart::bart::BartConfig;
use sacebart::data::CovariateMatrix;
use sacebart::sampler::bart_regression;

fn main() -> sacebart::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let xs: Vec<f64> = (0..400).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y: Vec<f64> = xs
        .iter()
        .map(|x| x.sin() + noise.sample(&mut rng))
        .collect();
    let x = CovariateMatrix::from_rows(&xs.iter().map(|&v| vec![v]).collect::<Vec<_>>())?;
    let grid: Vec<f64> = (0..13).map(|k| -3.0 + 0.5 * k as f64).collect();
    let x_test = CovariateMatrix::from_rows(&grid.iter().map(|&v| vec![v]).collect::<Vec<_>>())?;
    let fit = bart_regression(
        &x,
        &y,
        &x_test,
        &BartConfig::default(),
        1000,
        500,
        0.001,
        0.001,
        &mut rng,
    )?;
    println!("{:>6} {:>8} {:>8}", "x", "sin(x)", "bart");
    for (g, f) in grid.iter().zip(&fit) {
        println!("{g:>6.2} {:>8.3} {f:>8.3}", g.sin());
    }
    Ok(())
}
