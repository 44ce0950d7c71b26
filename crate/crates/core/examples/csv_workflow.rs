//! Write a trial to CSV, load it back against a covariate schema, standardize
//! the continuous covariates and map values back to the natural scale.
//!
//! cargo run --release --example csv_workflow

use sacebart::data::{load_dataset, standardize, write_dataset, CovariateKind, CovariateSpec};
use sacebart::synth::{dgp_a, generate};

fn main() -> sacebart::Result<()> {
    let (data, _) = generate(&dgp_a(200, 3))?;
    let dir = std::env::temp_dir().join("sacebart-csv-example");
    let path = dir.join("trial.csv");
    std::fs::create_dir_all(&dir).map_err(|e| sacebart::Error::io(&dir, e))?;
    write_dataset(&data, &path)?;

    let schema = CovariateSpec::new(vec![
        ("X1".into(), CovariateKind::Continuous),
        ("X2".into(), CovariateKind::Continuous),
        ("X3".into(), CovariateKind::Binary),
        ("X4".into(), CovariateKind::Continuous),
    ]);
    let loaded = load_dataset(&path, &schema)?;
    let std = standardize(&loaded)?;
    println!(
        "{} units, {} observed outcomes",
        std.n_units(),
        std.observed_outcomes().len()
    );
    let spec = std.spec();
    for k in 0..spec.len() {
        let col = std.covariates().column(k);
        let z = col[0];
        println!(
            "{:<3} {:?}: first unit {:.3} working, {:.3} natural",
            spec.names[k],
            spec.kinds[k],
            z,
            spec.to_natural(k, z)
        );
    }
    Ok(())
}
