//! The nested probit mapping from the two membership means to the three
//! principal strata probabilities.
//!
//! cargo run --release --example strata_probabilities

use sacebart::sampler::{strata_probabilities, SIGN_CONVENTION};

fn main() {
    println!("{SIGN_CONVENTION}");
    println!(
        "{:>6} {:>6} {:>8} {:>8} {:>8}",
        "mZ", "mW", "pi00", "pi10", "pi11"
    );
    for mz in [-2.0, -0.7, 0.0, 1.0] {
        for mw in [-1.0, 0.0, 1.0] {
            let (p00, p10, p11) = strata_probabilities(mz, mw);
            println!("{mz:>6.2} {mw:>6.2} {p00:>8.4} {p10:>8.4} {p11:>8.4}");
        }
    }
}
