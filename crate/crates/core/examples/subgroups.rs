//! Fit-the-fit subgroup search: a regression tree of posterior-mean
//! conditional effects, with covariates added stepwise, and the posterior of
//! each leaf's average effect.
//!
//! cargo run --release --example subgroups

use sacebart::data::standardize;
use sacebart::estimands::{choose_p, membership_posterior, p_grid, CsaceDraws, LikelySet};
use sacebart::sampler::{run_chain, ChainConfig};
use sacebart::subgroup::{stepwise_fit_the_fit, ReportNode, StepwiseParams};
use sacebart::synth::{generate, moderated_dgp};

fn print_node(node: &ReportNode, indent: usize) {
    let pad = "  ".repeat(indent);
    match node {
        ReportNode::Split {
            covariate,
            cut_natural,
            left,
            right,
            ..
        } => {
            println!("{pad}{covariate} <= {cut_natural:.3}");
            print_node(left, indent + 1);
            println!("{pad}{covariate} > {cut_natural:.3}");
            print_node(right, indent + 1);
        }
        ReportNode::Leaf {
            n, mean, posterior, ..
        } => match posterior {
            Some(p) => println!("{pad}n = {n}: {mean:.2} [{:.2}, {:.2}]", p.lower, p.upper),
            None => println!("{pad}n = {n}: {mean:.2}"),
        },
    }
}

fn main() -> sacebart::Result<()> {
    let (raw, _) = generate(&moderated_dgp(1000, 21))?;
    let data = standardize(&raw)?;
    let config = ChainConfig {
        n_iter: 1500,
        burn_in: 750,
        seed: 21,
        ..ChainConfig::default()
    };
    let draws = run_chain(&data, &config)?;
    let membership = membership_posterior(&draws)?;
    let likely = LikelySet::build(&membership, choose_p(&membership, &p_grid())?)?;
    let csace = CsaceDraws::from_draws(&draws)?;
    let report = stepwise_fit_the_fit(&csace, &likely, &data, &StepwiseParams::default())?;
    println!(
        "selected {:?}, R^2 path {:?}",
        report.selected, report.r2_path
    );
    print_node(&report.tree, 0);
    for c in &report.contrasts {
        println!(
            "leaf {} - leaf {}: {:.2} [{:.2}, {:.2}]",
            c.a, c.b, c.difference.mean, c.difference.lower, c.difference.upper
        );
    }
    Ok(())
}
