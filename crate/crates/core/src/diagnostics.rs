//! Convergence diagnostics for scalar draw series: split R-hat, multi-chain
//! effective sample size, and tree-move acceptance rates.

use serde::{Deserialize, Serialize};

use crate::bart::{MoveKind, MoveStats};
use crate::estimands::sace_draws;
use crate::sampler::PosteriorDraws;

/// Split R-hat: every chain is cut in half and the halves are compared with
/// the between/within variance ratio. `NaN` with fewer than four draws per
/// chain or no within-chain variation.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    if halves.len() < 2 || halves[0].len() < 2 {
        return f64::NAN;
    }
    let n = halves[0].len() as f64;
    let (w, b_over_n) = variance_components(&halves);
    if !(w > 0.0) {
        return f64::NAN;
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if len == 0 {
        return Vec::new();
    }
    chains
        .iter()
        .flat_map(|c| {
            let c = &c[..2 * len];
            [c[..len].to_vec(), c[len..].to_vec()]
        })
        .collect()
}

/// Mean within-chain variance `W` and `B/n`, the variance of the chain means.
fn variance_components(chains: &[Vec<f64>]) -> (f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m;
    (w, b_over_n)
}

/// Autocovariance at lag `t` of already centred draws, `1/n` normalized.
fn autocovariance(centred: &[f64], t: usize) -> f64 {
    let n = centred.len();
    centred[..n - t]
        .iter()
        .zip(&centred[t..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive sequence
/// on the combined autocorrelations, capped at the number of draws. Chains
/// are truncated to a common length.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let chains: Vec<Vec<f64>> = chains.iter().map(|c| c[..n].to_vec()).collect();
    let total = (m * n) as f64;
    let centred: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let nf = n as f64;
    let w = centred
        .iter()
        .map(|c| autocovariance(c, 0) * nf / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    let b_over_n = if m > 1 {
        variance_components(&chains).1
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |t: usize| {
        let mean_acov = centred.iter().map(|c| autocovariance(c, t)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    // Sum of autocorrelation pairs while positive and monotone.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    (total / tau).min(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub name: String,
    pub n_draws: usize,
    pub mean: f64,
    pub rhat: f64,
    pub ess: f64,
}

impl SeriesDiagnostics {
    pub fn from_chains(name: &str, chains: &[Vec<f64>]) -> Self {
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        SeriesDiagnostics {
            name: name.to_string(),
            n_draws: all.len(),
            mean: all.iter().sum::<f64>() / all.len() as f64,
            rhat: split_rhat(chains),
            ess: effective_sample_size(chains),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub forest: String,
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub overall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_chains: usize,
    pub series: Vec<SeriesDiagnostics>,
    /// Empty for the parametric model.
    pub acceptance: Vec<AcceptanceRates>,
}

pub const FOREST_NAMES: [&str; 5] = ["Z", "W", "111", "110", "101"];

/// Diagnostics for the SACE, the three outcome variances and the average
/// `pi11`, split by chain.
pub fn diagnose(draws: &PosteriorDraws) -> Diagnostics {
    let n_chains = draws.n_chains();
    let by_chain = |value: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); n_chains];
        for d in 0..draws.n_draws() {
            out[draws.chain[d]].push(value(d));
        }
        out
    };
    let sace = sace_draws(draws);
    let mut sace_chains = vec![Vec::new(); n_chains];
    for (&d, &v) in sace.draws.iter().zip(&sace.values) {
        sace_chains[draws.chain[d]].push(v);
    }
    let mut series = vec![SeriesDiagnostics::from_chains("sace", &sace_chains)];
    for (k, label) in ["sigma2_111", "sigma2_110", "sigma2_101"]
        .iter()
        .enumerate()
    {
        series.push(SeriesDiagnostics::from_chains(
            label,
            &by_chain(&|d| draws.sigma2[d][k]),
        ));
    }
    series.push(SeriesDiagnostics::from_chains(
        "pi11",
        &by_chain(&|d| draws.pi11[d]),
    ));

    let mut acceptance = Vec::new();
    if draws.model == crate::sampler::ModelKind::Bart {
        for (f, name) in FOREST_NAMES.iter().enumerate() {
            let mut total = MoveStats::default();
            for m in &draws.moves {
                total.merge(&m[f]);
            }
            acceptance.push(AcceptanceRates {
                forest: name.to_string(),
                grow: total.acceptance_rate(MoveKind::Grow),
                prune: total.acceptance_rate(MoveKind::Prune),
                change: total.acceptance_rate(MoveKind::Change),
                overall: total.overall_rate(),
            });
        }
    }
    Diagnostics {
        n_chains,
        series,
        acceptance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white_noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn independent_chains_look_converged() {
        let chains = vec![white_noise(1, 2000), white_noise(2, 2000)];
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        let ess = effective_sample_size(&chains);
        assert!(ess > 3000.0 && ess <= 4000.0, "ess {ess}");
    }

    #[test]
    fn shifted_chains_are_flagged() {
        let a = white_noise(3, 500);
        let b: Vec<f64> = white_noise(4, 500).iter().map(|x| x + 3.0).collect();
        assert!(split_rhat(&[a, b]) > 1.5);
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with phi = 0.8 has ESS ratio (1 - phi) / (1 + phi) = 1/9.
        let e = white_noise(5, 40_000);
        let mut x = vec![0.0; e.len()];
        for t in 1..e.len() {
            x[t] = 0.8 * x[t - 1] + e[t];
        }
        let ess = effective_sample_size(&[x]);
        let want = 40_000.0 / 9.0;
        assert!((ess / want - 1.0).abs() < 0.15, "ess {ess} want {want}");
    }

    #[test]
    fn ess_never_exceeds_draws() {
        // Anti-correlated draws would give ESS above the draw count.
        let x: Vec<f64> = (0..1000)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let noisy: Vec<f64> = x
            .iter()
            .zip(white_noise(6, 1000))
            .map(|(a, b)| a + 0.1 * b)
            .collect();
        assert!(effective_sample_size(&[noisy]) <= 1000.0);
    }
}
