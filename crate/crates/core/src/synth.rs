//! Synthetic trials with known strata and closed-form mean functions, and the
//! Monte Carlo / closed-form oracles used to validate fits against them.
//!
//! Strata are generated through the same nested probit as the model:
//! `Z* ~ N(mZ(X), 1)` with `S = 00` when `Z* >= 0`; otherwise
//! `W* ~ N(mW(X), 1)` with `S = 10` when `W* >= 0` and `S = 11` otherwise.
//! No unit is ever harmed by treatment, so monotonicity holds by construction.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateKind, CovariateMatrix, CovariateSpec, TrialDataset};
use crate::error::{Error, Result};
use crate::sampler::Stratum;

/// One additive term of a closed-form mean function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Term {
    /// `coef * x[var]`
    Linear { var: usize, coef: f64 },
    /// `coef * x[var]^2`
    Square { var: usize, coef: f64 },
    /// `coef * sin(freq * x[var])`
    Sin { var: usize, coef: f64, freq: f64 },
    /// `coef * x[a] * x[b]`
    Product { a: usize, b: usize, coef: f64 },
    /// `coef * 1{x[var] > cut}`
    Step { var: usize, cut: f64, coef: f64 },
}

impl Term {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Linear { var, coef } => coef * x[var],
            Term::Square { var, coef } => coef * x[var] * x[var],
            Term::Sin { var, coef, freq } => coef * (freq * x[var]).sin(),
            Term::Product { a, b, coef } => coef * x[a] * x[b],
            Term::Step { var, cut, coef } => {
                if x[var] > cut {
                    coef
                } else {
                    0.0
                }
            }
        }
    }

    fn max_var(&self) -> usize {
        match *self {
            Term::Linear { var, .. }
            | Term::Square { var, .. }
            | Term::Sin { var, .. }
            | Term::Step { var, .. } => var,
            Term::Product { a, b, .. } => a.max(b),
        }
    }
}

/// `intercept + sum of terms`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<Term>,
}

impl Formula {
    pub fn constant(c: f64) -> Self {
        Formula {
            intercept: c,
            terms: Vec::new(),
        }
    }

    pub fn new(intercept: f64, terms: Vec<Term>) -> Self {
        Formula { intercept, terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.intercept, |acc, t| acc + t.eval(x))
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(Term::max_var).max()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateDist {
    Normal,
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub n_units: usize,
    /// Covariate distributions; names are `X1..XK`.
    pub covariates: Vec<CovariateDist>,
    pub mz: Formula,
    pub mw: Formula,
    pub mu111: Formula,
    pub mu110: Formula,
    pub mu101: Formula,
    /// Noise sd of the `111`, `110` and `101` outcome models.
    pub noise_sd: [f64; 3],
    pub treat_prob: f64,
    pub seed: u64,
}

/// Hidden truth of a generated trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub dgp: String,
    pub seed: u64,
    pub strata: Vec<Stratum>,
    /// Potential outcome under treatment (defined for 11 and 10).
    pub y1: Vec<Option<f64>>,
    /// Potential outcome under control (defined for 11).
    pub y0: Vec<Option<f64>>,
    /// `mu111(X_i) - mu110(X_i)` for every unit.
    pub csace: Vec<f64>,
    /// Average of `csace` over the sample's always-survivors.
    pub sample_sace: f64,
}

impl Truth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.covariates.len();
        if k == 0 {
            return Err(Error::Config(format!(
                "dgp `{}` has no covariates",
                self.name
            )));
        }
        for f in [&self.mz, &self.mw, &self.mu111, &self.mu110, &self.mu101] {
            if f.max_var().is_some_and(|v| v >= k) {
                return Err(Error::Config(format!(
                    "dgp `{}` refers to a covariate beyond X{k}",
                    self.name
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.treat_prob) {
            return Err(Error::Config("treat_prob must lie in [0, 1]".into()));
        }
        if self.noise_sd.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("noise sds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn covariate_spec(&self) -> CovariateSpec {
        CovariateSpec::new(
            self.covariates
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    let kind = match d {
                        CovariateDist::Normal => CovariateKind::Continuous,
                        CovariateDist::Bernoulli => CovariateKind::Binary,
                    };
                    (format!("X{}", k + 1), kind)
                })
                .collect(),
        )
    }

    fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        for d in &self.covariates {
            out.push(match d {
                CovariateDist::Normal => rng.sample(StandardNormal),
                CovariateDist::Bernoulli => f64::from(u8::from(rng.random::<bool>())),
            });
        }
    }

    fn draw_stratum<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Stratum {
        let z: f64 = self.mz.eval(x) + rng.sample::<f64, _>(StandardNormal);
        if z >= 0.0 {
            return Stratum::NeverSurvivor;
        }
        let w: f64 = self.mw.eval(x) + rng.sample::<f64, _>(StandardNormal);
        if w >= 0.0 {
            Stratum::Protected
        } else {
            Stratum::AlwaysSurvivor
        }
    }
}

/// Simulate a trial; returns the observable dataset and the hidden truth.
pub fn generate(spec: &DgpSpec) -> Result<(TrialDataset, Truth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_units;
    let k = spec.covariates.len();
    let mut values = Vec::with_capacity(n * k);
    let (mut treat, mut survive, mut outcome) = (Vec::new(), Vec::new(), Vec::new());
    let (mut strata, mut y1, mut y0, mut csace) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut x = Vec::with_capacity(k);
    for _ in 0..n {
        spec.draw_covariates(&mut rng, &mut x);
        let s = spec.draw_stratum(&x, &mut rng);
        let t = rng.random::<f64>() < spec.treat_prob;
        let e1: f64 = rng.sample(StandardNormal);
        let e0: f64 = rng.sample(StandardNormal);
        let (p1, p0) = match s {
            Stratum::AlwaysSurvivor => (
                Some(spec.mu111.eval(&x) + spec.noise_sd[0] * e1),
                Some(spec.mu110.eval(&x) + spec.noise_sd[1] * e0),
            ),
            Stratum::Protected => (Some(spec.mu101.eval(&x) + spec.noise_sd[2] * e1), None),
            Stratum::NeverSurvivor => (None, None),
        };
        let y = if t { p1 } else { p0 };
        values.extend_from_slice(&x);
        treat.push(t);
        survive.push(y.is_some());
        outcome.push(y);
        strata.push(s);
        y1.push(p1);
        y0.push(p0);
        csace.push(oracle_csace(spec, &x));
    }
    let always: Vec<f64> = (0..n)
        .filter(|&i| strata[i] == Stratum::AlwaysSurvivor)
        .map(|i| csace[i])
        .collect();
    let sample_sace = if always.is_empty() {
        f64::NAN
    } else {
        always.iter().sum::<f64>() / always.len() as f64
    };
    let dataset = TrialDataset::new(
        (1..=n).map(|i| format!("u{i}")).collect(),
        treat,
        survive,
        outcome,
        CovariateMatrix::new(n, k, values)?,
        spec.covariate_spec(),
    )?;
    let truth = Truth {
        dgp: spec.name.clone(),
        seed: spec.seed,
        strata,
        y1,
        y0,
        csace,
        sample_sace,
    };
    Ok((dataset, truth))
}

/// Conditional effect among always-survivors at `x`.
pub fn oracle_csace(spec: &DgpSpec, x: &[f64]) -> f64 {
    spec.mu111.eval(x) - spec.mu110.eval(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub se: f64,
    /// Always-survivors among the simulated units.
    pub n_always: usize,
}

/// Population SACE by simulating `n_mc` units and averaging the conditional
/// effect over those that fall in stratum 11.
pub fn oracle_sace(spec: &DgpSpec, n_mc: usize, seed: u64) -> Result<OracleValue> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(spec.covariates.len());
    let (mut n11, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for _ in 0..n_mc {
        spec.draw_covariates(&mut rng, &mut x);
        if spec.draw_stratum(&x, &mut rng) == Stratum::AlwaysSurvivor {
            let c = oracle_csace(spec, &x);
            n11 += 1;
            sum += c;
            sum_sq += c * c;
        }
    }
    if n11 == 0 {
        return Err(Error::Config(format!(
            "dgp `{}` produced no always-survivors in {n_mc} draws",
            spec.name
        )));
    }
    let m = n11 as f64;
    let mean = sum / m;
    let var = if n11 > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(OracleValue {
        value: mean,
        se: (var / m).sqrt(),
        n_always: n11,
    })
}

fn base(name: &str, n_units: usize, seed: u64, covariates: Vec<CovariateDist>) -> DgpSpec {
    DgpSpec {
        name: name.to_string(),
        n_units,
        covariates,
        mz: Formula::constant(0.0),
        mw: Formula::constant(0.0),
        mu111: Formula::constant(0.0),
        mu110: Formula::constant(0.0),
        mu101: Formula::constant(0.0),
        noise_sd: [1.0; 3],
        treat_prob: 0.5,
        seed,
    }
}

use CovariateDist::{Bernoulli, Normal};
use Term::{Linear, Product, Sin, Square, Step};

/// Linear membership and outcome means; the effect among always-survivors is
/// `2 + X1`.
pub fn dgp_a(n_units: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        mz: Formula::new(-0.7, vec![Linear { var: 0, coef: 0.5 }]),
        mw: Formula::new(
            -1.0,
            vec![Linear { var: 1, coef: -0.5 }, Linear { var: 2, coef: 0.4 }],
        ),
        mu111: Formula::new(
            3.0,
            vec![
                Linear { var: 0, coef: 1.0 },
                Linear { var: 1, coef: 0.5 },
                Linear { var: 2, coef: 0.5 },
            ],
        ),
        mu110: Formula::new(
            1.0,
            vec![Linear { var: 1, coef: 0.5 }, Linear { var: 2, coef: 0.5 }],
        ),
        mu101: Formula::new(-1.0, vec![Linear { var: 1, coef: 0.5 }]),
        ..base(
            "dgp-a",
            n_units,
            seed,
            vec![Normal, Normal, Bernoulli, Normal],
        )
    }
}

/// Nonlinear membership and outcome means with interactions; the effect is
/// `1 + 2 sin(2 X1) + 1.5 * 1{X4 > 0} - 0.5 X5`.
pub fn dgp_b(n_units: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        mz: Formula::new(
            -0.7,
            vec![Sin {
                var: 0,
                coef: 0.8,
                freq: 1.5,
            }],
        ),
        mw: Formula::new(
            -1.0,
            vec![
                Product {
                    a: 1,
                    b: 2,
                    coef: 0.6,
                },
                Linear { var: 4, coef: -0.4 },
            ],
        ),
        mu111: Formula::new(
            1.0,
            vec![
                Sin {
                    var: 0,
                    coef: 2.0,
                    freq: 2.0,
                },
                Product {
                    a: 1,
                    b: 2,
                    coef: 1.0,
                },
                Step {
                    var: 3,
                    cut: 0.0,
                    coef: 1.5,
                },
                Square { var: 0, coef: 0.5 },
            ],
        ),
        mu110: Formula::new(
            0.0,
            vec![
                Product {
                    a: 1,
                    b: 2,
                    coef: 1.0,
                },
                Square { var: 0, coef: 0.5 },
                Linear { var: 4, coef: 0.5 },
            ],
        ),
        mu101: Formula::new(
            -1.0,
            vec![
                Sin {
                    var: 1,
                    coef: 1.0,
                    freq: 1.0,
                },
                Linear { var: 2, coef: 0.5 },
            ],
        ),
        noise_sd: [0.5; 3],
        ..base(
            "dgp-b",
            n_units,
            seed,
            vec![Normal, Normal, Normal, Normal, Bernoulli],
        )
    }
}

/// Constant membership and identical outcome means: no effect anywhere and
/// no covariate carries information.
pub fn null_dgp(n_units: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        mz: Formula::constant(-0.7),
        mw: Formula::constant(-1.0),
        mu111: Formula::constant(0.0),
        mu110: Formula::constant(0.0),
        mu101: Formula::constant(-1.0),
        ..base("null", n_units, seed, vec![Normal, Normal])
    }
}

/// DGP-A membership with a constant effect of 2 among always-survivors.
pub fn constant_effect_dgp(n_units: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        name: "constant".into(),
        mu111: Formula::new(
            3.0,
            vec![Linear { var: 0, coef: 1.0 }, Linear { var: 1, coef: 0.5 }],
        ),
        mu110: Formula::new(
            1.0,
            vec![Linear { var: 0, coef: 1.0 }, Linear { var: 1, coef: 0.5 }],
        ),
        ..dgp_a(n_units, seed)
    }
}

/// Effect `+5` when `X1 > 0` and `-5` otherwise among always-survivors, with
/// ten further covariates that moderate nothing.
pub fn moderated_dgp(n_units: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        mz: Formula::new(-0.7, vec![Linear { var: 1, coef: 0.3 }]),
        mw: Formula::new(-1.0, vec![Linear { var: 2, coef: 0.3 }]),
        mu111: Formula::new(
            -4.0,
            vec![
                Step {
                    var: 0,
                    cut: 0.0,
                    coef: 10.0,
                },
                Linear { var: 1, coef: 0.5 },
            ],
        ),
        mu110: Formula::new(1.0, vec![Linear { var: 1, coef: 0.5 }]),
        mu101: Formula::new(0.0, vec![Linear { var: 1, coef: 0.5 }]),
        ..base("moderated", n_units, seed, vec![Normal; 11])
    }
}

/// Look up a named preset.
pub fn preset(name: &str, n_units: usize, seed: u64) -> Option<DgpSpec> {
    match name {
        "dgp-a" => Some(dgp_a(n_units, seed)),
        "dgp-b" => Some(dgp_b(n_units, seed)),
        "null" => Some(null_dgp(n_units, seed)),
        "constant" => Some(constant_effect_dgp(n_units, seed)),
        "moderated" => Some(moderated_dgp(n_units, seed)),
        _ => None,
    }
}

pub const PRESETS: [&str; 5] = ["dgp-a", "dgp-b", "null", "constant", "moderated"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_formulas() {
        let a = dgp_a(10, 0);
        assert!((oracle_csace(&a, &[1.0, 0.3, 1.0, 0.0]) - 3.0).abs() < 1e-12);
        let c = constant_effect_dgp(10, 0);
        assert_eq!(oracle_csace(&c, &[0.7, -1.2, 0.0, 2.0]), 2.0);
        let m = moderated_dgp(10, 0);
        let mut x = vec![0.0; 11];
        x[0] = 0.2;
        assert_eq!(oracle_csace(&m, &x), 5.0);
        x[0] = -0.2;
        assert_eq!(oracle_csace(&m, &x), -5.0);
    }

    #[test]
    fn strongly_negative_membership_means_gives_always_survivors() {
        let mut spec = null_dgp(500, 3);
        spec.mz = Formula::constant(-10.0);
        spec.mw = Formula::constant(-10.0);
        let (_, truth) = generate(&spec).unwrap();
        assert!(truth.strata.iter().all(|&s| s == Stratum::AlwaysSurvivor));
    }

    #[test]
    fn equal_outcome_means_give_zero_effect() {
        let o = oracle_sace(&null_dgp(1, 0), 10_000, 1).unwrap();
        assert_eq!(o.value, 0.0);
    }

    #[test]
    fn out_of_range_terms_are_rejected() {
        let mut spec = dgp_a(10, 0);
        spec.mu111.terms.push(Linear { var: 9, coef: 1.0 });
        assert!(generate(&spec).is_err());
    }
}
