//! Batch commands driven by a JSON run configuration. The `sacebart` binary is
//! a thin wrapper over these functions.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_dataset, standardize, write_dataset_to, CovariateKind, CovariateSpec, TrialDataset,
};
use crate::diagnostics::{diagnose, Diagnostics};
use crate::error::{Error, Result};
use crate::estimands::{
    balance_report, benefit_probabilities, choose_p, csace_cdf_grid, csace_density,
    differential_effects, evidence_bands, likely_sace_draws, likely_set_means,
    membership_posterior, p_grid, sace_draws, CsaceDraws, DifferentialMode, LikelySet,
    DEFAULT_THRESHOLDS, EVIDENCE_LEVELS,
};
use crate::io::{self, fmt_f64, OutputMeta};
use crate::sampler::{
    cross_validate, merge_chains, Chain, ChainConfig, Checkpoint, CvConfig, PosteriorDraws, Stratum,
};
use crate::stats::Interval;
use crate::subgroup::{stepwise_fit_the_fit, StepwiseParams};
use crate::synth::{self, DgpSpec, OracleValue, Truth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateDecl {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// JSON covariate schema, as written by `simulate`.
    pub schema: Option<PathBuf>,
    /// Inline covariate schema; used when `schema` is not given.
    pub covariates: Vec<CovariateDecl>,
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            schema: None,
            covariates: Vec::new(),
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// One of [`synth::PRESETS`].
    pub dgp: String,
    pub n_units: usize,
    pub seed: u64,
    /// Monte Carlo units for the oracle SACE.
    pub oracle_units: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            dgp: "dgp-a".into(),
            n_units: 1000,
            seed: 0,
            oracle_units: 1_000_000,
        }
    }
}

/// Likely-set threshold: a number in (0, 1] or `"auto"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PSetting {
    Fixed(f64),
    Named(String),
}

impl Default for PSetting {
    fn default() -> Self {
        PSetting::Named("auto".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    pub p: PSetting,
    pub p_grid: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub differential: DifferentialMode,
    pub grid_points: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            p: PSetting::default(),
            p_grid: p_grid(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            differential: DifferentialMode::default(),
            grid_points: 512,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Write a checkpoint per chain every this many iterations.
    pub checkpoint_every: Option<usize>,
    /// Continue chains from existing checkpoints.
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub chains: usize,
    pub sampler: ChainConfig,
    pub cv: CvConfig,
    pub fit: FitOptions,
    pub summary: SummaryConfig,
    pub subgroups: StepwiseParams,
    pub out: PathBuf,
    /// Draws directory for `summarize`, `subgroups` and `diagnose`; defaults
    /// to `<out>/draws`.
    pub draws: Option<PathBuf>,
    pub timestamps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            simulate: SimulateConfig::default(),
            chains: 1,
            sampler: ChainConfig::default(),
            cv: CvConfig::default(),
            fit: FitOptions::default(),
            summary: SummaryConfig::default(),
            subgroups: StepwiseParams::default(),
            out: PathBuf::from("out"),
            draws: None,
            timestamps: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Apply a seed to every seeded block.
    pub fn set_seed(&mut self, seed: u64) {
        self.sampler.seed = seed;
        self.cv.seed = seed;
        self.simulate.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        self.sampler.validate()?;
        self.subgroups.cart.validate()?;
        if let PSetting::Fixed(p) = self.summary.p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("p = {p} is outside (0, 1]")));
            }
        }
        if let PSetting::Named(name) = &self.summary.p {
            if name != "auto" {
                return Err(Error::Config(format!(
                    "p must be a number or \"auto\", got `{name}`"
                )));
            }
        }
        if self.summary.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        if let Some(0) = self.fit.checkpoint_every {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub fn draws_dir(&self) -> PathBuf {
        self.draws.clone().unwrap_or_else(|| self.out.join("draws"))
    }

    fn meta(&self, seeds: Vec<u64>) -> Result<OutputMeta> {
        Ok(OutputMeta::new(
            serde_json::to_value(self)?,
            seeds,
            self.timestamps,
        ))
    }

    fn schema(&self) -> Result<CovariateSpec> {
        if let Some(path) = &self.data.schema {
            return io::read_json(path);
        }
        if self.data.covariates.is_empty() {
            return Err(Error::Config("data needs `schema` or `covariates`".into()));
        }
        Ok(CovariateSpec::new(
            self.data
                .covariates
                .iter()
                .map(|c| (c.name.clone(), c.kind))
                .collect(),
        ))
    }

    /// Load the configured dataset, standardized unless disabled.
    pub fn dataset(&self) -> Result<TrialDataset> {
        let path = self
            .data
            .path
            .as_ref()
            .ok_or_else(|| Error::Config("data.path is required".into()))?;
        let data = load_dataset(path, &self.schema()?)?;
        if self.data.standardize {
            standardize(&data)
        } else {
            Ok(data)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub meta: OutputMeta,
    pub dgp: DgpSpec,
    pub oracle_sace: OracleValue,
    pub truth: Truth,
}

/// Generate a synthetic trial into `<out>/data.csv`, with the covariate
/// schema in `schema.json` and the hidden truth in `truth.json`.
pub fn cmd_simulate(config: &RunConfig) -> Result<TruthFile> {
    let sim = &config.simulate;
    let spec = synth::preset(&sim.dgp, sim.n_units, sim.seed).ok_or_else(|| {
        Error::Config(format!(
            "unknown DGP `{}`; expected one of {:?}",
            sim.dgp,
            synth::PRESETS
        ))
    })?;
    let (dataset, truth) = synth::generate(&spec)?;
    let oracle = synth::oracle_sace(&spec, sim.oracle_units, sim.seed.wrapping_add(1))?;
    let meta = config.meta(vec![sim.seed])?;

    let path = config.out.join("data.csv");
    let mut w = io::create(&path)?;
    w.write_all(meta.csv_preamble().as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    write_dataset_to(&dataset, w)?;
    io::write_json(config.out.join("schema.json"), dataset.spec())?;
    let file = TruthFile {
        meta,
        dgp: spec,
        oracle_sace: oracle,
        truth,
    };
    io::write_json(config.out.join("truth.json"), &file)?;
    Ok(file)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvFile {
    pub meta: OutputMeta,
    pub result: crate::sampler::CvResult,
}

/// Cross-validate `(w, J)`; writes `cv.json` and `cv.csv`.
pub fn cmd_cv(config: &RunConfig) -> Result<CvFile> {
    let dataset = config.dataset()?;
    let result = cross_validate(&dataset, &config.cv)?;
    let meta = config.meta(vec![config.cv.seed])?;
    io::write_csv(
        config.out.join("cv.csv"),
        &meta,
        &["w", "n_trees", "rmse"],
        result
            .cells
            .iter()
            .map(|c| vec![fmt_f64(c.w), c.n_trees.to_string(), fmt_f64(c.rmse)]),
    )?;
    let file = CvFile { meta, result };
    io::write_json(config.out.join("cv.json"), &file)?;
    Ok(file)
}

fn checkpoint_path(config: &RunConfig, chain: usize) -> PathBuf {
    config
        .out
        .join("checkpoints")
        .join(format!("chain{chain}.json"))
}

fn save_checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    cp.save(path)
}

fn run_one_chain(config: &RunConfig, dataset: &TrialDataset, c: usize) -> Result<PosteriorDraws> {
    let path = checkpoint_path(config, c);
    let mut chain = if config.fit.resume && path.exists() {
        let cp = Checkpoint::load(&path)?;
        if cp.config != config.sampler || cp.chain_id != c {
            return Err(Error::Config(format!(
                "{} was written with a different sampler configuration",
                path.display()
            )));
        }
        Chain::resume(dataset, &cp)?
    } else {
        Chain::new(dataset, &config.sampler, c)?
    };
    if let Some(every) = config.fit.checkpoint_every {
        while !chain.is_done() {
            let next = (chain.iteration() / every + 1) * every;
            chain.run_until(next)?;
            save_checkpoint(&chain.checkpoint(), &path)?;
        }
    }
    chain.finish()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_draws: usize,
    pub seeds: Vec<u64>,
    pub sace: Option<Interval>,
    pub diagnostics: Diagnostics,
}

/// Run the configured chains concurrently and write the draws to
/// `<out>/draws` and the diagnostics to `<out>/diagnostics.json`.
pub fn cmd_fit(config: &RunConfig) -> Result<FitSummary> {
    let dataset = config.dataset()?;
    let chains: Vec<PosteriorDraws> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_one_chain(config, &dataset, c))
        .collect::<Result<_>>()?;
    let draws = merge_chains(chains)?;
    let meta = config.meta(draws.seeds.clone())?;
    io::write_draws(config.out.join("draws"), &draws, &meta)?;
    let diagnostics = diagnose(&draws);
    io::write_json(
        config.out.join("diagnostics.json"),
        &serde_json::json!({ "meta": meta, "diagnostics": diagnostics }),
    )?;
    Ok(FitSummary {
        n_draws: draws.n_draws(),
        seeds: draws.seeds.clone(),
        sace: sace_draws(&draws).summary().ok(),
        diagnostics,
    })
}

fn load_draws(config: &RunConfig, dataset: &TrialDataset) -> Result<PosteriorDraws> {
    let (draws, _) = io::read_draws(config.draws_dir())?;
    if draws.n_units != dataset.n_units() {
        return Err(Error::Input(format!(
            "draws cover {} units but the dataset has {}",
            draws.n_units,
            dataset.n_units()
        )));
    }
    Ok(draws)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelyFile {
    pub p: f64,
    pub chosen_automatically: bool,
    pub n_units: usize,
    pub units: Vec<usize>,
    pub ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub meta: OutputMeta,
    pub model: crate::sampler::ModelKind,
    pub n_draws: usize,
    pub sace: Interval,
    /// Draws without any imputed always-survivor.
    pub sace_skipped: usize,
    pub marginal_always: f64,
    pub p: f64,
    pub p_auto: bool,
    pub n_likely: usize,
    /// SACE over the likely set, per draw.
    pub likely_sace: Interval,
    /// Likely-set mean of posterior-mean CSACE; equals `likely_sace.mean` up to rounding.
    pub likely_mean_of_means: f64,
    pub bandwidth: f64,
    pub density_spike: bool,
    pub differential_mode: DifferentialMode,
    /// `(level, fraction of likely units with D* above it)`.
    pub evidence: Vec<(f64, f64)>,
    /// Posterior of `Q`, the fraction of likely units with negative CSACE.
    pub benefit: Interval,
    /// `(threshold, fraction of likely units with q_i above it)`.
    pub benefit_table: Vec<(f64, f64)>,
    pub balance_degenerate: Vec<String>,
}

/// Posterior summaries: `summary.json`, `units.csv`, `distribution.csv`,
/// `balance.csv` and `likely.json`.
pub fn cmd_summarize(config: &RunConfig) -> Result<Summary> {
    let dataset = config.dataset()?;
    let draws = load_draws(config, &dataset)?;
    let meta = config.meta(draws.seeds.clone())?;
    let sace = sace_draws(&draws);
    let membership = membership_posterior(&draws)?;
    let (p, p_auto) = match config.summary.p {
        PSetting::Fixed(p) => (p, false),
        PSetting::Named(_) => (choose_p(&membership, &config.summary.p_grid)?, true),
    };
    let likely = LikelySet::build(&membership, p)?;
    let csace = CsaceDraws::from_draws(&draws)?;
    let (of_means, _) = likely_set_means(&csace, &likely);
    let likely_sace = Interval::from_draws(&likely_sace_draws(&csace, &likely));
    let density = csace_density(&csace, &likely, None);
    let cdf = csace_cdf_grid(&csace, &likely, &density.grid);
    let effects = differential_effects(&csace, &likely, config.summary.differential);
    let benefit = benefit_probabilities(&csace, &likely, &config.summary.thresholds)?;
    let balance = balance_report(&draws, &likely, &dataset)?;

    let in_likely = likely.mask(dataset.n_units());
    let intervals = csace.unit_intervals();
    io::write_csv(
        config.out.join("units.csv"),
        &meta,
        &[
            "id",
            "csace_mean",
            "csace_lower",
            "csace_upper",
            "p00",
            "p10",
            "p11",
            "likely",
            "d",
            "d_star",
            "q",
        ],
        (0..dataset.n_units()).map(|i| {
            let m = membership.probs[i];
            vec![
                dataset.ids()[i].clone(),
                fmt_f64(intervals[i].mean),
                fmt_f64(intervals[i].lower),
                fmt_f64(intervals[i].upper),
                fmt_f64(m[Stratum::NeverSurvivor.slot()]),
                fmt_f64(m[Stratum::Protected.slot()]),
                fmt_f64(m[Stratum::AlwaysSurvivor.slot()]),
                u8::from(in_likely[i]).to_string(),
                fmt_f64(effects[i].d),
                fmt_f64(effects[i].d_star),
                fmt_f64(benefit.q[i]),
            ]
        }),
    )?;
    io::write_csv(
        config.out.join("distribution.csv"),
        &meta,
        &["u", "cdf", "density"],
        density
            .grid
            .iter()
            .zip(&cdf)
            .zip(&density.density)
            .map(|((u, h), d)| vec![fmt_f64(*u), fmt_f64(*h), fmt_f64(*d)]),
    )?;
    io::write_csv(
        config.out.join("balance.csv"),
        &meta,
        &[
            "covariate",
            "likely_mean",
            "latent_mean",
            "asd",
            "mean_00",
            "mean_10",
            "mean_11",
            "max_pairwise_asd",
        ],
        balance.rows.iter().map(|r| {
            vec![
                r.covariate.clone(),
                fmt_f64(r.likely_mean),
                fmt_f64(r.latent_mean),
                fmt_f64(r.asd),
                fmt_f64(r.stratum_means[0]),
                fmt_f64(r.stratum_means[1]),
                fmt_f64(r.stratum_means[2]),
                fmt_f64(r.max_pairwise_asd),
            ]
        }),
    )?;
    io::write_json(
        config.out.join("likely.json"),
        &LikelyFile {
            p,
            chosen_automatically: p_auto,
            n_units: likely.len(),
            units: likely.units.clone(),
            ids: likely
                .units
                .iter()
                .map(|&i| dataset.ids()[i].clone())
                .collect(),
        },
    )?;
    let summary = Summary {
        meta,
        model: draws.model,
        n_draws: draws.n_draws(),
        sace: sace.summary()?,
        sace_skipped: sace.skipped,
        marginal_always: membership.marginal_always,
        p,
        p_auto,
        n_likely: likely.len(),
        likely_sace,
        likely_mean_of_means: of_means,
        bandwidth: density.bandwidth,
        density_spike: density.spike,
        differential_mode: config.summary.differential,
        evidence: evidence_bands(&effects, &likely, &EVIDENCE_LEVELS),
        benefit: benefit.q_summary,
        benefit_table: benefit.tabulation,
        balance_degenerate: balance.degenerate,
    };
    io::write_json(config.out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Stepwise subgroup search over the likely set written by `summarize`;
/// writes `subgroups.json` and `leaf_draws.csv`.
pub fn cmd_subgroups(config: &RunConfig) -> Result<crate::subgroup::SubgroupReport> {
    let dataset = config.dataset()?;
    let draws = load_draws(config, &dataset)?;
    let path = config.out.join("likely.json");
    if !path.exists() {
        return Err(Error::Input(format!(
            "{} not found; run `summarize` first",
            path.display()
        )));
    }
    let file: LikelyFile = io::read_json(&path)?;
    if file.units.iter().any(|&i| i >= dataset.n_units()) {
        return Err(Error::Input(format!(
            "{} does not match the dataset",
            path.display()
        )));
    }
    let likely = LikelySet {
        p: file.p,
        units: file.units,
    };
    if likely.is_empty() {
        return Err(Error::EmptyLikelySet(format!(
            "{} lists no units",
            path.display()
        )));
    }
    let csace = CsaceDraws::from_draws(&draws)?;
    let report = stepwise_fit_the_fit(&csace, &likely, &dataset, &config.subgroups)?;
    let meta = config.meta(draws.seeds.clone())?;
    let mut header = vec!["draw".to_string()];
    header.extend(report.leaves.iter().map(|l| format!("leaf{}", l.node)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_csv(
        config.out.join("leaf_draws.csv"),
        &meta,
        &header,
        (0..csace.n_draws()).map(|d| {
            std::iter::once(d.to_string())
                .chain(report.leaf_draws.iter().map(|l| fmt_f64(l[d])))
                .collect()
        }),
    )?;
    io::write_json(
        config.out.join("subgroups.json"),
        &serde_json::json!({ "meta": meta, "report": report }),
    )?;
    Ok(report)
}

/// Convergence diagnostics of stored draws; writes `diagnostics.json`.
pub fn cmd_diagnose(config: &RunConfig) -> Result<Diagnostics> {
    let (draws, _) = io::read_draws(config.draws_dir())?;
    let diagnostics = diagnose(&draws);
    let meta = config.meta(draws.seeds.clone())?;
    io::write_json(
        config.out.join("diagnostics.json"),
        &serde_json::json!({ "meta": meta, "diagnostics": diagnostics }),
    )?;
    Ok(diagnostics)
}

/// Process exit code for an error: 2 usage, 3 data, 4 numerical.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) => 2,
        e if e.is_numerical_error() => 4,
        _ => 3,
    }
}
