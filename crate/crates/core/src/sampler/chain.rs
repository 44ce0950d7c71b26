use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bart::MoveStats;
use crate::data::TrialDataset;
use crate::error::{Error, Result};

use super::state::{initialize, ModelData, OutcomeScale, SamplerState, StateSnapshot};
use super::steps::{gibbs_iteration, observed_log_likelihood, strata_probabilities};
use super::{Cell, ChainConfig, ModelKind, Stratum};

pub const CHECKPOINT_FORMAT: &str = "sacebart-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Retained iterations of one or more chains. Per-unit arrays are stored
/// draw-major: entry `d * n_units + i` belongs to draw `d`, unit `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub model: ModelKind,
    pub n_units: usize,
    pub scale: OutcomeScale,
    /// Seed of each chain, indexed by chain id.
    pub seeds: Vec<u64>,
    /// Chain id of each draw.
    pub chain: Vec<usize>,
    /// 0-based iteration of each draw within its chain.
    pub iteration: Vec<usize>,
    pub strata: Vec<Stratum>,
    /// `m111(X_i)` on the outcome scale.
    pub m111: Vec<f64>,
    /// `m110(X_i)` on the outcome scale.
    pub m110: Vec<f64>,
    /// Outcome variances `(111, 110, 101)` on the outcome scale.
    pub sigma2: Vec<[f64; 3]>,
    /// Average over units of `pi11(X_i)`.
    pub pi11: Vec<f64>,
    /// Tree-move counts per chain for the forests `Z, W, 111, 110, 101`.
    pub moves: Vec<[MoveStats; 5]>,
}

impl PosteriorDraws {
    fn empty(model: ModelKind, n_units: usize, scale: OutcomeScale) -> Self {
        PosteriorDraws {
            model,
            n_units,
            scale,
            seeds: Vec::new(),
            chain: Vec::new(),
            iteration: Vec::new(),
            strata: Vec::new(),
            m111: Vec::new(),
            m110: Vec::new(),
            sigma2: Vec::new(),
            pi11: Vec::new(),
            moves: Vec::new(),
        }
    }

    pub fn n_draws(&self) -> usize {
        self.chain.len()
    }

    pub fn n_chains(&self) -> usize {
        self.seeds.len()
    }

    pub fn strata_of(&self, draw: usize) -> &[Stratum] {
        &self.strata[draw * self.n_units..(draw + 1) * self.n_units]
    }

    pub fn m111_of(&self, draw: usize) -> &[f64] {
        &self.m111[draw * self.n_units..(draw + 1) * self.n_units]
    }

    pub fn m110_of(&self, draw: usize) -> &[f64] {
        &self.m110[draw * self.n_units..(draw + 1) * self.n_units]
    }

    /// `m111(X_i) - m110(X_i)` in draw `draw`.
    pub fn csace(&self, draw: usize, unit: usize) -> f64 {
        let k = draw * self.n_units + unit;
        self.m111[k] - self.m110[k]
    }

    /// Draw indices belonging to each chain, in order.
    pub fn chain_draws(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for (d, &c) in self.chain.iter().enumerate() {
            out[c].push(d);
        }
        out
    }

    fn record(&mut self, chain: usize, iteration: usize, state: &SamplerState) {
        let scale = self.scale;
        self.chain.push(chain);
        self.iteration.push(iteration);
        self.strata.extend_from_slice(&state.strata);
        let m111 = state.outcome[Cell::Always1.slot()].fitted();
        let m110 = state.outcome[Cell::Always0.slot()].fitted();
        self.m111.extend(m111.iter().map(|&m| scale.to_natural(m)));
        self.m110.extend(m110.iter().map(|&m| scale.to_natural(m)));
        self.sigma2
            .push(state.sigma2.map(|s| scale.variance_to_natural(s)));
        let (mz, mw) = (state.mz.fitted(), state.mw.fitted());
        let total: f64 = (0..mz.len())
            .map(|i| strata_probabilities(mz[i], mw[i]).2)
            .sum();
        self.pi11.push(total / mz.len() as f64);
    }
}

/// Concatenate chains, renumbering chain ids in the given order.
pub fn merge_chains(chains: Vec<PosteriorDraws>) -> Result<PosteriorDraws> {
    let mut iter = chains.into_iter();
    let mut merged = iter
        .next()
        .ok_or_else(|| Error::Input("no chains to merge".into()))?;
    for next in iter {
        if next.n_units != merged.n_units
            || next.model != merged.model
            || next.scale != merged.scale
        {
            return Err(Error::Input("chains describe different fits".into()));
        }
        let offset = merged.seeds.len();
        merged.seeds.extend(next.seeds);
        merged.chain.extend(next.chain.iter().map(|c| c + offset));
        merged.iteration.extend(next.iteration);
        merged.strata.extend(next.strata);
        merged.m111.extend(next.m111);
        merged.m110.extend(next.m110);
        merged.sigma2.extend(next.sigma2);
        merged.pi11.extend(next.pi11);
        merged.moves.extend(next.moves);
    }
    Ok(merged)
}

/// A single Markov chain that can be advanced, checkpointed and resumed.
pub struct Chain {
    config: ChainConfig,
    chain_id: usize,
    seed: u64,
    data: ModelData,
    state: SamplerState,
    rng: ChaCha8Rng,
    iteration: usize,
    draws: PosteriorDraws,
}

/// Everything needed to continue a chain bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ChainConfig,
    pub chain_id: usize,
    pub seed: u64,
    pub iteration: usize,
    /// Position of the random stream, in 32-bit words.
    pub word_pos: String,
    pub state: StateSnapshot,
    pub draws: PosteriorDraws,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint = serde_json::from_str(&text)?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "{} is not a version {CHECKPOINT_VERSION} checkpoint",
                path.display()
            )));
        }
        Ok(cp)
    }
}

/// Best of `init_restarts` initializations, each advanced `pilot_iters`
/// sweeps and scored by its mean observed-data log-likelihood over the second
/// half of the pilot.
fn pilot_initialize(
    data: &ModelData,
    config: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SamplerState> {
    let mut best: Option<(f64, SamplerState)> = None;
    for _ in 0..config.init_restarts {
        let mut state = initialize(data, config, rng)?;
        let (mut score, mut n) = (0.0, 0usize);
        for it in 0..config.pilot_iters {
            gibbs_iteration(&mut state, data, config, rng)?;
            if 2 * it >= config.pilot_iters {
                score += observed_log_likelihood(&state, data);
                n += 1;
            }
        }
        let score = if n > 0 {
            score / n as f64
        } else {
            observed_log_likelihood(&state, data)
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, state));
        }
    }
    Ok(best.expect("init_restarts is at least 1").1)
}

impl Chain {
    /// Initialize chain `chain_id`, seeded with `config.seed + chain_id`.
    pub fn new(dataset: &TrialDataset, config: &ChainConfig, chain_id: usize) -> Result<Self> {
        config.validate()?;
        let data = ModelData::new(dataset)?;
        let seed = config.seed.wrapping_add(chain_id as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = pilot_initialize(&data, config, &mut rng)?;
        state.mz.reset_move_stats();
        state.mw.reset_move_stats();
        state.outcome.iter_mut().for_each(|m| m.reset_move_stats());
        let mut draws = PosteriorDraws::empty(config.model, data.n_units(), data.scale);
        draws.seeds.push(seed);
        Ok(Chain {
            config: config.clone(),
            chain_id,
            seed,
            data,
            state,
            rng,
            iteration: 0,
            draws,
        })
    }

    pub fn resume(dataset: &TrialDataset, checkpoint: &Checkpoint) -> Result<Self> {
        let config = &checkpoint.config;
        config.validate()?;
        let data = ModelData::new(dataset)?;
        if data.scale != checkpoint.draws.scale || data.n_units() != checkpoint.draws.n_units {
            return Err(Error::Input(
                "checkpoint was written for a different dataset".into(),
            ));
        }
        let state = SamplerState::restore(&checkpoint.state, &data, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(checkpoint.seed);
        let pos: u128 = checkpoint
            .word_pos
            .parse()
            .map_err(|_| Error::Input(format!("bad stream position `{}`", checkpoint.word_pos)))?;
        rng.set_word_pos(pos);
        let mut draws = checkpoint.draws.clone();
        draws.moves.clear();
        Ok(Chain {
            config: config.clone(),
            chain_id: checkpoint.chain_id,
            seed: checkpoint.seed,
            data,
            state,
            rng,
            iteration: checkpoint.iteration,
            draws,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut draws = self.draws.clone();
        draws.moves = vec![self.moves()];
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            chain_id: self.chain_id,
            seed: self.seed,
            iteration: self.iteration,
            word_pos: self.rng.get_word_pos().to_string(),
            state: self.state.snapshot(),
            draws,
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.n_iter
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn data(&self) -> &ModelData {
        &self.data
    }

    fn moves(&self) -> [MoveStats; 5] {
        let s = &self.state;
        [&s.mz, &s.mw, &s.outcome[0], &s.outcome[1], &s.outcome[2]]
            .map(|m| m.move_stats().copied().unwrap_or_default())
    }

    /// Run one iteration, recording it if it is retained.
    pub fn step(&mut self) -> Result<()> {
        gibbs_iteration(&mut self.state, &self.data, &self.config, &mut self.rng)?;
        if self.config.keeps(self.iteration) {
            self.draws.record(0, self.iteration, &self.state);
        }
        self.iteration += 1;
        Ok(())
    }

    /// Advance until `iteration` iterations are complete (capped at `n_iter`).
    pub fn run_until(&mut self, iteration: usize) -> Result<()> {
        while self.iteration < iteration.min(self.config.n_iter) {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<PosteriorDraws> {
        self.run_until(self.config.n_iter)?;
        let moves = self.moves();
        let mut draws = self.draws;
        draws.moves = vec![moves];
        Ok(draws)
    }
}

/// Run a single chain (seed `config.seed`) to completion.
pub fn run_chain(dataset: &TrialDataset, config: &ChainConfig) -> Result<PosteriorDraws> {
    Chain::new(dataset, config, 0)?.finish()
}

/// Run `n_chains` independent chains concurrently and concatenate their draws.
pub fn run_chains(
    dataset: &TrialDataset,
    config: &ChainConfig,
    n_chains: usize,
) -> Result<PosteriorDraws> {
    if n_chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    let chains: Vec<PosteriorDraws> = (0..n_chains)
        .into_par_iter()
        .map(|c| Chain::new(dataset, config, c)?.finish())
        .collect::<Result<_>>()?;
    merge_chains(chains)
}
