//! On-disk formats for posterior draws and reports.
//!
//! Draws are stored in a directory as three files: `draws.json` (metadata),
//! `draws_scalars.csv` (one row per retained draw) and `draws_units.csv` (one
//! row per retained draw and unit). CSV outputs start with `#` lines carrying
//! the tool version, sign convention, seeds and the run configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bart::MoveStats;
use crate::error::{Error, Result};
use crate::sampler::{ModelKind, OutcomeScale, PosteriorDraws, Stratum, SIGN_CONVENTION};

pub const DRAWS_FORMAT: &str = "sacebart-draws";
const DRAWS_VERSION: u32 = 1;

pub const DRAWS_META: &str = "draws.json";
pub const DRAWS_SCALARS: &str = "draws_scalars.csv";
pub const DRAWS_UNITS: &str = "draws_units.csv";

/// Provenance attached to every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub tool: String,
    pub version: String,
    pub sign_convention: String,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
    /// Seconds since the Unix epoch; only present when timestamps are enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

impl OutputMeta {
    pub fn new(config: serde_json::Value, seeds: Vec<u64>, timestamp: bool) -> Self {
        let created_unix = timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        OutputMeta {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            sign_convention: SIGN_CONVENTION.to_string(),
            seeds,
            config,
            created_unix,
        }
    }

    /// The `#` preamble for CSV files. Timestamps are left out.
    pub fn csv_preamble(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "# {} {}\n# sign convention: {}\n# seeds: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.sign_convention,
            seeds.join(","),
            self.config
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub format: String,
    pub version: u32,
    pub meta: OutputMeta,
    pub model: ModelKind,
    pub n_units: usize,
    pub n_draws: usize,
    pub n_chains: usize,
    /// Retained draws per chain: `floor((n_iter - burn_in) / thin)`.
    pub retained_per_chain: Vec<usize>,
    pub scale: OutcomeScale,
    pub moves: Vec<[MoveStats; 5]>,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Write a CSV file with the metadata preamble, a header and rows.
pub fn write_csv(
    path: impl AsRef<Path>,
    meta: &OutputMeta,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(meta.csv_preamble().as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file))
}

#[derive(Serialize, Deserialize)]
struct ScalarRow {
    draw: usize,
    chain: usize,
    iteration: usize,
    sigma2_111: f64,
    sigma2_110: f64,
    sigma2_101: f64,
    pi11: f64,
}

#[derive(Serialize, Deserialize)]
struct UnitRow {
    draw: usize,
    unit: usize,
    stratum: String,
    m111: f64,
    m110: f64,
}

fn retained_per_chain(draws: &PosteriorDraws) -> Vec<usize> {
    let mut counts = vec![0; draws.n_chains()];
    for &c in &draws.chain {
        counts[c] += 1;
    }
    counts
}

/// Write the three draws files into `dir`.
pub fn write_draws(dir: impl AsRef<Path>, draws: &PosteriorDraws, meta: &OutputMeta) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = DrawsMeta {
        format: DRAWS_FORMAT.to_string(),
        version: DRAWS_VERSION,
        meta: meta.clone(),
        model: draws.model,
        n_units: draws.n_units,
        n_draws: draws.n_draws(),
        n_chains: draws.n_chains(),
        retained_per_chain: retained_per_chain(draws),
        scale: draws.scale,
        moves: draws.moves.clone(),
    };
    write_json(dir.join(DRAWS_META), &header)?;

    let preamble = meta.csv_preamble();
    let path = dir.join(DRAWS_SCALARS);
    let mut w = create(&path)?;
    w.write_all(preamble.as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    let mut csv = csv::Writer::from_writer(w);
    for d in 0..draws.n_draws() {
        let [s111, s110, s101] = draws.sigma2[d];
        csv.serialize(ScalarRow {
            draw: d,
            chain: draws.chain[d],
            iteration: draws.iteration[d],
            sigma2_111: s111,
            sigma2_110: s110,
            sigma2_101: s101,
            pi11: draws.pi11[d],
        })?;
    }
    csv.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(DRAWS_UNITS);
    let mut w = create(&path)?;
    w.write_all(preamble.as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    let mut csv = csv::Writer::from_writer(w);
    for d in 0..draws.n_draws() {
        let strata = draws.strata_of(d);
        let (m111, m110) = (draws.m111_of(d), draws.m110_of(d));
        for i in 0..draws.n_units {
            csv.serialize(UnitRow {
                draw: d,
                unit: i,
                stratum: strata[i].label().to_string(),
                m111: m111[i],
                m110: m110[i],
            })?;
        }
    }
    csv.flush().map_err(|e| Error::io(&path, e))
}

fn bad(path: &Path, message: String) -> Error {
    Error::Input(format!("{}: {message}", path.display()))
}

/// Read draws written by [`write_draws`], with their metadata.
pub fn read_draws(dir: impl AsRef<Path>) -> Result<(PosteriorDraws, DrawsMeta)> {
    let dir = dir.as_ref();
    let meta_path = dir.join(DRAWS_META);
    let meta: DrawsMeta = read_json(&meta_path)?;
    if meta.format != DRAWS_FORMAT || meta.version != DRAWS_VERSION {
        return Err(bad(
            &meta_path,
            format!("not a version {DRAWS_VERSION} draws file"),
        ));
    }
    let n = meta.n_units;
    let m = meta.n_draws;
    let mut draws = PosteriorDraws {
        model: meta.model,
        n_units: n,
        scale: meta.scale,
        seeds: meta.meta.seeds.clone(),
        chain: Vec::with_capacity(m),
        iteration: Vec::with_capacity(m),
        strata: Vec::with_capacity(m * n),
        m111: Vec::with_capacity(m * n),
        m110: Vec::with_capacity(m * n),
        sigma2: Vec::with_capacity(m),
        pi11: Vec::with_capacity(m),
        moves: meta.moves.clone(),
    };

    let path = dir.join(DRAWS_SCALARS);
    for (k, row) in csv_reader(&path)?.deserialize::<ScalarRow>().enumerate() {
        let row = row?;
        if row.draw != k || row.chain >= meta.n_chains {
            return Err(bad(&path, format!("row {} is out of order", k + 1)));
        }
        draws.chain.push(row.chain);
        draws.iteration.push(row.iteration);
        draws
            .sigma2
            .push([row.sigma2_111, row.sigma2_110, row.sigma2_101]);
        draws.pi11.push(row.pi11);
    }
    if draws.chain.len() != m {
        return Err(bad(
            &path,
            format!("expected {m} draws, found {}", draws.chain.len()),
        ));
    }

    let path = dir.join(DRAWS_UNITS);
    for (k, row) in csv_reader(&path)?.deserialize::<UnitRow>().enumerate() {
        let row = row?;
        if row.draw != k / n || row.unit != k % n {
            return Err(bad(&path, format!("row {} is out of order", k + 1)));
        }
        let stratum = Stratum::parse(&row.stratum)
            .ok_or_else(|| bad(&path, format!("unknown stratum `{}`", row.stratum)))?;
        draws.strata.push(stratum);
        draws.m111.push(row.m111);
        draws.m110.push(row.m110);
    }
    if draws.strata.len() != m * n {
        return Err(bad(
            &path,
            format!("expected {} rows, found {}", m * n, draws.strata.len()),
        ));
    }
    Ok((draws, meta))
}

/// Paths of the draws files in `dir`.
pub fn draws_files(dir: impl AsRef<Path>) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    [DRAWS_META, DRAWS_SCALARS, DRAWS_UNITS].map(|f| dir.join(f))
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
