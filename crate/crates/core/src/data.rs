//! Trial data: loading, validation, covariate standardization and the
//! observed treatment/survival groups.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Fixed leading CSV columns; covariates follow in schema order.
pub const FIXED_COLUMNS: [&str; 4] = ["id", "treat", "survive", "outcome"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
}

/// Affine map from a standardized value back to its natural scale:
/// `natural = center + scale * standardized`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub center: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
    /// Present for continuous covariates once the dataset has been standardized.
    #[serde(default)]
    pub transforms: Vec<Option<Transform>>,
}

impl CovariateSpec {
    pub fn new(columns: Vec<(String, CovariateKind)>) -> Self {
        let (names, kinds): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        let transforms = vec![None; names.len()];
        CovariateSpec {
            names,
            kinds,
            transforms,
        }
    }

    pub fn continuous(names: &[&str]) -> Self {
        Self::new(
            names
                .iter()
                .map(|n| (n.to_string(), CovariateKind::Continuous))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Map a value of covariate `k` on the working scale to its natural scale.
    pub fn to_natural(&self, k: usize, value: f64) -> f64 {
        match self.transforms.get(k).copied().flatten() {
            Some(t) => t.center + t.scale * value,
            None => value,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.names.len() != self.kinds.len() {
            return Err(Error::Config(
                "covariate names and kinds differ in length".into(),
            ));
        }
        if self.transforms.len() != self.names.len() {
            return Err(Error::Config(
                "covariate transforms and names differ in length".into(),
            ));
        }
        for (i, name) in self.names.iter().enumerate() {
            if FIXED_COLUMNS.contains(&name.as_str()) || self.names[..i].contains(name) {
                return Err(Error::Config(format!(
                    "covariate name `{name}` is reserved or duplicated"
                )));
            }
        }
        Ok(())
    }
}

/// Dense row-major covariate matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl CovariateMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Input(format!(
                "expected {} covariate values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        Ok(CovariateMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Input("ragged covariate rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_cols + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, k)).collect()
    }

    /// Rows restricted to `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        CovariateMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
        }
    }

    /// Columns restricted to `columns`, in that order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * columns.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            values.extend(columns.iter().map(|&k| row[k]));
        }
        CovariateMatrix {
            n_rows: self.n_rows,
            n_cols: columns.len(),
            values,
        }
    }
}

/// One of the four cells formed by treatment arm and observed survival.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservedGroup {
    /// O(1,1): treated and survived.
    TreatedSurvived,
    /// O(1,0): treated and died.
    TreatedDied,
    /// O(0,1): control and survived.
    ControlSurvived,
    /// O(0,0): control and died.
    ControlDied,
}

impl ObservedGroup {
    pub fn of(treat: bool, survive: bool) -> Self {
        match (treat, survive) {
            (true, true) => ObservedGroup::TreatedSurvived,
            (true, false) => ObservedGroup::TreatedDied,
            (false, true) => ObservedGroup::ControlSurvived,
            (false, false) => ObservedGroup::ControlDied,
        }
    }
}

impl fmt::Display for ObservedGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObservedGroup::TreatedSurvived => "O(1,1)",
            ObservedGroup::TreatedDied => "O(1,0)",
            ObservedGroup::ControlSurvived => "O(0,1)",
            ObservedGroup::ControlDied => "O(0,0)",
        };
        f.write_str(s)
    }
}

/// A validated two-arm trial with an outcome truncated by death.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDataset {
    ids: Vec<String>,
    treat: Vec<bool>,
    survive: Vec<bool>,
    outcome: Vec<Option<f64>>,
    covariates: CovariateMatrix,
    spec: CovariateSpec,
}

impl TrialDataset {
    pub fn new(
        ids: Vec<String>,
        treat: Vec<bool>,
        survive: Vec<bool>,
        outcome: Vec<Option<f64>>,
        covariates: CovariateMatrix,
        spec: CovariateSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let n = ids.len();
        if treat.len() != n || survive.len() != n || outcome.len() != n {
            return Err(Error::Input("per-unit columns differ in length".into()));
        }
        if covariates.n_rows() != n || covariates.n_cols() != spec.len() {
            return Err(Error::Input(format!(
                "covariate matrix is {}x{}, expected {}x{}",
                covariates.n_rows(),
                covariates.n_cols(),
                n,
                spec.len()
            )));
        }
        for i in 0..n {
            match (survive[i], outcome[i]) {
                (false, Some(_)) => return Err(Error::OutcomePresentForDeath { row: i }),
                (true, None) => return Err(Error::OutcomeMissingForSurvivor { row: i }),
                (true, Some(y)) if !y.is_finite() => {
                    return Err(Error::Parse {
                        row: i,
                        message: "outcome is not finite".into(),
                    })
                }
                _ => {}
            }
            for (k, &v) in covariates.row(i).iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::MissingCovariate {
                        row: i,
                        column: spec.names[k].clone(),
                    });
                }
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: i,
                        message: format!("covariate `{}` is not finite", spec.names[k]),
                    });
                }
                if spec.kinds[k] == CovariateKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        row: i,
                        message: format!("binary covariate `{}` has value {v}", spec.names[k]),
                    });
                }
            }
        }
        Ok(TrialDataset {
            ids,
            treat,
            survive,
            outcome,
            covariates,
            spec,
        })
    }

    pub fn n_units(&self) -> usize {
        self.ids.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.spec.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn treat(&self) -> &[bool] {
        &self.treat
    }

    pub fn survive(&self) -> &[bool] {
        &self.survive
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        &self.outcome
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.covariates
    }

    pub fn spec(&self) -> &CovariateSpec {
        &self.spec
    }

    pub fn group(&self, i: usize) -> ObservedGroup {
        ObservedGroup::of(self.treat[i], self.survive[i])
    }

    /// Observed outcomes of surviving units, in row order.
    pub fn observed_outcomes(&self) -> Vec<f64> {
        self.outcome.iter().flatten().copied().collect()
    }

    /// Units restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TrialDataset {
        TrialDataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            treat: indices.iter().map(|&i| self.treat[i]).collect(),
            survive: indices.iter().map(|&i| self.survive[i]).collect(),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            covariates: self.covariates.select_rows(indices),
            spec: self.spec.clone(),
        }
    }
}

/// Per-unit observed group, in row order.
pub fn classify_groups(dataset: &TrialDataset) -> Vec<ObservedGroup> {
    (0..dataset.n_units()).map(|i| dataset.group(i)).collect()
}

/// Centre and scale every continuous covariate to mean 0 and sample standard
/// deviation 1. Binary covariates pass through unchanged. The transforms are
/// composed into the returned dataset's [`CovariateSpec`].
pub fn standardize(dataset: &TrialDataset) -> Result<TrialDataset> {
    if dataset.n_covariates() == 0 {
        return Err(Error::Input("no covariates to standardize".into()));
    }
    let x = &dataset.covariates;
    let mut values = x.values.clone();
    let mut spec = dataset.spec.clone();
    for k in 0..x.n_cols() {
        if spec.kinds[k] != CovariateKind::Continuous {
            continue;
        }
        let column = x.column(k);
        let center = stats::mean(&column);
        let scale = stats::sample_sd(&column);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::DegenerateColumn(spec.names[k].clone()));
        }
        for i in 0..x.n_rows() {
            values[i * x.n_cols() + k] = (column[i] - center) / scale;
        }
        spec.transforms[k] = Some(match spec.transforms[k] {
            Some(prev) => Transform {
                center: prev.center + prev.scale * center,
                scale: prev.scale * scale,
            },
            None => Transform { center, scale },
        });
    }
    Ok(TrialDataset {
        covariates: CovariateMatrix {
            values,
            ..dataset.covariates.clone()
        },
        spec,
        ..dataset.clone()
    })
}

/// Invert [`standardize`], returning covariates on their natural scale.
pub fn unstandardize(dataset: &TrialDataset) -> TrialDataset {
    let x = &dataset.covariates;
    let mut values = x.values.clone();
    for i in 0..x.n_rows() {
        for k in 0..x.n_cols() {
            values[i * x.n_cols() + k] = dataset.spec.to_natural(k, x.get(i, k));
        }
    }
    let mut spec = dataset.spec.clone();
    spec.transforms.iter_mut().for_each(|t| *t = None);
    TrialDataset {
        covariates: CovariateMatrix {
            values,
            ..dataset.covariates.clone()
        },
        spec,
        ..dataset.clone()
    }
}

fn parse_flag(field: &str, row: usize, column: &str) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            row,
            message: format!("`{column}` must be 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_real(field: &str, row: usize, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        row,
        message: format!("`{column}`: cannot parse `{field}` as a number ({e})"),
    })
}

/// Read a dataset from CSV text. Row indices in errors count data rows from 0.
pub fn read_dataset<R: Read>(reader: R, schema: &CovariateSpec) -> Result<TrialDataset> {
    schema.validate()?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = csv.headers()?.clone();
    let expected: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(schema.names.iter().map(String::as_str))
        .collect();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::Header(format!(
            "expected columns {expected:?}, found {found:?}"
        )));
    }

    let k = schema.len();
    let mut ids = Vec::new();
    let mut treat = Vec::new();
    let mut survive = Vec::new();
    let mut outcome = Vec::new();
    let mut values = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 4 + k {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", 4 + k, record.len()),
            });
        }
        ids.push(record[0].to_string());
        let t = parse_flag(&record[1], row, "treat")?;
        let d = parse_flag(&record[2], row, "survive")?;
        let y = match record[3].trim() {
            "" => None,
            s => Some(parse_real(s, row, "outcome")?),
        };
        match (d, y) {
            (false, Some(_)) => return Err(Error::OutcomePresentForDeath { row }),
            (true, None) => return Err(Error::OutcomeMissingForSurvivor { row }),
            _ => {}
        }
        treat.push(t);
        survive.push(d);
        outcome.push(y);
        for (j, name) in schema.names.iter().enumerate() {
            let field = record[4 + j].trim();
            if field.is_empty() || field.eq_ignore_ascii_case("na") {
                return Err(Error::MissingCovariate {
                    row,
                    column: name.clone(),
                });
            }
            values.push(parse_real(field, row, name)?);
        }
    }
    let n = ids.len();
    let covariates = CovariateMatrix::new(n, k, values)?;
    TrialDataset::new(ids, treat, survive, outcome, covariates, schema.clone())
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &CovariateSpec) -> Result<TrialDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), schema)
}

/// Write a dataset as CSV. Reals use the shortest representation that parses
/// back to the identical `f64`, so reading the output reproduces the dataset
/// bit for bit.
pub fn write_dataset_to<W: Write>(dataset: &TrialDataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(dataset.spec.names.iter().map(String::as_str))
        .collect();
    csv.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..dataset.n_units() {
        record.clear();
        record.push(dataset.ids[i].clone());
        record.push(u8::from(dataset.treat[i]).to_string());
        record.push(u8::from(dataset.survive[i]).to_string());
        record.push(dataset.outcome[i].map_or_else(String::new, |y| y.to_string()));
        record.extend(dataset.covariates.row(i).iter().map(|v| v.to_string()));
        csv.write_record(&record)?;
    }
    csv.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_dataset(dataset: &TrialDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(dataset, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CovariateSpec {
        CovariateSpec::new(vec![
            ("age".into(), CovariateKind::Continuous),
            ("female".into(), CovariateKind::Binary),
        ])
    }

    fn parse(text: &str) -> Result<TrialDataset> {
        read_dataset(text.as_bytes(), &schema())
    }

    #[test]
    fn dead_unit_without_outcome_is_accepted() {
        let ds =
            parse("id,treat,survive,outcome,age,female\na,1,0,,50,1\nb,0,1,12.5,40,0\n").unwrap();
        assert_eq!(ds.n_units(), 2);
        assert_eq!(ds.outcome()[0], None);
        assert_eq!(ds.outcome()[1], Some(12.5));
    }

    #[test]
    fn outcome_for_dead_unit_is_a_consistency_error() {
        let err = parse("id,treat,survive,outcome,age,female\na,1,0,30,50,1\n").unwrap_err();
        assert!(
            matches!(err, Error::OutcomePresentForDeath { row: 0 }),
            "{err}"
        );
    }

    #[test]
    fn missing_covariate_is_reported_with_row_and_column() {
        let err =
            parse("id,treat,survive,outcome,age,female\na,1,1,3,50,1\nb,1,1,4,,0\n").unwrap_err();
        match err {
            Error::MissingCovariate { row, column } => {
                assert_eq!(row, 1);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_row_is_a_parse_error() {
        let err = parse("id,treat,survive,outcome,age,female\na,2,1,3,50,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 0, .. }));
        let err = parse("id,treat,survive,outcome,age,female\na,1,1,abc,50,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 0, .. }));
    }

    #[test]
    fn header_must_match_schema() {
        let err = parse("id,treat,survive,outcome,female,age\na,1,1,3,1,50\n").unwrap_err();
        assert!(matches!(err, Error::Header(_)));
    }

    #[test]
    fn groups_follow_treatment_and_survival() {
        let ds = parse(
            "id,treat,survive,outcome,age,female\n\
             a,1,1,3,50,1\nb,1,0,,50,1\nc,0,1,4,50,1\nd,0,0,,50,1\n",
        )
        .unwrap();
        let groups = classify_groups(&ds);
        assert_eq!(
            groups,
            vec![
                ObservedGroup::TreatedSurvived,
                ObservedGroup::TreatedDied,
                ObservedGroup::ControlSurvived,
                ObservedGroup::ControlDied
            ]
        );
        assert_eq!(groups[1].to_string(), "O(1,0)");
        assert_eq!(groups[2].to_string(), "O(0,1)");
    }

    #[test]
    fn standardize_uses_sample_sd() {
        let ds = parse(
            "id,treat,survive,outcome,age,female\n\
             a,1,1,3,1,0\nb,1,0,,2,1\nc,0,1,4,3,1\n",
        )
        .unwrap();
        let st = standardize(&ds).unwrap();
        let age = st.covariates().column(0);
        // sample sd of [1, 2, 3] is exactly 1
        for (a, e) in age.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(st.covariates().column(1), vec![0.0, 1.0, 1.0]);
        assert_eq!(st.spec().transforms[1], None);
        let t = st.spec().transforms[0].unwrap();
        assert_eq!((t.center, t.scale), (2.0, 1.0));
    }

    #[test]
    fn zero_variance_column_is_rejected() {
        let ds = parse(
            "id,treat,survive,outcome,age,female\n\
             a,1,1,3,5,0\nb,1,0,,5,1\nc,0,1,4,5,1\n",
        )
        .unwrap();
        match standardize(&ds).unwrap_err() {
            Error::DegenerateColumn(name) => assert_eq!(name, "age"),
            other => panic!("unexpected {other}"),
        }
    }
}
