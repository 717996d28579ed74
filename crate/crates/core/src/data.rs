//! Ingestion of hourly monitoring CSVs into canonical datasets.
//!
//! Monitoring exports name their columns inconsistently, so every load goes
//! through a [`ColumnMapping`] from canonical variable names to source
//! headers. Values that fail to parse (empty cells, `NaN`, `NA`, garbage)
//! become `NaN` missing markers; [`drop_missing`] performs complete-case
//! filtering over a required column set.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::scalar::{from_count, Scalar};
use crate::{Error, Result};

/// Canonical variable roster: surrogates, targets and their display names.
///
/// The declaration order is the canonical order used for deterministic
/// tie-breaking throughout the pipeline.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Variable {
    Flow,
    Temp,
    #[serde(rename = "pH")]
    Ph,
    #[serde(rename = "DOsat")]
    DoSat,
    Turb,
    #[serde(rename = "EC")]
    Ec,
    Chl,
    #[serde(rename = "TRP")]
    Trp,
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "NO3N")]
    No3n,
    #[serde(rename = "NH4N")]
    Nh4n,
}

impl Variable {
    pub const ALL: [Variable; 11] = [
        Variable::Flow,
        Variable::Temp,
        Variable::Ph,
        Variable::DoSat,
        Variable::Turb,
        Variable::Ec,
        Variable::Chl,
        Variable::Trp,
        Variable::Tp,
        Variable::No3n,
        Variable::Nh4n,
    ];

    /// Hard-to-measure nutrient concentrations the soft-sensor estimates.
    pub fn is_target(self) -> bool {
        matches!(
            self,
            Variable::Trp | Variable::Tp | Variable::No3n | Variable::Nh4n
        )
    }

    /// Cheap in-situ measurements usable as model inputs.
    pub fn is_surrogate(self) -> bool {
        !self.is_target()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Flow => "Flow",
            Variable::Temp => "Temp",
            Variable::Ph => "pH",
            Variable::DoSat => "DOsat",
            Variable::Turb => "Turb",
            Variable::Ec => "EC",
            Variable::Chl => "Chl",
            Variable::Trp => "TRP",
            Variable::Tp => "TP",
            Variable::No3n => "NO3N",
            Variable::Nh4n => "NH4N",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let var = match norm.as_str() {
            "flow" => Variable::Flow,
            "temp" | "temperature" => Variable::Temp,
            "ph" => Variable::Ph,
            "dosat" | "do" => Variable::DoSat,
            "turb" | "turbidity" => Variable::Turb,
            "ec" | "conductivity" => Variable::Ec,
            "chl" | "chlorophyll" => Variable::Chl,
            "trp" => Variable::Trp,
            "tp" => Variable::Tp,
            "no3n" | "no3" | "nitrate" => Variable::No3n,
            "nh4n" | "nh4" | "ammonium" | "ammonia" => Variable::Nh4n,
            _ => {
                return Err(Error::InvalidMapping(format!(
                    "unknown canonical variable name '{s}'"
                )))
            }
        };
        Ok(var)
    }
}

/// One mapped column: canonical variable, source header and unit label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub variable: Variable,
    pub source_header: String,
    pub unit: String,
}

/// Mapping from canonical names to source CSV headers.
///
/// The timestamp mapping is mandatory; at least one target and one surrogate
/// column must be mapped, and no canonical name may appear twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub timestamp_header: String,
    /// Timestamp format string (chrono `strftime`); when `None` a small set
    /// of ISO-8601 layouts is tried.
    pub timestamp_format: Option<String>,
    pub columns: Vec<ColumnSpec>,
}

const ISO_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

impl ColumnMapping {
    pub fn new(timestamp_header: impl Into<String>, columns: Vec<ColumnSpec>) -> Result<Self> {
        let mapping = ColumnMapping {
            timestamp_header: timestamp_header.into(),
            timestamp_format: None,
            columns,
        };
        mapping.validate()?;
        Ok(mapping)
    }

    pub fn with_timestamp_format(mut self, format: impl Into<String>) -> Self {
        self.timestamp_format = Some(format.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamp_header.trim().is_empty() {
            return Err(Error::InvalidMapping(
                "timestamp mapping is mandatory".into(),
            ));
        }
        let mut seen = BTreeMap::new();
        for spec in &self.columns {
            if let Some(prev) = seen.insert(spec.variable, &spec.source_header) {
                return Err(Error::InvalidMapping(format!(
                    "{} mapped twice ('{}' and '{}')",
                    spec.variable, prev, spec.source_header
                )));
            }
        }
        if !self.columns.iter().any(|c| c.variable.is_target()) {
            return Err(Error::InvalidMapping(
                "at least one target column must be mapped".into(),
            ));
        }
        if !self.columns.iter().any(|c| c.variable.is_surrogate()) {
            return Err(Error::InvalidMapping(
                "at least one surrogate column must be mapped".into(),
            ));
        }
        Ok(())
    }

    pub fn variables(&self) -> Vec<Variable> {
        self.columns.iter().map(|c| c.variable).collect()
    }

    pub fn unit(&self, variable: Variable) -> Option<&str> {
        self.columns
            .iter()
            .find(|c| c.variable == variable)
            .map(|c| c.unit.as_str())
    }

    fn parse_timestamp(&self, raw: &str) -> Option<NaiveDateTime> {
        let raw = raw.trim();
        if let Some(fmt) = &self.timestamp_format {
            return NaiveDateTime::parse_from_str(raw, fmt).ok();
        }
        ISO_FORMATS
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
    }
}

/// Time-indexed table of canonical columns. Missing values are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    timestamps: Vec<NaiveDateTime>,
    columns: BTreeMap<Variable, Vec<T>>,
    n_rows: usize,
}

impl<T: Scalar> Dataset<T> {
    /// Assemble a dataset from parallel column vectors.
    pub fn from_columns(
        timestamps: Vec<NaiveDateTime>,
        columns: BTreeMap<Variable, Vec<T>>,
    ) -> Result<Self> {
        let n_rows = timestamps.len();
        for (var, col) in &columns {
            if col.len() != n_rows {
                return Err(Error::data(format!(
                    "column {var} has {} values for {n_rows} rows",
                    col.len()
                )));
            }
        }
        Ok(Dataset {
            timestamps,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn variables(&self) -> impl Iterator<Item = Variable> + '_ {
        self.columns.keys().copied()
    }

    pub fn has_column(&self, variable: Variable) -> bool {
        self.columns.contains_key(&variable)
    }

    pub fn column(&self, variable: Variable) -> Result<&[T]> {
        self.columns
            .get(&variable)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(variable.to_string()))
    }

    /// Replace one column's values (same length required).
    pub fn set_column(&mut self, variable: Variable, values: Vec<T>) -> Result<()> {
        if values.len() != self.n_rows {
            return Err(Error::data(format!(
                "column {variable} has {} values for {} rows",
                values.len(),
                self.n_rows
            )));
        }
        self.columns.insert(variable, values);
        Ok(())
    }

    /// Row-subset copy, preserving the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset<T> {
        let timestamps = rows.iter().map(|&r| self.timestamps[r]).collect();
        let columns = self
            .columns
            .iter()
            .map(|(&var, col)| (var, rows.iter().map(|&r| col[r]).collect()))
            .collect();
        Dataset {
            timestamps,
            columns,
            n_rows: rows.len(),
        }
    }

    /// Design matrix with one column per requested predictor, in order.
    pub fn design_matrix(&self, predictors: &[Variable]) -> Result<crate::matrix::Matrix<T>> {
        let mut cols = Vec::with_capacity(predictors.len());
        for &p in predictors {
            cols.push(self.column(p)?.to_vec());
        }
        Ok(crate::matrix::Matrix::from_columns(&cols))
    }

    /// Write the dataset back out as a canonical-header CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let vars: Vec<Variable> = self.variables().collect();
        let mut header = vec!["Timestamp".to_string()];
        header.extend(vars.iter().map(|v| v.to_string()));
        w.write_record(&header)?;
        for i in 0..self.n_rows {
            let mut rec = vec![self.timestamps[i].format("%Y-%m-%dT%H:%M:%S").to_string()];
            for var in &vars {
                let v = self.columns[var][i];
                rec.push(if v.is_nan() { String::new() } else { format!("{v}") });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse one CSV cell; anything unparseable is a missing marker.
fn parse_cell<T: Scalar>(raw: &str) -> T {
    let raw = raw.trim();
    if raw.is_empty() {
        return T::nan();
    }
    match raw.parse::<T>() {
        Ok(v) => v,
        Err(_) => T::nan(),
    }
}

/// Load a timeseries CSV through a column mapping.
///
/// Rows are sorted by timestamp; duplicate timestamps keep the first
/// occurrence (logged). Rows whose timestamp cannot be parsed are dropped.
pub fn load_timeseries<T: Scalar>(path: &Path, mapping: &ColumnMapping) -> Result<Dataset<T>> {
    mapping.validate()?;
    load_columns(path, mapping)
}

/// Like [`load_timeseries`] but without the modelling-mapping invariants
/// (target and surrogate presence). Prediction inputs carry only the
/// predictor columns, so this is the loader the prediction path uses.
pub fn load_columns<T: Scalar>(path: &Path, mapping: &ColumnMapping) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingHeader(name.to_string()))
    };
    let ts_idx = find(&mapping.timestamp_header)?;
    let mut col_idx = Vec::with_capacity(mapping.columns.len());
    for spec in &mapping.columns {
        col_idx.push((spec.variable, find(&spec.source_header)?));
    }

    let mut rows: Vec<(NaiveDateTime, Vec<T>)> = Vec::new();
    let mut bad_timestamps = 0usize;
    for record in reader.records() {
        let record = record?;
        let Some(ts) = record.get(ts_idx).and_then(|s| mapping.parse_timestamp(s)) else {
            bad_timestamps += 1;
            continue;
        };
        let values = col_idx
            .iter()
            .map(|&(_, idx)| record.get(idx).map_or(T::nan(), parse_cell))
            .collect();
        rows.push((ts, values));
    }
    if bad_timestamps > 0 {
        log::warn!("dropped {bad_timestamps} row(s) with unparseable timestamps");
    }
    if rows.is_empty() {
        return Err(Error::NoRows);
    }

    rows.sort_by_key(|(ts, _)| *ts);
    let before = rows.len();
    rows.dedup_by_key(|(ts, _)| *ts);
    if rows.len() < before {
        log::warn!(
            "dropped {} duplicate-timestamp row(s), keeping first occurrence",
            before - rows.len()
        );
    }

    let timestamps = rows.iter().map(|(ts, _)| *ts).collect();
    let columns = col_idx
        .iter()
        .enumerate()
        .map(|(j, &(var, _))| (var, rows.iter().map(|(_, vals)| vals[j]).collect()))
        .collect();
    Dataset::from_columns(timestamps, columns)
}

/// Complete-case filter: keep rows where every required column is present.
pub fn drop_missing<T: Scalar>(d: &Dataset<T>, required: &[Variable]) -> Result<Dataset<T>> {
    for &var in required {
        if !d.has_column(var) {
            return Err(Error::MissingColumn(var.to_string()));
        }
    }
    let keep: Vec<usize> = (0..d.n_rows())
        .filter(|&i| {
            required
                .iter()
                .all(|&var| !d.columns[&var][i].is_nan())
        })
        .collect();
    Ok(d.select_rows(&keep))
}

/// Per-column descriptive statistics over present (non-missing) values.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnSummary<T> {
    pub variable: Variable,
    pub n: usize,
    pub mean: T,
    pub sd: T,
    pub min: T,
    pub max: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats<T> {
    pub columns: Vec<ColumnSummary<T>>,
}

/// Mean, sample sd (n−1), min and max per column.
pub fn summarize<T: Scalar>(d: &Dataset<T>) -> Result<SummaryStats<T>> {
    if d.n_rows() < 2 {
        return Err(Error::data(format!(
            "summary requires at least 2 rows, got {}",
            d.n_rows()
        )));
    }
    let mut columns = Vec::new();
    for var in d.variables() {
        let present: Vec<T> = d.columns[&var]
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .collect();
        if present.len() < 2 {
            return Err(Error::data(format!(
                "column {var} has fewer than 2 present values"
            )));
        }
        let n = present.len();
        let mean = present.iter().copied().sum::<T>() / from_count(n);
        let ss = present.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
        let sd = (ss / from_count(n - 1)).sqrt();
        let min = present.iter().copied().fold(T::infinity(), T::min);
        let max = present.iter().copied().fold(T::neg_infinity(), T::max);
        columns.push(ColumnSummary {
            variable: var,
            n,
            mean,
            sd,
            min,
            max,
        });
    }
    Ok(SummaryStats { columns })
}
