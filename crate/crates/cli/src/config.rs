//! Run configuration: flat `key = value` text with `[section]` headers,
//! overlaid by built-in presets and command-line flags.
//!
//! Resolution order is defaults → preset → config file → flags; later
//! sources win key by key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use softsensor_core::data::{ColumnMapping, ColumnSpec, Variable};
use softsensor_core::forest::{FeatureSubsetRule, HyperGrid};
use softsensor_core::preprocess::{TransformKind, TransformSpec};

use crate::{CliError, CliResult};

/// Which columns complete-case filtering requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropPolicy {
    /// Every mapped column must be present (matches joint complete-case
    /// record counts).
    AllMapped,
    /// Only the model's predictors and target must be present.
    ModelColumns,
}

impl FromStr for DropPolicy {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "all_mapped" => Ok(DropPolicy::AllMapped),
            "model" | "model_columns" => Ok(DropPolicy::ModelColumns),
            other => Err(CliError::usage(format!(
                "unknown drop policy '{other}' (expected 'all' or 'model')"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Forest,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Forest => "forest",
        }
    }
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "mlr" => Ok(ModelKind::Linear),
            "forest" | "rf" => Ok(ModelKind::Forest),
            other => Err(CliError::usage(format!(
                "unknown model kind '{other}' (expected 'linear' or 'forest')"
            ))),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub mapping: ColumnMapping,
    pub target: Variable,
    pub predictors: Vec<Variable>,
    pub model_kind: ModelKind,
    pub seed: u64,
    pub validation_fraction: f64,
    pub n_bins: usize,
    pub k: usize,
    pub skew_threshold: f64,
    /// Explicit per-column transforms; when absent the linear path derives
    /// them from the skewness threshold.
    pub transforms: Option<TransformSpec>,
    pub grid: HyperGrid,
    pub tree_candidates: Vec<usize>,
    pub search_n_trees: usize,
    pub tree_improvement_threshold: f64,
    pub drop_policy: DropPolicy,
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.predictors.is_empty() {
            return Err(CliError::usage("no predictors configured"));
        }
        if self.predictors.contains(&self.target) {
            return Err(CliError::usage(format!(
                "target {} must not appear among the predictors",
                self.target
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CliError::usage(format!(
                "validation fraction must lie in (0,1), got {}",
                self.validation_fraction
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &p in &self.predictors {
            if !seen.insert(p) {
                return Err(CliError::usage(format!("duplicate predictor {p}")));
            }
        }
        self.mapping.validate().map_err(CliError::Core)?;
        let mapped: Vec<Variable> = self.mapping.variables();
        for &var in self.predictors.iter().chain([&self.target]) {
            if !mapped.contains(&var) {
                return Err(CliError::usage(format!(
                    "{var} is used by the run but has no column mapping"
                )));
            }
        }
        Ok(())
    }

    /// Columns complete-case filtering requires under the active policy.
    pub fn required_columns(&self) -> Vec<Variable> {
        match self.drop_policy {
            DropPolicy::AllMapped => self.mapping.variables(),
            DropPolicy::ModelColumns => {
                let mut cols = self.predictors.clone();
                cols.push(self.target);
                cols.sort_unstable();
                cols
            }
        }
    }

    /// Flat echo of the resolved run keys, stored in model metadata.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("dataset".into(), self.dataset.display().to_string());
        map.insert("target".into(), self.target.to_string());
        map.insert(
            "predictors".into(),
            self.predictors
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("model".into(), self.model_kind.as_str().into());
        map.insert("seed".into(), self.seed.to_string());
        map.insert(
            "validation_fraction".into(),
            format!("{}", self.validation_fraction),
        );
        map.insert("n_bins".into(), self.n_bins.to_string());
        map.insert("k".into(), self.k.to_string());
        map.insert("skew_threshold".into(), format!("{}", self.skew_threshold));
        map.insert(
            "tree_candidates".into(),
            self.tree_candidates
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("search_n_trees".into(), self.search_n_trees.to_string());
        map.insert(
            "drop_policy".into(),
            match self.drop_policy {
                DropPolicy::AllMapped => "all".into(),
                DropPolicy::ModelColumns => "model".into(),
            },
        );
        map
    }
}

/// Parsed `[section] key = value` file. Unknown sections are rejected so
/// typos fail loudly.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

const KNOWN_SECTIONS: [&str; 5] = ["run", "columns", "units", "transforms", "grid"];

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                if !KNOWN_SECTIONS.contains(&name.as_str()) {
                    return Err(CliError::usage(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let section = current.clone().ok_or_else(|| {
                CliError::usage(format!(
                    "line {}: key outside of any [section]",
                    lineno + 1
                ))
            })?;
            sections
                .entry(section)
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn run_key(&self, key: &str) -> Option<&str> {
        self.sections.get("run")?.get(key).map(String::as_str)
    }
}

fn parse_list<T: FromStr>(value: &str, what: &str) -> CliResult<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| CliError::usage(format!("invalid {what} value '{s}'")))
        })
        .collect()
}

fn parse_variables(value: &str) -> CliResult<Vec<Variable>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Variable::from_str(s).map_err(CliError::Core))
        .collect()
}

fn parse_transform_kind(value: &str) -> CliResult<TransformKind> {
    match value.trim().to_ascii_lowercase().as_str() {
        "identity" | "none" => Ok(TransformKind::Identity),
        "log" | "ln" | "natural_log" => Ok(TransformKind::NaturalLog),
        "cube" => Ok(TransformKind::Cube),
        other => Err(CliError::usage(format!(
            "unknown transform '{other}' (expected identity, log or cube)"
        ))),
    }
}

fn parse_subset_rule(value: &str) -> CliResult<FeatureSubsetRule> {
    match value.trim().to_ascii_lowercase().as_str() {
        "all" | "auto" => Ok(FeatureSubsetRule::All),
        "sqrt" => Ok(FeatureSubsetRule::Sqrt),
        "log2" => Ok(FeatureSubsetRule::Log2),
        other => Err(CliError::usage(format!(
            "unknown feature subset rule '{other}' (expected all, sqrt or log2)"
        ))),
    }
}

/// Unresolved overrides collected from the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub dataset: Option<PathBuf>,
    pub target: Option<String>,
    pub predictors: Option<Vec<String>>,
    pub model_kind: Option<String>,
    pub seed: Option<u64>,
    pub validation_fraction: Option<f64>,
    pub n_bins: Option<usize>,
    pub k: Option<usize>,
    pub skew_threshold: Option<f64>,
    pub drop_policy: Option<String>,
    pub timestamp_format: Option<String>,
}

/// Built-in column sets and transform recipes for the two studied
/// catchments. Source headers default to the canonical names; override them
/// in `[columns]` to match a concrete export.
pub fn preset(name: &str) -> CliResult<(ColumnMapping, TransformSpec, Vec<Variable>, Variable)> {
    let spec = |variable: Variable| ColumnSpec {
        variable,
        source_header: variable.to_string(),
        unit: default_unit(variable).to_string(),
    };
    let surrogates = vec![
        Variable::Ec,
        Variable::Turb,
        Variable::Temp,
        Variable::DoSat,
        Variable::Ph,
        Variable::Chl,
        Variable::Flow,
    ];
    match name.trim().to_ascii_lowercase().as_str() {
        "enborne" => {
            let mut columns: Vec<ColumnSpec> = surrogates.iter().map(|&v| spec(v)).collect();
            columns.push(spec(Variable::Trp));
            columns.push(spec(Variable::No3n));
            let mapping = ColumnMapping::new("Timestamp", columns).map_err(CliError::Core)?;
            let transforms = TransformSpec::identity()
                .with(Variable::Turb, TransformKind::NaturalLog)
                .with(Variable::Chl, TransformKind::NaturalLog)
                .with(Variable::DoSat, TransformKind::NaturalLog)
                .with(Variable::Flow, TransformKind::NaturalLog);
            Ok((mapping, transforms, surrogates, Variable::Trp))
        }
        "cut" => {
            let mut columns: Vec<ColumnSpec> = surrogates.iter().map(|&v| spec(v)).collect();
            columns.push(spec(Variable::Trp));
            columns.push(spec(Variable::Tp));
            columns.push(spec(Variable::Nh4n));
            let mapping = ColumnMapping::new("Timestamp", columns).map_err(CliError::Core)?;
            let transforms = TransformSpec::identity()
                .with(Variable::Turb, TransformKind::NaturalLog)
                .with(Variable::Chl, TransformKind::NaturalLog)
                .with(Variable::Flow, TransformKind::NaturalLog)
                .with(Variable::Ec, TransformKind::Cube);
            Ok((mapping, transforms, surrogates, Variable::Trp))
        }
        other => Err(CliError::usage(format!(
            "unknown preset '{other}' (expected 'enborne' or 'cut')"
        ))),
    }
}

fn default_unit(variable: Variable) -> &'static str {
    match variable {
        Variable::Flow => "m3/s",
        Variable::Temp => "degC",
        Variable::Ph => "-",
        Variable::DoSat => "%",
        Variable::Turb => "NTU",
        Variable::Ec => "uS/cm",
        Variable::Chl => "ug/l",
        Variable::Trp | Variable::Tp => "mg P/l",
        Variable::No3n | Variable::Nh4n => "mg N/l",
    }
}

/// Resolve a run configuration from preset, config file and flag overrides.
pub fn resolve(overrides: &Overrides) -> CliResult<RunConfig> {
    let mut mapping: Option<ColumnMapping> = None;
    let mut transforms: Option<TransformSpec> = None;
    let mut predictors: Option<Vec<Variable>> = None;
    let mut target: Option<Variable> = None;
    let mut dataset: Option<PathBuf> = None;
    let mut model_kind = ModelKind::Forest;
    let mut seed = 0u64;
    let mut validation_fraction = 0.10;
    let mut n_bins = 10usize;
    let mut k = 5usize;
    let mut skew_threshold = 0.5f64;
    let mut tree_candidates = vec![1usize, 10, 50, 100, 200];
    let mut search_n_trees = 50usize;
    let tree_improvement_threshold = 0.05f64;
    let mut drop_policy = DropPolicy::AllMapped;
    let mut grid = HyperGrid::default();
    let mut timestamp_format: Option<String> = None;

    if let Some(name) = &overrides.preset {
        let (m, t, p, tgt) = preset(name)?;
        mapping = Some(m);
        transforms = Some(t);
        predictors = Some(p);
        target = Some(tgt);
    }

    if let Some(path) = &overrides.config {
        let file = ConfigFile::load(path)?;

        if let Some(cols) = file.sections.get("columns") {
            let ts_header = cols
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("timestamp"))
                .map(|(_, v)| v.clone());
            let units = file.sections.get("units");
            let mut specs = Vec::new();
            for (key, header) in cols {
                if key.eq_ignore_ascii_case("timestamp") {
                    continue;
                }
                let variable = Variable::from_str(key).map_err(CliError::Core)?;
                let unit = units
                    .and_then(|u| u.get(key))
                    .cloned()
                    .unwrap_or_else(|| default_unit(variable).to_string());
                specs.push(ColumnSpec {
                    variable,
                    source_header: header.clone(),
                    unit,
                });
            }
            specs.sort_by_key(|s| s.variable);
            let ts = ts_header.ok_or_else(|| {
                CliError::usage("[columns] must map Timestamp to a source header")
            })?;
            mapping = Some(ColumnMapping::new(ts, specs).map_err(CliError::Core)?);
        }

        if let Some(tr) = file.sections.get("transforms") {
            let mut spec = TransformSpec::identity();
            for (key, value) in tr {
                let variable = Variable::from_str(key).map_err(CliError::Core)?;
                spec = spec.with(variable, parse_transform_kind(value)?);
            }
            transforms = Some(spec);
        }

        if let Some(g) = file.sections.get("grid") {
            let lookup = |key: &str| g.get(key).map(String::as_str);
            if let Some(v) = lookup("bootstrap") {
                grid.bootstrap = parse_list::<bool>(v, "bootstrap")?;
            }
            if let Some(v) = lookup("feature_subset_rule") {
                grid.feature_subset_rule = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(parse_subset_rule)
                    .collect::<CliResult<_>>()?;
            }
            if let Some(v) = lookup("max_depth") {
                grid.max_depth = parse_list(v, "max_depth")?;
            }
            if let Some(v) = lookup("min_samples_split") {
                grid.min_samples_split = parse_list(v, "min_samples_split")?;
            }
            if let Some(v) = lookup("min_samples_leaf") {
                grid.min_samples_leaf = parse_list(v, "min_samples_leaf")?;
            }
        }

        if let Some(v) = file.run_key("dataset") {
            dataset = Some(PathBuf::from(v));
        }
        if let Some(v) = file.run_key("target") {
            target = Some(Variable::from_str(v).map_err(CliError::Core)?);
        }
        if let Some(v) = file.run_key("predictors") {
            predictors = Some(parse_variables(v)?);
        }
        if let Some(v) = file.run_key("model") {
            model_kind = v.parse()?;
        }
        if let Some(v) = file.run_key("seed") {
            seed = v
                .parse()
                .map_err(|_| CliError::usage(format!("invalid seed '{v}'")))?;
        }
        if let Some(v) = file.run_key("validation_fraction") {
            validation_fraction = v
                .parse()
                .map_err(|_| CliError::usage(format!("invalid validation_fraction '{v}'")))?;
        }
        if let Some(v) = file.run_key("n_bins") {
            n_bins = v
                .parse()
                .map_err(|_| CliError::usage(format!("invalid n_bins '{v}'")))?;
        }
        if let Some(v) = file.run_key("k") {
            k = v
                .parse()
                .map_err(|_| CliError::usage(format!("invalid k '{v}'")))?;
        }
        if let Some(v) = file.run_key("skew_threshold") {
            skew_threshold = v
                .parse()
                .map_err(|_| CliError::usage(format!("invalid skew_threshold '{v}'")))?;
        }
        if let Some(v) = file.run_key("tree_candidates") {
            tree_candidates = parse_list(v, "tree_candidates")?;
        }
        if let Some(v) = file.run_key("search_n_trees") {
            search_n_trees = v
                .parse()
                .map_err(|_| CliError::usage(format!("invalid search_n_trees '{v}'")))?;
        }
        if let Some(v) = file.run_key("drop_policy") {
            drop_policy = v.parse()?;
        }
        if let Some(v) = file.run_key("timestamp_format") {
            timestamp_format = Some(v.to_string());
        }
        if let Some(v) = file.run_key("preset") {
            if mapping.is_none() {
                let (m, t, p, tgt) = preset(v)?;
                mapping = Some(m);
                if transforms.is_none() {
                    transforms = Some(t);
                }
                if predictors.is_none() {
                    predictors = Some(p);
                }
                if target.is_none() {
                    target = Some(tgt);
                }
            }
        }
    }

    // Flag overrides win last.
    if let Some(v) = &overrides.dataset {
        dataset = Some(v.clone());
    }
    if let Some(v) = &overrides.target {
        target = Some(Variable::from_str(v).map_err(CliError::Core)?);
    }
    if let Some(v) = &overrides.predictors {
        predictors = Some(
            v.iter()
                .map(|s| Variable::from_str(s).map_err(CliError::Core))
                .collect::<CliResult<_>>()?,
        );
    }
    if let Some(v) = &overrides.model_kind {
        model_kind = v.parse()?;
    }
    if let Some(v) = overrides.seed {
        seed = v;
    }
    if let Some(v) = overrides.validation_fraction {
        validation_fraction = v;
    }
    if let Some(v) = overrides.n_bins {
        n_bins = v;
    }
    if let Some(v) = overrides.k {
        k = v;
    }
    if let Some(v) = overrides.skew_threshold {
        skew_threshold = v;
    }
    if let Some(v) = &overrides.drop_policy {
        drop_policy = v.parse()?;
    }
    if let Some(v) = &overrides.timestamp_format {
        timestamp_format = Some(v.clone());
    }

    let mut mapping = mapping.ok_or_else(|| {
        CliError::usage("no column mapping: provide --preset or a [columns] section")
    })?;
    if let Some(fmt) = timestamp_format {
        mapping = mapping.with_timestamp_format(fmt);
    }
    let dataset =
        dataset.ok_or_else(|| CliError::usage("no dataset path configured (--dataset)"))?;
    let target = target.ok_or_else(|| CliError::usage("no target configured (--target)"))?;
    let predictors = predictors
        .ok_or_else(|| CliError::usage("no predictors configured (--predictors)"))?;

    let cfg = RunConfig {
        dataset,
        mapping,
        target,
        predictors,
        model_kind,
        seed,
        validation_fraction,
        n_bins,
        k,
        skew_threshold,
        transforms,
        grid,
        tree_candidates,
        search_n_trees,
        tree_improvement_threshold,
        drop_policy,
    };
    cfg.validate()?;
    Ok(cfg)
}
