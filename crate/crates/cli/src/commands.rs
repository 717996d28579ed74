//! Command implementations. Every command is a pure function of
//! `(configuration, input files, seed)`: rerunning one produces byte-identical
//! output artifacts.

use std::path::Path;

use softsensor_core::data::{self, Variable};
use softsensor_core::featsel::{self, ModelKind as SelKind, SelectionTrace};
use softsensor_core::forest::{self, HyperParams};
use softsensor_core::linear;
use softsensor_core::metrics::{self, EvaluationReport};
use softsensor_core::preprocess::{self, TransformSpec};
use softsensor_core::resample::{self, SplitPlan};
use softsensor_core::rng::{purpose, sub_seed};
use softsensor_core::{Dataset64, Matrix64};

use crate::config::{ModelKind, RunConfig};
use crate::modelfile::{sha256_file, Metadata, ModelFile};
use crate::report;
use crate::{CliError, CliResult};

/// Complete-case dataset plus its provenance.
pub struct LoadedRun {
    pub dataset: Dataset64,
    pub dataset_sha256: String,
    pub raw_rows: usize,
}

/// Load the configured CSV and apply complete-case filtering.
pub fn load_run(cfg: &RunConfig) -> CliResult<LoadedRun> {
    let raw: Dataset64 = data::load_timeseries(&cfg.dataset, &cfg.mapping)?;
    let raw_rows = raw.n_rows();
    let filtered = data::drop_missing(&raw, &cfg.required_columns())?;
    log::info!(
        "loaded {} rows, {} complete cases",
        raw_rows,
        filtered.n_rows()
    );
    Ok(LoadedRun {
        dataset: filtered,
        dataset_sha256: sha256_file(&cfg.dataset)?,
        raw_rows,
    })
}

/// Stratified validation holdout on the configured target.
pub fn holdout(cfg: &RunConfig, d: &Dataset64) -> CliResult<SplitPlan> {
    let y = d.column(cfg.target)?;
    Ok(resample::stratified_holdout(
        y,
        cfg.validation_fraction,
        cfg.n_bins,
        cfg.seed,
    )?)
}

/// The transform recipe for the linear path: explicit configuration when
/// present, otherwise derived from predictor skewness.
pub fn linear_transforms(cfg: &RunConfig, d: &Dataset64) -> CliResult<TransformSpec> {
    if let Some(spec) = &cfg.transforms {
        return Ok(spec.clone());
    }
    let mut spec = preprocess::suggest_transforms(d, cfg.skew_threshold)?;
    // Targets are never transformed.
    spec.columns.retain(|var, _| cfg.predictors.contains(var));
    Ok(spec)
}

/// Summary statistics over the complete cases.
pub fn cmd_summary(cfg: &RunConfig, out: Option<&Path>) -> CliResult<data::SummaryStats<f64>> {
    let run = load_run(cfg)?;
    let stats = data::summarize(&run.dataset)?;
    println!(
        "{} rows ({} raw records)",
        run.dataset.n_rows(),
        run.raw_rows
    );
    report::print_table(
        &["variable", "unit", "n", "mean", "sd", "min", "max"],
        &report::summary_rows(&stats, &cfg.mapping),
    );
    if let Some(path) = out {
        report::write_summary_csv(&stats, &cfg.mapping, path)?;
    }
    Ok(stats)
}

/// Correlation screening of the predictors against the target, on
/// transformed columns unless `raw` is set.
pub fn cmd_correlate(
    cfg: &RunConfig,
    raw: bool,
    out: Option<&Path>,
) -> CliResult<Vec<(Variable, f64)>> {
    let run = load_run(cfg)?;
    let d = if raw {
        run.dataset
    } else {
        let spec = linear_transforms(cfg, &run.dataset)?;
        preprocess::apply_transform(&run.dataset, &spec)?
    };
    let table = preprocess::correlation_table(&d, cfg.target, &cfg.predictors)?;
    report::print_table(
        &["rank", "predictor", "r"],
        &table
            .iter()
            .enumerate()
            .map(|(i, (v, r))| vec![(i + 1).to_string(), v.to_string(), format!("{r:.4}")])
            .collect::<Vec<_>>(),
    );
    if let Some(path) = out {
        report::write_correlation_csv(&table, path)?;
    }
    Ok(table)
}

fn working_design(
    cfg: &RunConfig,
    d: &Dataset64,
    plan: &SplitPlan,
    predictors: &[Variable],
) -> CliResult<(Dataset64, Matrix64, Vec<f64>)> {
    let working = d.select_rows(&plan.working_indices);
    let x = working.design_matrix(predictors)?;
    let y = working.column(cfg.target)?.to_vec();
    Ok((working, x, y))
}

/// Grid search plus tree-count selection on the working set.
pub fn tune_forest(cfg: &RunConfig, x: &Matrix64, y: &[f64]) -> CliResult<(HyperParams, usize)> {
    let (best, _scores) = forest::grid_search(
        x,
        y,
        &cfg.grid,
        cfg.k,
        cfg.search_n_trees,
        cfg.seed,
    )?;
    log::info!(
        "grid search winner: bootstrap={} rule={:?} depth={} split={} leaf={}",
        best.bootstrap,
        best.feature_subset_rule,
        best.max_depth,
        best.min_samples_split,
        best.min_samples_leaf
    );
    let folds = resample::kfold_indices(y.len(), cfg.k, sub_seed(cfg.seed, purpose::SELECT, 0))?;
    let n_trees = forest::select_n_trees(
        x,
        y,
        &best,
        &cfg.tree_candidates,
        cfg.tree_improvement_threshold,
        &folds,
    )?;
    log::info!("selected {n_trees} trees");
    Ok((best, n_trees))
}

/// Predictor-subset selection. Linear models run stepwise forward selection
/// on transformed, working-set columns; forests run the recursive ranking
/// with grid-searched hyperparameters.
pub fn cmd_select(
    cfg: &RunConfig,
    max_k: Option<usize>,
    out: Option<&Path>,
) -> CliResult<SelectionTrace<f64>> {
    let run = load_run(cfg)?;
    let plan = holdout(cfg, &run.dataset)?;
    let names: Vec<String> = cfg.predictors.iter().map(|p| p.to_string()).collect();
    let max_k = max_k.unwrap_or(cfg.predictors.len());

    let trace = match cfg.model_kind {
        ModelKind::Linear => {
            let spec = linear_transforms(cfg, &run.dataset)?;
            let transformed = preprocess::apply_transform(&run.dataset, &spec)?;
            let (_, x, y) = working_design(cfg, &transformed, &plan, &cfg.predictors)?;
            let folds =
                resample::kfold_indices(y.len(), cfg.k, sub_seed(cfg.seed, purpose::SELECT, 0))?;
            featsel::forward_select(
                SelKind::Linear,
                &x,
                &y,
                &names,
                max_k,
                &folds,
                None,
                cfg.seed,
            )?
        }
        ModelKind::Forest => {
            let (_, x, y) = working_design(cfg, &run.dataset, &plan, &cfg.predictors)?;
            let (hp, n_trees) = tune_forest(cfg, &x, &y)?;
            let folds =
                resample::kfold_indices(y.len(), cfg.k, sub_seed(cfg.seed, purpose::SELECT, 0))?;
            if max_k < cfg.predictors.len() {
                let mut trace = featsel::forward_select(
                    SelKind::Forest,
                    &x,
                    &y,
                    &names,
                    max_k,
                    &folds,
                    Some(&hp),
                    cfg.seed,
                )?;
                featsel::rescore_forest_prefixes(
                    &mut trace,
                    &x,
                    &y,
                    &folds,
                    &hp.clone().with_n_trees(n_trees),
                )?;
                trace
            } else {
                featsel::recursive_forest_ranking(
                    &x,
                    &y,
                    &names,
                    &folds,
                    &hp,
                    &hp.clone().with_n_trees(n_trees),
                    cfg.seed,
                )?
            }
        }
    };

    report::print_table(
        &["rank", "predictor", "score_mean", "score_sd", "rmse_mean", "rmse_sd"],
        &trace
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                vec![
                    (i + 1).to_string(),
                    s.predictor_name.clone(),
                    format!("{:.4}", s.score_mean),
                    format!("{:.4}", s.score_sd),
                    format!("{:.4}", s.cv_rmse_mean),
                    format!("{:.4}", s.cv_rmse_sd),
                ]
            })
            .collect::<Vec<_>>(),
    );
    if let Some(path) = out {
        trace.write_csv(path)?;
    }
    Ok(trace)
}

fn metadata_for(
    cfg: &RunConfig,
    run: &LoadedRun,
    working: &Dataset64,
) -> Metadata {
    let fmt = "%Y-%m-%dT%H:%M:%S";
    let (start, end) = match (working.timestamps().first(), working.timestamps().last()) {
        (Some(a), Some(b)) => (a.format(fmt).to_string(), b.format(fmt).to_string()),
        _ => (String::new(), String::new()),
    };
    Metadata {
        dataset_sha256: run.dataset_sha256.clone(),
        n_training_rows: working.n_rows(),
        data_start: start,
        data_end: end,
        target: cfg.target,
        mapping: cfg.mapping.clone(),
        config: cfg.echo(),
    }
}

/// Train the configured model on the working rows and persist it.
pub fn cmd_train(
    cfg: &RunConfig,
    out: &Path,
    export_split: Option<&Path>,
) -> CliResult<ModelFile> {
    let run = load_run(cfg)?;
    let plan = holdout(cfg, &run.dataset)?;
    if let Some(path) = export_split {
        plan.write_csv(path)?;
    }

    let working = run.dataset.select_rows(&plan.working_indices);
    let file = match cfg.model_kind {
        ModelKind::Linear => {
            let spec = linear_transforms(cfg, &run.dataset)?;
            let model = linear::fit_linear_model(
                &run.dataset,
                cfg.target,
                &cfg.predictors,
                &spec,
                &plan.working_indices,
            )?;
            ModelFile::from_linear(&model, cfg.seed, metadata_for(cfg, &run, &working))
        }
        ModelKind::Forest => {
            let x = working.design_matrix(&cfg.predictors)?;
            let y = working.column(cfg.target)?.to_vec();
            let (hp, n_trees) = tune_forest(cfg, &x, &y)?;
            let final_hp = hp
                .with_n_trees(n_trees)
                .with_seed(sub_seed(cfg.seed, purpose::FINAL_FIT, 0));
            let model = forest::fit_forest(&x, &y, &cfg.predictors, &final_hp)?;
            ModelFile::from_forest(&model, metadata_for(cfg, &run, &working))
        }
    };
    file.save(out)?;
    println!("model written to {}", out.display());
    Ok(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Validation,
    Working,
}

/// Evaluate a persisted model on the held-out validation rows (or, with a
/// warning, on the rows it was trained on).
pub fn cmd_evaluate(
    model_path: &Path,
    cfg: &RunConfig,
    split: EvalSplit,
    out: Option<&Path>,
) -> CliResult<EvaluationReport<f64>> {
    let model = ModelFile::load(model_path)?;
    let run = load_run(cfg)?;
    if model.metadata.dataset_sha256 != run.dataset_sha256 {
        log::warn!("dataset hash differs from the one the model was trained on");
    }
    for key in ["seed", "validation_fraction", "n_bins"] {
        let now = cfg.echo().get(key).cloned();
        let then = model.metadata.config.get(key).cloned();
        if now != then {
            log::warn!(
                "config key '{key}' differs from training ({:?} vs {:?}); the split may not match",
                now,
                then
            );
        }
    }
    let target = model.metadata.target;
    if target != cfg.target {
        log::warn!(
            "configured target {} differs from the model's {target}; using the model's",
            cfg.target
        );
    }

    let plan = holdout(cfg, &run.dataset)?;
    let rows = match split {
        EvalSplit::Validation => &plan.validation_indices,
        EvalSplit::Working => {
            log::warn!("evaluating on the training (working) split, not on held-out data");
            eprintln!("warning: evaluating on the training split");
            &plan.working_indices
        }
    };
    let eval_d = run.dataset.select_rows(rows);
    let observed = eval_d.column(target)?.to_vec();
    let predicted = model.predict_dataset(&eval_d)?;

    let pairs: Vec<(f64, f64)> = observed
        .iter()
        .zip(&predicted)
        .filter(|(o, p)| !o.is_nan() && !p.is_nan())
        .map(|(&o, &p)| (o, p))
        .collect();
    let skipped = observed.len() - pairs.len();
    if skipped > 0 {
        log::warn!("{skipped} row(s) skipped for missing values");
    }
    let (y, y_hat): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let rep = metrics::evaluate(&y, &y_hat, model.descriptor())?;
    report::print_table(
        &["model", "n", "rmse", "rmse_sd", "nrmse_%", "pbias_%"],
        &report::evaluation_rows(std::slice::from_ref(&rep)),
    );
    if let Some(path) = out {
        report::write_evaluation_csv(std::slice::from_ref(&rep), path)?;
    }
    Ok(rep)
}

/// Predict a CSV of raw predictor rows; writes `(timestamp, prediction)`
/// and returns the predictions with the count of rows left missing.
pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    out: &Path,
) -> CliResult<(Vec<f64>, usize)> {
    let model = ModelFile::load(model_path)?;
    let mut mapping = model.metadata.mapping.clone();
    mapping
        .columns
        .retain(|spec| model.predictors.contains(&spec.variable));
    let d: Dataset64 = data::load_columns(input, &mapping)?;
    let predictions = model.predict_dataset(&d)?;

    let mut w = csv::Writer::from_path(out).map_err(softsensor_core::Error::from)?;
    w.write_record(["timestamp", "prediction"])
        .map_err(softsensor_core::Error::from)?;
    for (ts, p) in d.timestamps().iter().zip(&predictions) {
        w.write_record([
            ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
            if p.is_nan() { String::new() } else { format!("{p}") },
        ])
        .map_err(softsensor_core::Error::from)?;
    }
    w.flush().map_err(softsensor_core::Error::from)?;

    let missing = predictions.iter().filter(|p| p.is_nan()).count();
    if missing > 0 {
        eprintln!("warning: {missing} row(s) missing a predictor value");
    }
    println!("{} prediction(s) written to {}", predictions.len(), out.display());
    Ok((predictions, missing))
}

/// Export `(index, observed, predicted)` for the first `max_rows` validation
/// rows.
pub fn cmd_export_plot(
    model_path: &Path,
    cfg: &RunConfig,
    max_rows: usize,
    out: &Path,
) -> CliResult<usize> {
    let model = ModelFile::load(model_path)?;
    let run = load_run(cfg)?;
    let plan = holdout(cfg, &run.dataset)?;
    let rows: Vec<usize> = plan
        .validation_indices
        .iter()
        .copied()
        .take(max_rows)
        .collect();
    let eval_d = run.dataset.select_rows(&rows);
    let observed = eval_d.column(model.metadata.target)?.to_vec();
    let predicted = model.predict_dataset(&eval_d)?;

    let mut w = csv::Writer::from_path(out).map_err(softsensor_core::Error::from)?;
    w.write_record(["index", "observed", "predicted"])
        .map_err(softsensor_core::Error::from)?;
    for (i, (o, p)) in observed.iter().zip(&predicted).enumerate() {
        w.write_record([
            i.to_string(),
            format!("{o}"),
            if p.is_nan() { String::new() } else { format!("{p}") },
        ])
        .map_err(softsensor_core::Error::from)?;
    }
    w.flush().map_err(softsensor_core::Error::from)?;
    println!("{} row(s) written to {}", rows.len(), out.display());
    Ok(rows.len())
}

/// Flow-backup study: train forests on `{Flow}` and `{Flow, partner}` and
/// report validation error. The partner defaults to the surrogate most
/// correlated with the target (Flow excluded).
pub fn cmd_flow_backup(
    cfg: &RunConfig,
    partner: Option<Variable>,
    out: Option<&Path>,
) -> CliResult<Vec<EvaluationReport<f64>>> {
    if !cfg.predictors.contains(&Variable::Flow) {
        return Err(CliError::usage("flow-backup needs Flow among the predictors"));
    }
    let run = load_run(cfg)?;
    let plan = holdout(cfg, &run.dataset)?;
    let validation = run.dataset.select_rows(&plan.validation_indices);

    let partner = match partner {
        Some(v) => v,
        None => {
            let pool: Vec<Variable> = cfg
                .predictors
                .iter()
                .copied()
                .filter(|&v| v != Variable::Flow)
                .collect();
            let table = preprocess::correlation_table(&run.dataset, cfg.target, &pool)?;
            table
                .first()
                .map(|&(v, _)| v)
                .ok_or_else(|| CliError::usage("no partner surrogate available"))?
        }
    };

    let mut reports = Vec::new();
    for predictors in [vec![Variable::Flow], vec![Variable::Flow, partner]] {
        let (_, x, y) = working_design(cfg, &run.dataset, &plan, &predictors)?;
        let (hp, n_trees) = tune_forest(cfg, &x, &y)?;
        let final_hp = hp
            .with_n_trees(n_trees)
            .with_seed(sub_seed(cfg.seed, purpose::FINAL_FIT, 0));
        let model = forest::fit_forest(&x, &y, &predictors, &final_hp)?;
        let observed = validation.column(cfg.target)?.to_vec();
        let predicted = model.predict_dataset(&validation)?;
        let label = format!(
            "forest {} ~ {}",
            cfg.target,
            predictors
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join("+")
        );
        reports.push(metrics::evaluate(&observed, &predicted, label)?);
    }

    report::print_table(
        &["model", "n", "rmse", "rmse_sd", "nrmse_%", "pbias_%"],
        &report::evaluation_rows(&reports),
    );
    if let Some(path) = out {
        report::write_evaluation_csv(&reports, path)?;
    }
    Ok(reports)
}

/// Indented text rendering of one tree of a forest model.
pub fn cmd_dump_tree(model_path: &Path, tree: usize) -> CliResult<String> {
    let model = ModelFile::load(model_path)?;
    let forest = model.to_forest()?;
    let text = forest.dump_tree(tree)?;
    print!("{text}");
    Ok(text)
}
