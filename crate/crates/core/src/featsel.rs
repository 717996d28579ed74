//! Predictor-subset search.
//!
//! Linear models use stepwise forward selection scored by adjusted R² on
//! pooled held-out fold predictions; forests use the same greedy procedure
//! scored by mean cross-validated RMSE and, on top of it, the recursive
//! ranking that repeatedly discards the last-included variable.
//!
//! Fold assignments are fixed once per selection run so every candidate
//! subset is compared on identical splits, and candidate evaluations are
//! pure functions of `(data, subset, seed)` — evaluating them in parallel
//! cannot change the selected variable.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::forest::{cv_rmse_forest, HyperParams};
use crate::linear::fit_ols;
use crate::matrix::Matrix;
use crate::metrics::{self, pairwise_sum};
use crate::resample::FoldPlan;
use crate::scalar::{from_count, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringKind {
    AdjustedR2,
    CvRmse,
}

/// One inclusion step: the predictor added at this subset size, the
/// selection score of the resulting subset, its CV RMSE, and the scores of
/// every candidate evaluated at the step (for auditability).
#[derive(Debug, Clone, Serialize)]
pub struct SelectionStep<T> {
    pub predictor_index: usize,
    pub predictor_name: String,
    pub score_mean: T,
    pub score_sd: T,
    pub cv_rmse_mean: T,
    pub cv_rmse_sd: T,
    /// `(candidate_index, selection score)` for each candidate tried here.
    pub evaluated: Vec<(usize, T)>,
}

/// Ordered predictor-inclusion record with per-size scores.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionTrace<T> {
    pub model_kind: ModelKind,
    pub scoring: ScoringKind,
    pub seed: u64,
    pub steps: Vec<SelectionStep<T>>,
}

impl<T: Scalar> SelectionTrace<T> {
    pub fn included(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.predictor_index).collect()
    }

    pub fn included_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.predictor_name.as_str()).collect()
    }

    /// Export as `(rank, predictor, score_mean, score_sd, rmse_mean,
    /// rmse_sd)` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rank", "predictor", "score_mean", "score_sd", "rmse_mean", "rmse_sd"])?;
        for (rank, step) in self.steps.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                step.predictor_name.clone(),
                format!("{}", step.score_mean),
                format!("{}", step.score_sd),
                format!("{}", step.cv_rmse_mean),
                format!("{}", step.cv_rmse_sd),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Adjusted R²: `1 − ((N−1)/(N−p−1))·(1 − R²)`.
pub fn adjusted_r2<T: Scalar>(y: &[T], y_hat: &[T], n: usize, p: usize) -> Result<T> {
    if y.len() != y_hat.len() {
        return Err(Error::data("length mismatch between observed and predicted"));
    }
    if n <= p + 1 {
        return Err(Error::numeric(format!(
            "adjusted R² undefined for N={n} observations and p={p} predictors"
        )));
    }
    let mean = pairwise_sum(y) / from_count(y.len());
    let ss_res: Vec<T> = y.iter().zip(y_hat).map(|(&o, &h)| (o - h) * (o - h)).collect();
    let ss_tot: Vec<T> = y.iter().map(|&o| (o - mean) * (o - mean)).collect();
    let sst = pairwise_sum(&ss_tot);
    if sst <= T::zero() {
        return Err(Error::numeric("adjusted R² undefined for constant target"));
    }
    let r2 = T::one() - pairwise_sum(&ss_res) / sst;
    let nf = from_count::<T>(n);
    let pf = from_count::<T>(p);
    Ok(T::one() - (nf - T::one()) / (nf - pf - T::one()) * (T::one() - r2))
}

/// Per-candidate evaluation result.
struct CandidateScore<T> {
    selection: T,
    selection_sd: T,
    rmse_mean: T,
    rmse_sd: T,
}

/// Score one subset by pooled out-of-fold adjusted R² (linear) with the
/// fold-wise RMSE summary alongside.
fn score_linear_subset<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    subset: &[usize],
    folds: &FoldPlan,
) -> Result<CandidateScore<T>> {
    let sub = x.select_cols(subset);
    let mut pooled_y: Vec<T> = Vec::with_capacity(y.len());
    let mut pooled_hat: Vec<T> = Vec::with_capacity(y.len());
    let mut fold_r2: Vec<T> = Vec::with_capacity(folds.k);
    let cv = metrics::cross_val_rmse(&sub, y, folds, |train_x, train_y, test_x, _| {
        let fit = fit_ols(train_x, train_y)?;
        Ok(fit.predict(test_x))
    })?;
    // Second pass to pool out-of-fold predictions for the adjusted R².
    for (train, test) in folds.folds() {
        let train_x = sub.select_rows(&train);
        let train_y: Vec<T> = train.iter().map(|&r| y[r]).collect();
        let fit = fit_ols(&train_x, &train_y)?;
        let preds = fit.predict(&sub.select_rows(&test));
        let test_y: Vec<T> = test.iter().map(|&r| y[r]).collect();
        if let Ok(r2) = adjusted_r2(&test_y, &preds, test_y.len(), subset.len()) {
            fold_r2.push(r2);
        }
        pooled_hat.extend(preds);
        pooled_y.extend(test_y);
    }
    let selection = adjusted_r2(&pooled_y, &pooled_hat, pooled_y.len(), subset.len())?;
    let selection_sd = if fold_r2.len() > 1 {
        let m = pairwise_sum(&fold_r2) / from_count(fold_r2.len());
        let sq: Vec<T> = fold_r2.iter().map(|&v| (v - m) * (v - m)).collect();
        (pairwise_sum(&sq) / from_count(fold_r2.len() - 1)).sqrt()
    } else {
        T::zero()
    };
    Ok(CandidateScore {
        selection,
        selection_sd,
        rmse_mean: cv.mean,
        rmse_sd: cv.sd,
    })
}

fn score_forest_subset<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    subset: &[usize],
    folds: &FoldPlan,
    hp: &HyperParams,
) -> Result<CandidateScore<T>> {
    let sub = x.select_cols(subset);
    let cv = cv_rmse_forest(&sub, y, hp, folds)?;
    Ok(CandidateScore {
        selection: cv.mean,
        selection_sd: cv.sd,
        rmse_mean: cv.mean,
        rmse_sd: cv.sd,
    })
}

/// Greedy stepwise forward subset selection.
///
/// At each step every not-yet-included predictor is joined to the current
/// subset and scored by cross-validation; the best one (highest adjusted R²
/// for linear models, lowest mean CV RMSE for forests) is added. Ties keep
/// the candidate that comes first in the given predictor order.
///
/// `forest_hp` supplies the tuned hyperparameters for forest evaluations
/// (typically with the reduced search tree count) and is ignored for linear
/// models.
pub fn forward_select<T: Scalar>(
    model_kind: ModelKind,
    x: &Matrix<T>,
    y: &[T],
    names: &[String],
    max_k: usize,
    folds: &FoldPlan,
    forest_hp: Option<&HyperParams>,
    seed: u64,
) -> Result<SelectionTrace<T>> {
    let p = x.n_cols();
    if names.len() != p {
        return Err(Error::data(format!("{} names for {p} columns", names.len())));
    }
    if max_k > p {
        return Err(Error::data(format!("max_k={max_k} exceeds {p} predictors")));
    }
    let hp = match model_kind {
        ModelKind::Forest => Some(
            forest_hp
                .ok_or_else(|| Error::data("forest selection needs hyperparameters"))?,
        ),
        ModelKind::Linear => None,
    };

    let mut included: Vec<usize> = Vec::with_capacity(max_k);
    let mut steps: Vec<SelectionStep<T>> = Vec::with_capacity(max_k);
    while included.len() < max_k {
        let remaining: Vec<usize> = (0..p).filter(|i| !included.contains(i)).collect();
        let scored: Vec<(usize, CandidateScore<T>)> = remaining
            .par_iter()
            .map(|&cand| {
                let mut subset = included.clone();
                subset.push(cand);
                let score = match model_kind {
                    ModelKind::Linear => score_linear_subset(x, y, &subset, folds)?,
                    ModelKind::Forest => {
                        score_forest_subset(x, y, &subset, folds, hp.unwrap())?
                    }
                };
                Ok((cand, score))
            })
            .collect::<Result<_>>()?;

        // Serial reduction in candidate order keeps ties deterministic.
        let mut best = 0;
        for i in 1..scored.len() {
            let better = match model_kind {
                ModelKind::Linear => scored[i].1.selection > scored[best].1.selection,
                ModelKind::Forest => scored[i].1.selection < scored[best].1.selection,
            };
            if better {
                best = i;
            }
        }
        let evaluated: Vec<(usize, T)> =
            scored.iter().map(|(c, s)| (*c, s.selection)).collect();
        let (chosen, score) = &scored[best];
        included.push(*chosen);
        steps.push(SelectionStep {
            predictor_index: *chosen,
            predictor_name: names[*chosen].clone(),
            score_mean: score.selection,
            score_sd: score.selection_sd,
            cv_rmse_mean: score.rmse_mean,
            cv_rmse_sd: score.rmse_sd,
            evaluated,
        });
    }

    Ok(SelectionTrace {
        model_kind,
        scoring: match model_kind {
            ModelKind::Linear => ScoringKind::AdjustedR2,
            ModelKind::Forest => ScoringKind::CvRmse,
        },
        seed,
        steps,
    })
}

/// Recompute a forest trace's per-size reported RMSE over its nested
/// prefixes with different hyperparameters (typically the tuned tree count
/// after the 50-tree search). Selection scores and order are untouched.
pub fn rescore_forest_prefixes<T: Scalar>(
    trace: &mut SelectionTrace<T>,
    x: &Matrix<T>,
    y: &[T],
    folds: &FoldPlan,
    hp: &HyperParams,
) -> Result<()> {
    let mut subset = Vec::with_capacity(trace.steps.len());
    for step in &mut trace.steps {
        subset.push(step.predictor_index);
        let score = score_forest_subset(x, y, &subset, folds, hp)?;
        step.cv_rmse_mean = score.rmse_mean;
        step.cv_rmse_sd = score.rmse_sd;
    }
    Ok(())
}

/// Recursive forest ranking: run forward selection over the current pool,
/// give the last-included variable the worst remaining rank, drop it, and
/// repeat until a single variable survives (rank 1).
///
/// The returned trace reports the nested subsets `{rank 1}`, `{rank 1,2}`, …
/// with each subset's CV RMSE from a forest refit on exactly that subset
/// using `final_hp` (the tuned tree count); the forward runs themselves use
/// `search_hp`.
pub fn recursive_forest_ranking<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    names: &[String],
    folds: &FoldPlan,
    search_hp: &HyperParams,
    final_hp: &HyperParams,
    seed: u64,
) -> Result<SelectionTrace<T>> {
    let p = x.n_cols();
    if p < 2 {
        return Err(Error::data("recursive ranking needs at least 2 predictors"));
    }
    if names.len() != p {
        return Err(Error::data(format!("{} names for {p} columns", names.len())));
    }

    let mut pool: Vec<usize> = (0..p).collect();
    let mut ranked_worst_first: Vec<usize> = Vec::with_capacity(p - 1);
    while pool.len() > 1 {
        let sub = x.select_cols(&pool);
        let sub_names: Vec<String> = pool.iter().map(|&i| names[i].clone()).collect();
        let trace = forward_select(
            ModelKind::Forest,
            &sub,
            y,
            &sub_names,
            pool.len(),
            folds,
            Some(search_hp),
            seed,
        )?;
        let last_local = trace
            .steps
            .last()
            .expect("forward run over a non-empty pool has steps")
            .predictor_index;
        let last_global = pool[last_local];
        ranked_worst_first.push(last_global);
        pool.retain(|&i| i != last_global);
    }
    // pool[0] is the survivor: rank 1. Build rank order best-first.
    let mut ranking: Vec<usize> = vec![pool[0]];
    ranking.extend(ranked_worst_first.iter().rev());

    // Refit nested subsets with the tuned tree count.
    let steps: Vec<SelectionStep<T>> = (1..=p)
        .into_par_iter()
        .map(|k| {
            let subset: Vec<usize> = ranking[..k].to_vec();
            let score = score_forest_subset(x, y, &subset, folds, final_hp)?;
            Ok(SelectionStep {
                predictor_index: ranking[k - 1],
                predictor_name: names[ranking[k - 1]].clone(),
                score_mean: score.selection,
                score_sd: score.selection_sd,
                cv_rmse_mean: score.rmse_mean,
                cv_rmse_sd: score.rmse_sd,
                evaluated: vec![(ranking[k - 1], score.selection)],
            })
        })
        .collect::<Result<_>>()?;

    Ok(SelectionTrace {
        model_kind: ModelKind::Forest,
        scoring: ScoringKind::CvRmse,
        seed,
        steps,
    })
}
