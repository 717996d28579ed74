//! Error and bias metrics plus cross-validated aggregation.
//!
//! Sums are pairwise to bound rounding error on long inputs. PBIAS uses the
//! sum of predictions as its denominator — that differs from the more common
//! observed-sum convention, and the sign therefore still follows
//! `Σŷ − Σy` only while the prediction sum is positive.

use serde::Serialize;

use crate::matrix::Matrix;
use crate::resample::FoldPlan;
use crate::scalar::{from_count, Scalar};
use crate::{Error, Result};

/// Pairwise (cascade) summation.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    if values.len() <= 32 {
        return values.iter().copied().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn check_lengths<T>(y: &[T], y_hat: &[T]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::data(format!(
            "length mismatch: {} observed vs {} predicted",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::data("metrics need at least one observation"));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check_lengths(y, y_hat)?;
    let sq: Vec<T> = y
        .iter()
        .zip(y_hat)
        .map(|(&o, &p)| (o - p) * (o - p))
        .collect();
    Ok((pairwise_sum(&sq) / from_count(y.len())).sqrt())
}

/// RMSE normalised by the mean of the observations, in percent.
pub fn nrmse<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check_lengths(y, y_hat)?;
    let mean = pairwise_sum(y) / from_count(y.len());
    if mean == T::zero() {
        return Err(Error::numeric("nRMSE undefined: observed mean is zero"));
    }
    Ok(from_count::<T>(100) * rmse(y, y_hat)? / mean)
}

/// Percent bias, `100·Σ(ŷ−y)/Σŷ`. Positive values are overestimation.
pub fn pbias<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check_lengths(y, y_hat)?;
    let denom = pairwise_sum(y_hat);
    if denom == T::zero() {
        return Err(Error::numeric("PBIAS undefined: prediction sum is zero"));
    }
    let diffs: Vec<T> = y_hat.iter().zip(y).map(|(&p, &o)| p - o).collect();
    Ok(from_count::<T>(100) * pairwise_sum(&diffs) / denom)
}

/// Full evaluation bundle for one model on one observation set.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport<T> {
    pub model: String,
    pub n: usize,
    pub rmse: T,
    /// Spread accompanying the RMSE. On a single holdout this is the sample
    /// sd of per-sample absolute errors; fold-based callers may overwrite it
    /// with the across-fold sd.
    pub rmse_sd: T,
    pub nrmse_pct: T,
    pub pbias_pct: T,
}

/// Evaluate predictions against observations.
pub fn evaluate<T: Scalar>(y: &[T], y_hat: &[T], model: impl Into<String>) -> Result<EvaluationReport<T>> {
    check_lengths(y, y_hat)?;
    let abs_err: Vec<T> = y.iter().zip(y_hat).map(|(&o, &p)| (o - p).abs()).collect();
    let rmse_sd = if abs_err.len() > 1 {
        let m = pairwise_sum(&abs_err) / from_count(abs_err.len());
        let sq: Vec<T> = abs_err.iter().map(|&e| (e - m) * (e - m)).collect();
        (pairwise_sum(&sq) / from_count(abs_err.len() - 1)).sqrt()
    } else {
        T::zero()
    };
    Ok(EvaluationReport {
        model: model.into(),
        n: y.len(),
        rmse: rmse(y, y_hat)?,
        rmse_sd,
        nrmse_pct: nrmse(y, y_hat)?,
        pbias_pct: pbias(y, y_hat)?,
    })
}

/// Cross-validated RMSE summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CvScore<T> {
    pub mean: T,
    pub sd: T,
    pub per_fold: Vec<T>,
}

/// Train and score a model recipe over every fold.
///
/// `fit_predict(train_x, train_y, test_x, fold)` returns the held-out
/// predictions for one fold; the sd is the sample sd across folds.
pub fn cross_val_rmse<T, F>(
    x: &Matrix<T>,
    y: &[T],
    folds: &FoldPlan,
    mut fit_predict: F,
) -> Result<CvScore<T>>
where
    T: Scalar,
    F: FnMut(&Matrix<T>, &[T], &Matrix<T>, usize) -> Result<Vec<T>>,
{
    if folds.n_rows() != y.len() || x.n_rows() != y.len() {
        return Err(Error::data("fold plan does not match the data size"));
    }
    let mut per_fold = Vec::with_capacity(folds.k);
    for (fold, (train, test)) in folds.folds().enumerate() {
        let train_x = x.select_rows(&train);
        let train_y: Vec<T> = train.iter().map(|&r| y[r]).collect();
        let test_x = x.select_rows(&test);
        let test_y: Vec<T> = test.iter().map(|&r| y[r]).collect();
        let preds = fit_predict(&train_x, &train_y, &test_x, fold)?;
        per_fold.push(rmse(&test_y, &preds)?);
    }
    let mean = pairwise_sum(&per_fold) / from_count(per_fold.len());
    let sd = if per_fold.len() > 1 {
        let sq: Vec<T> = per_fold.iter().map(|&v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&sq) / from_count(per_fold.len() - 1)).sqrt()
    } else {
        T::zero()
    };
    Ok(CvScore { mean, sd, per_fold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resample::kfold_indices;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rmse_exact_cases() {
        assert_relative_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(
            rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            12.5f64.sqrt(),
            max_relative = 1e-12
        ); // 3.5355...
        assert_relative_eq!(
            rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(),
            (2.0f64 / 3.0).sqrt(),
            max_relative = 1e-12
        ); // 0.8165...
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nrmse_exact_cases() {
        assert_relative_eq!(nrmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // rmse 1 on mean-4 data -> 25%
        assert_relative_eq!(
            nrmse(&[4.0, 4.0], &[5.0, 3.0]).unwrap(),
            25.0,
            max_relative = 1e-12
        );
        assert!(nrmse(&[-1.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn pbias_exact_cases() {
        assert_relative_eq!(pbias(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(pbias(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(pbias(&[1.0], &[2.0]).unwrap(), 50.0);
        assert!(pbias(&[1.0, 2.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn evaluation_report_fields() {
        let rep = evaluate(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], "perfect").unwrap();
        assert_eq!(rep.n, 3);
        assert_eq!(rep.rmse, 0.0);
        assert_eq!(rep.rmse_sd, 0.0);
        assert_eq!(rep.nrmse_pct, 0.0);
        assert_eq!(rep.pbias_pct, 0.0);
    }

    #[test]
    fn cross_val_constant_target_mean_predictor() {
        let y = vec![2.5f64; 40];
        let x = Matrix::from_columns(&[(0..40).map(|i| i as f64).collect()]);
        let folds = kfold_indices(40, 5, 0).unwrap();
        let score = cross_val_rmse(&x, &y, &folds, |_, train_y, test_x, _| {
            let m = train_y.iter().sum::<f64>() / train_y.len() as f64;
            Ok(vec![m; test_x.n_rows()])
        })
        .unwrap();
        assert!(score.per_fold.iter().all(|&r| r == 0.0));
        assert_eq!(score.mean, 0.0);
    }

    #[test]
    fn cross_val_mirrored_halves_equal_folds() {
        // Symmetric data: both folds of a 2-fold split see mirror images.
        let y: Vec<f64> = vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0];
        let x = Matrix::from_columns(&[y.clone()]);
        let folds = FoldPlan {
            k: 2,
            fold_assignment: vec![0, 1, 0, 1, 0, 1, 0, 1],
            seed: 0,
        };
        let score = cross_val_rmse(&x, &y, &folds, |_, _, test_x, _| {
            Ok(vec![0.0; test_x.n_rows()])
        })
        .unwrap();
        assert_relative_eq!(score.per_fold[0], score.per_fold[1], max_relative = 1e-12);
    }

    #[test]
    fn cross_val_recovers_noise_floor() {
        // y = 2x + eps, OLS-like mean-adjusted predictor; CV RMSE should sit
        // near the noise sd at n=1000.
        use crate::linear::fit_ols;
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift64 for the synthetic generator only
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let sigma = 0.5;
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|_| next() * 10.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let (u1, u2) = (next().max(1e-12), next());
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                2.0 * x + 1.0 + sigma * z
            })
            .collect();
        let x = Matrix::from_columns(&[xs]);
        let folds = kfold_indices(n, 5, 7).unwrap();
        let score = cross_val_rmse(&x, &ys, &folds, |tx, ty, sx, _| {
            let fit = fit_ols(tx, ty)?;
            Ok(fit.predict(sx))
        })
        .unwrap();
        assert!(
            (score.mean - sigma).abs() / sigma < 0.10,
            "cv rmse {} vs noise sd {sigma}",
            score.mean
        );
    }

    proptest! {
        #[test]
        fn rmse_symmetry_and_shift(
            y in proptest::collection::vec(-100.0f64..100.0, 1..50),
            shift in -50.0f64..50.0,
        ) {
            let y_hat: Vec<f64> = y.iter().map(|v| v * 0.9 + 1.0).collect();
            let a = rmse(&y, &y_hat).unwrap();
            let b = rmse(&y_hat, &y).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let yhs: Vec<f64> = y_hat.iter().map(|v| v + shift).collect();
            prop_assert!((rmse(&ys, &yhs).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn nrmse_scale_invariant(
            y in proptest::collection::vec(1.0f64..100.0, 2..50),
            s in proptest::sample::select(vec![0.25f64, 2.0, 10.0]),
        ) {
            let y_hat: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
            let base = nrmse(&y, &y_hat).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
            let yhs: Vec<f64> = y_hat.iter().map(|v| v * s).collect();
            prop_assert!((nrmse(&ys, &yhs).unwrap() - base).abs() < 1e-9 * base.abs().max(1.0));
        }

        #[test]
        fn pbias_sign_follows_sum_difference(
            y in proptest::collection::vec(0.1f64..100.0, 1..50),
            bump in -5.0f64..5.0,
        ) {
            let y_hat: Vec<f64> = y.iter().map(|v| v + bump).collect();
            if let Ok(p) = pbias(&y, &y_hat) {
                let sum_diff: f64 = y_hat.iter().sum::<f64>() - y.iter().sum::<f64>();
                if sum_diff.abs() > 1e-9 && y_hat.iter().sum::<f64>() > 0.0 {
                    prop_assert_eq!(p > 0.0, sum_diff > 0.0);
                }
            }
        }
    }
}
