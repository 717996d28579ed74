//! Ordinary-least-squares multiple linear regression.
//!
//! The solver is Householder QR on the intercept-augmented design matrix;
//! explicit normal equations are kept out of the production path (they exist
//! only as an independent oracle in tests). Diagonal entries of R below
//! `1e-10` of the largest flag rank deficiency.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Variable};
use crate::matrix::Matrix;
use crate::preprocess::{self, ScalingParams, TransformSpec};
use crate::scalar::Scalar;
use crate::{Error, Result};

const RANK_TOLERANCE: f64 = 1e-10;

/// Bare affine fit `ŷ = w₀ + Σ wⱼ xⱼ` on a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub intercept: T,
    pub coefficients: Vec<T>,
}

impl<T: Scalar> OlsFit<T> {
    /// Predict rows of a matrix whose columns match the fitted ones.
    /// Rows containing missing values predict as missing.
    pub fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        assert_eq!(x.n_cols(), self.coefficients.len());
        (0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                if row.iter().any(|v| v.is_nan()) {
                    return T::nan();
                }
                row.iter()
                    .zip(&self.coefficients)
                    .fold(self.intercept, |acc, (&v, &w)| acc + v * w)
            })
            .collect()
    }
}

/// Least-squares fit with intercept.
pub fn fit_ols<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<OlsFit<T>> {
    let n = x.n_rows();
    let p = x.n_cols();
    if y.len() != n {
        return Err(Error::data(format!(
            "target has {} values for {n} rows",
            y.len()
        )));
    }
    if n <= p + 1 {
        return Err(Error::data(format!(
            "need more than p+1={} rows to fit {p} predictors, got {n}",
            p + 1
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("design matrix or target contains missing values"));
    }

    // Intercept-augmented design, column 0 = ones.
    let m = p + 1;
    let mut a = Matrix::zeros(n, m);
    for i in 0..n {
        a.set(i, 0, T::one());
        for j in 0..p {
            a.set(i, j + 1, x.get(i, j));
        }
    }
    let mut qty: Vec<T> = y.to_vec();

    // Householder reflections, applied to A and y in lockstep.
    for k in 0..m {
        let mut norm = T::zero();
        for i in k..n {
            norm = norm + a.get(i, k) * a.get(i, k);
        }
        let norm = norm.sqrt();
        if norm == T::zero() {
            continue; // zero column, caught by the rank check below
        }
        let alpha = if a.get(k, k) >= T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..n).map(|i| a.get(i, k)).collect();
        v[0] = v[0] - alpha;
        let vnorm2: T = v.iter().map(|&e| e * e).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..m {
            let dot: T = v
                .iter()
                .enumerate()
                .map(|(i, &e)| e * a.get(k + i, j))
                .sum();
            let scale = (T::one() + T::one()) * dot / vnorm2;
            for (i, &e) in v.iter().enumerate() {
                let val = a.get(k + i, j) - scale * e;
                a.set(k + i, j, val);
            }
        }
        let dot: T = v.iter().enumerate().map(|(i, &e)| e * qty[k + i]).sum();
        let scale = (T::one() + T::one()) * dot / vnorm2;
        for (i, &e) in v.iter().enumerate() {
            qty[k + i] = qty[k + i] - scale * e;
        }
    }

    // Rank check on R's diagonal.
    let diag: Vec<T> = (0..m).map(|k| a.get(k, k).abs()).collect();
    let dmax = diag.iter().copied().fold(T::zero(), T::max);
    let tol = T::from_f64(RANK_TOLERANCE).unwrap() * dmax;
    let dependent: Vec<usize> = (1..m).filter(|&k| diag[k] <= tol).collect();
    if dmax == T::zero() || !dependent.is_empty() {
        return Err(Error::RankDeficient(
            dependent.iter().map(|&k| k - 1).collect(),
        ));
    }

    // Back substitution R w = Qᵀy.
    let mut w = vec![T::zero(); m];
    for k in (0..m).rev() {
        let mut acc = qty[k];
        for j in k + 1..m {
            acc = acc - a.get(k, j) * w[j];
        }
        w[k] = acc / a.get(k, k);
    }

    Ok(OlsFit {
        intercept: w[0],
        coefficients: w[1..].to_vec(),
    })
}

/// Linear soft-sensor model over named predictors.
///
/// Prediction replays the training preprocessing: per-column transform,
/// standardisation with the stored parameters, then the affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub predictor_names: Vec<Variable>,
    pub intercept: T,
    pub coefficients: Vec<T>,
    pub transform: TransformSpec,
    pub scaling: ScalingParams<T>,
}

impl<T: Scalar> LinearModel<T> {
    /// Predict from raw predictor values (columns in `predictor_names`
    /// order). Rows with a missing predictor value predict as missing.
    pub fn predict(&self, raw: &Matrix<T>) -> Vec<T> {
        assert_eq!(raw.n_cols(), self.predictor_names.len());
        (0..raw.n_rows())
            .map(|i| {
                let row = raw.row(i);
                if row.iter().any(|v| v.is_nan()) {
                    return T::nan();
                }
                let mut acc = self.intercept;
                for (j, (&v, &var)) in row.iter().zip(&self.predictor_names).enumerate() {
                    let t = preprocess::transform_value(v, self.transform.kind(var));
                    let z = (t - self.scaling.means[j]) / self.scaling.sds[j];
                    acc = acc + z * self.coefficients[j];
                }
                acc
            })
            .collect()
    }

    /// Predict straight from a dataset carrying the raw predictor columns.
    pub fn predict_dataset(&self, d: &Dataset<T>) -> Result<Vec<T>> {
        Ok(self.predict(&d.design_matrix(&self.predictor_names)?))
    }
}

/// Fit the full linear soft-sensor on the given training rows of a raw
/// dataset: transform, standardise (training rows only), then OLS.
pub fn fit_linear_model<T: Scalar>(
    d: &Dataset<T>,
    target: Variable,
    predictors: &[Variable],
    transform: &TransformSpec,
    training_rows: &[usize],
) -> Result<LinearModel<T>> {
    let transformed = preprocess::apply_transform(d, transform)?;
    let x_all = transformed.design_matrix(predictors)?;
    let x = x_all.select_rows(training_rows);
    let y: Vec<T> = training_rows
        .iter()
        .map(|&r| transformed.column(target).map(|c| c[r]))
        .collect::<Result<_>>()?;

    let all_rows: Vec<usize> = (0..x.n_rows()).collect();
    let scaling = preprocess::fit_scaler(&x, &all_rows)?;
    let scaled = preprocess::scale(&x, &scaling);
    let fit = fit_ols(&scaled, &y).map_err(|e| match e {
        Error::RankDeficient(cols) => {
            let names: Vec<&str> = cols.iter().map(|&c| predictors[c].name()).collect();
            Error::numeric(format!("rank-deficient design: dependent column(s) {names:?}"))
        }
        other => other,
    })?;

    Ok(LinearModel {
        predictor_names: predictors.to_vec(),
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        transform: transform.clone(),
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent normal-equations oracle: (AᵀA)⁻¹Aᵀy by Gauss-Jordan.
    fn normal_equations(x: &Matrix<f64>, y: &[f64]) -> Vec<f64> {
        let n = x.n_rows();
        let m = x.n_cols() + 1;
        let a = |i: usize, j: usize| if j == 0 { 1.0 } else { x.get(i, j - 1) };
        let mut ata = vec![vec![0.0f64; m]; m];
        let mut aty = vec![0.0f64; m];
        for i in 0..n {
            for r in 0..m {
                aty[r] += a(i, r) * y[i];
                for c in 0..m {
                    ata[r][c] += a(i, r) * a(i, c);
                }
            }
        }
        // Gauss-Jordan with partial pivoting.
        let mut aug: Vec<Vec<f64>> = ata
            .into_iter()
            .zip(aty)
            .map(|(row, rhs)| {
                let mut r = row;
                r.push(rhs);
                r
            })
            .collect();
        for col in 0..m {
            let pivot = (col..m)
                .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, pivot);
            let p = aug[col][col];
            for j in col..=m {
                aug[col][j] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = aug[r][col];
                    for j in col..=m {
                        aug[r][j] -= f * aug[col][j];
                    }
                }
            }
        }
        (0..m).map(|r| aug[r][m]).collect()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn exact_line_recovered() {
        let x = Matrix::from_columns(&[vec![0.0, 1.0, 2.0, 3.0]]);
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = fit_ols(&x, &y).unwrap();
        assert_relative_eq!(fit.intercept, 1.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn intercept_only_is_the_mean() {
        let x = Matrix::zeros(4, 0);
        let y = [1.0, 2.0, 3.0, 6.0];
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.coefficients.is_empty());
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut state = 42u64;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..50).map(|_| lcg(&mut state) * 10.0 - 5.0).collect())
            .collect();
        let x = Matrix::from_columns(&cols);
        let y: Vec<f64> = (0..50)
            .map(|i| {
                2.0 + 1.5 * x.get(i, 0) - 0.7 * x.get(i, 1) + 0.2 * x.get(i, 2)
                    + (lcg(&mut state) - 0.5)
            })
            .collect();
        let fit = fit_ols(&x, &y).unwrap();
        let oracle = normal_equations(&x, &y);
        assert_relative_eq!(fit.intercept, oracle[0], max_relative = 1e-8);
        for j in 0..3 {
            assert_relative_eq!(fit.coefficients[j], oracle[j + 1], max_relative = 1e-8);
        }
    }

    #[test]
    fn residuals_sum_to_zero() {
        let mut state = 7u64;
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..30).map(|_| lcg(&mut state)).collect())
            .collect();
        let x = Matrix::from_columns(&cols);
        let y: Vec<f64> = (0..30).map(|_| lcg(&mut state)).collect();
        let fit = fit_ols(&x, &y).unwrap();
        let preds = fit.predict(&x);
        let resid_sum: f64 = y.iter().zip(&preds).map(|(o, p)| o - p).sum();
        assert!(resid_sum.abs() < 1e-8, "residual sum {resid_sum}");
        // Residuals orthogonal to each column.
        for j in 0..2 {
            let dot: f64 = (0..30).map(|i| (y[i] - preds[i]) * x.get(i, j)).sum();
            assert!(dot.abs() < 1e-8, "column {j} dot {dot}");
        }
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let base: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x = Matrix::from_columns(&[base.clone(), vec![1.0; 10], base.clone()]);
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 2.0).collect();
        match fit_ols(&x, &y) {
            Err(Error::RankDeficient(cols)) => assert!(!cols.is_empty()),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn fitted_coefficients_beat_perturbations() {
        let mut state = 99u64;
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..40).map(|_| lcg(&mut state) * 4.0).collect())
            .collect();
        let x = Matrix::from_columns(&cols);
        let y: Vec<f64> = (0..40)
            .map(|i| 1.0 + x.get(i, 0) - 2.0 * x.get(i, 1) + lcg(&mut state))
            .collect();
        let fit = fit_ols(&x, &y).unwrap();
        let sse = |f: &OlsFit<f64>| -> f64 {
            f.predict(&x)
                .iter()
                .zip(&y)
                .map(|(p, o)| (o - p).powi(2))
                .sum()
        };
        let best = sse(&fit);
        for _ in 0..50 {
            let perturbed = OlsFit {
                intercept: fit.intercept + (lcg(&mut state) - 0.5),
                coefficients: fit
                    .coefficients
                    .iter()
                    .map(|&c| c + (lcg(&mut state) - 0.5) * 0.2)
                    .collect(),
            };
            assert!(sse(&perturbed) >= best - 1e-9);
        }
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0]]);
        assert!(fit_ols(&x, &[1.0, 2.0]).is_err());
    }

    fn toy_model() -> LinearModel<f64> {
        LinearModel {
            predictor_names: vec![Variable::Ec],
            intercept: 1.0,
            coefficients: vec![2.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![0.0],
                sds: vec![1.0],
            },
        }
    }

    #[test]
    fn predict_applies_affine_map() {
        let m = toy_model();
        let preds = m.predict(&Matrix::from_columns(&[vec![3.0]]));
        assert_relative_eq!(preds[0], 7.0);
    }

    #[test]
    fn zero_coefficients_predict_intercept() {
        let mut m = toy_model();
        m.coefficients = vec![0.0];
        let preds = m.predict(&Matrix::from_columns(&[vec![-5.0, 100.0]]));
        assert!(preds.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn missing_predictor_gives_missing_prediction() {
        let m = toy_model();
        let preds = m.predict(&Matrix::from_columns(&[vec![1.0, f64::NAN]]));
        assert_eq!(preds[0], 3.0);
        assert!(preds[1].is_nan());
    }

    #[test]
    fn serde_round_trip_predicts_bit_identically() {
        let m = LinearModel {
            predictor_names: vec![Variable::Ec, Variable::Flow],
            intercept: 0.12345678901234567,
            coefficients: vec![1.9876543210987654, -0.333333333333333314],
            transform: TransformSpec::identity()
                .with(Variable::Flow, crate::preprocess::TransformKind::NaturalLog),
            scaling: ScalingParams {
                means: vec![486.53, 0.97],
                sds: vec![79.64, 1.32],
            },
        };
        let json = serde_json::to_string(&m).unwrap();
        let back: LinearModel<f64> = serde_json::from_str(&json).unwrap();
        let x = Matrix::from_columns(&[vec![400.0, 500.0, 600.0], vec![0.5, 1.0, 2.0]]);
        let a = m.predict(&x);
        let b = back.predict(&x);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn predictions_invariant_to_predictor_order() {
        let m = LinearModel {
            predictor_names: vec![Variable::Ec, Variable::Flow],
            intercept: 0.5,
            coefficients: vec![2.0, -1.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![1.0, 2.0],
                sds: vec![0.5, 4.0],
            },
        };
        let swapped = LinearModel {
            predictor_names: vec![Variable::Flow, Variable::Ec],
            intercept: 0.5,
            coefficients: vec![-1.0, 2.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![2.0, 1.0],
                sds: vec![4.0, 0.5],
            },
        };
        let ec = vec![1.0, 3.0];
        let flow = vec![2.0, 8.0];
        let a = m.predict(&Matrix::from_columns(&[ec.clone(), flow.clone()]));
        let b = swapped.predict(&Matrix::from_columns(&[flow, ec]));
        for (p, q) in a.iter().zip(&b) {
            assert_relative_eq!(p, q, max_relative = 1e-12);
        }
    }
}
