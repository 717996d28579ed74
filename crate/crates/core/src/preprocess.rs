//! Distribution diagnostics, variance-stabilising transforms,
//! standardisation and correlation screening.
//!
//! Positively skewed columns are natural-log transformed, negatively skewed
//! ones cubed; the skewness threshold makes that decision reproducible.
//! Transforms and scaling are only used on the linear-model path — tree
//! ensembles consume raw columns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Variable};
use crate::matrix::Matrix;
use crate::scalar::{from_count, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    NaturalLog,
    Cube,
}

/// Per-column transform recipe. Unlisted columns are identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub columns: BTreeMap<Variable, TransformKind>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec::default()
    }

    pub fn with(mut self, variable: Variable, kind: TransformKind) -> Self {
        self.columns.insert(variable, kind);
        self
    }

    pub fn kind(&self, variable: Variable) -> TransformKind {
        self.columns
            .get(&variable)
            .copied()
            .unwrap_or(TransformKind::Identity)
    }

    pub fn is_identity(&self) -> bool {
        self.columns
            .values()
            .all(|&k| k == TransformKind::Identity)
    }
}

/// Adjusted Fisher–Pearson sample skewness, `g1·√(n(n−1))/(n−2)`.
pub fn skewness<T: Scalar>(x: &[T]) -> Result<T> {
    let n = x.len();
    if n < 3 {
        return Err(Error::data(format!(
            "skewness requires at least 3 values, got {n}"
        )));
    }
    let nf = from_count::<T>(n);
    let mean = x.iter().copied().sum::<T>() / nf;
    let m2 = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
    if m2 <= T::zero() {
        return Err(Error::numeric("skewness undefined for zero-variance data"));
    }
    let m3 = x
        .iter()
        .map(|&v| (v - mean) * (v - mean) * (v - mean))
        .sum::<T>()
        / nf;
    let g1 = m3 / m2.powf(T::from_f64(1.5).unwrap());
    let adj = (nf * (nf - T::one())).sqrt() / (nf - from_count::<T>(2));
    Ok(g1 * adj)
}

/// Decide a transform per column from its skewness.
///
/// Skew above the threshold selects the natural log when the column is
/// strictly positive (log is undefined otherwise, so such columns stay
/// identity); skew below the negated threshold selects the cube. Columns
/// whose skewness is undefined (constant) stay identity.
pub fn suggest_transforms<T: Scalar>(d: &Dataset<T>, threshold: T) -> Result<TransformSpec> {
    if threshold <= T::zero() {
        return Err(Error::data("skew threshold must be positive"));
    }
    let mut spec = TransformSpec::identity();
    for var in d.variables() {
        let col: Vec<T> = d
            .column(var)?
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .collect();
        let kind = match skewness(&col) {
            Ok(skew) if skew > threshold => {
                if col.iter().all(|&v| v > T::zero()) {
                    TransformKind::NaturalLog
                } else {
                    TransformKind::Identity
                }
            }
            Ok(skew) if skew < -threshold => TransformKind::Cube,
            _ => TransformKind::Identity,
        };
        spec.columns.insert(var, kind);
    }
    Ok(spec)
}

/// Apply a transform element-wise to one value.
pub fn transform_value<T: Scalar>(value: T, kind: TransformKind) -> T {
    match kind {
        TransformKind::Identity => value,
        TransformKind::NaturalLog => value.ln(),
        TransformKind::Cube => value * value * value,
    }
}

/// Apply a transform spec to every listed column of a dataset.
///
/// Missing values pass through untouched; a non-positive value under the
/// natural log is an error naming the column and row.
pub fn apply_transform<T: Scalar>(d: &Dataset<T>, spec: &TransformSpec) -> Result<Dataset<T>> {
    let mut out = d.clone();
    for (&var, &kind) in &spec.columns {
        if kind == TransformKind::Identity || !d.has_column(var) {
            continue;
        }
        let col = d.column(var)?;
        let mut values = Vec::with_capacity(col.len());
        for (row, &v) in col.iter().enumerate() {
            if v.is_nan() {
                values.push(v);
                continue;
            }
            if kind == TransformKind::NaturalLog && v <= T::zero() {
                return Err(Error::numeric(format!(
                    "natural log of non-positive value {v} in column {var}, row {row}"
                )));
            }
            values.push(transform_value(v, kind));
        }
        out.set_column(var, values)?;
    }
    Ok(out)
}

/// Per-column standardisation parameters, fitted on training rows only.
///
/// The sd uses the population (n) denominator so that scaled training
/// columns have exactly zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams<T> {
    pub means: Vec<T>,
    pub sds: Vec<T>,
}

pub fn fit_scaler<T: Scalar>(x: &Matrix<T>, training_rows: &[usize]) -> Result<ScalingParams<T>> {
    if training_rows.is_empty() {
        return Err(Error::data("scaler needs at least one training row"));
    }
    let nf = from_count::<T>(training_rows.len());
    let mut means = Vec::with_capacity(x.n_cols());
    let mut sds = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let mean = training_rows
            .iter()
            .map(|&r| x.get(r, j))
            .sum::<T>()
            / nf;
        let var = training_rows
            .iter()
            .map(|&r| {
                let d = x.get(r, j) - mean;
                d * d
            })
            .sum::<T>()
            / nf;
        let sd = var.sqrt();
        if sd <= T::zero() {
            return Err(Error::numeric(format!(
                "constant column {j}: cannot scale to unit variance"
            )));
        }
        means.push(mean);
        sds.push(sd);
    }
    Ok(ScalingParams { means, sds })
}

pub fn scale<T: Scalar>(x: &Matrix<T>, params: &ScalingParams<T>) -> Matrix<T> {
    assert_eq!(x.n_cols(), params.means.len(), "scaler covers every column");
    let mut out = Matrix::zeros(x.n_rows(), x.n_cols());
    for i in 0..x.n_rows() {
        for j in 0..x.n_cols() {
            out.set(i, j, (x.get(i, j) - params.means[j]) / params.sds[j]);
        }
    }
    out
}

/// Pearson's correlation coefficient.
pub fn pearson_r<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::data(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::data("correlation requires at least 2 points"));
    }
    let nf = from_count::<T>(x.len());
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::numeric(
            "correlation undefined for zero-variance input",
        ));
    }
    let r = sxy / (sxx * syy).sqrt();
    // Clamp rounding spill just outside [-1, 1].
    Ok(r.min(T::one()).max(-T::one()))
}

/// Per-predictor correlation with a target, ranked by |r| descending.
/// Ties break on canonical variable order.
pub fn correlation_table<T: Scalar>(
    d: &Dataset<T>,
    target: Variable,
    predictors: &[Variable],
) -> Result<Vec<(Variable, T)>> {
    let y = d.column(target)?;
    let mut table = Vec::with_capacity(predictors.len());
    for &p in predictors {
        let r = pearson_r(d.column(p)?, y)?;
        table.push((p, r));
    }
    table.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("finite correlations")
            .then(a.0.cmp(&b.0))
    });
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn dataset(cols: Vec<(Variable, Vec<f64>)>) -> Dataset<f64> {
        let n = cols[0].1.len();
        let ts = (0..n)
            .map(|i| {
                NaiveDate::from_ymd_opt(2010, 1, 1)
                    .unwrap()
                    .and_hms_opt(0, 0, 0)
                    .unwrap()
                    + chrono::Duration::hours(i as i64)
            })
            .collect();
        let map: BTreeMap<_, _> = cols.into_iter().collect();
        Dataset::from_columns(ts, map).unwrap()
    }

    /// Independent direct evaluation of the adjusted skewness formula.
    fn skewness_oracle(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        (m3 / m2.powf(1.5)) * (n * (n - 1.0)).sqrt() / (n - 2.0)
    }

    #[test]
    fn skewness_symmetric_is_zero() {
        assert_relative_eq!(skewness(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn skewness_right_tail_is_positive() {
        assert!(skewness(&[1.0, 1.0, 1.0, 10.0]).unwrap() > 0.0);
    }

    #[test]
    fn skewness_matches_direct_formula() {
        let x = [0.0, 0.0, 0.0, 0.0, 1.0];
        let got = skewness(&x).unwrap();
        assert_relative_eq!(got, skewness_oracle(&x), max_relative = 1e-12);
        // 1.5 * sqrt(5*4)/3
        assert_relative_eq!(got, 1.5 * 20f64.sqrt() / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn skewness_rejects_constant_and_short() {
        assert!(skewness(&[5.0, 5.0, 5.0]).is_err());
        assert!(skewness(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn suggest_picks_log_cube_and_identity() {
        // Strongly right-skewed positive column -> log; left-skewed -> cube;
        // near-symmetric -> identity.
        let right: Vec<f64> = (0..50).map(|i| (i as f64 / 7.0).exp()).collect();
        let left: Vec<f64> = right.iter().map(|v| -v).collect();
        let flat: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let d = dataset(vec![
            (Variable::Turb, right),
            (Variable::Ec, left),
            (Variable::Temp, flat),
        ]);
        let spec = suggest_transforms(&d, 0.5).unwrap();
        assert_eq!(spec.kind(Variable::Turb), TransformKind::NaturalLog);
        assert_eq!(spec.kind(Variable::Ec), TransformKind::Cube);
        assert_eq!(spec.kind(Variable::Temp), TransformKind::Identity);
    }

    #[test]
    fn suggest_never_logs_non_positive_columns() {
        let mut right: Vec<f64> = (0..50).map(|i| (i as f64 / 7.0).exp()).collect();
        right[0] = 0.0; // skewed but not strictly positive
        let d = dataset(vec![(Variable::Turb, right), (Variable::Trp, vec![0.0; 50])]);
        let spec = suggest_transforms(&d, 0.5).unwrap();
        assert_eq!(spec.kind(Variable::Turb), TransformKind::Identity);
    }

    #[test]
    fn apply_transform_values() {
        let d = dataset(vec![
            (Variable::Flow, vec![1.0, std::f64::consts::E]),
            (Variable::Ec, vec![2.0, 3.0]),
        ]);
        let spec = TransformSpec::identity()
            .with(Variable::Flow, TransformKind::NaturalLog)
            .with(Variable::Ec, TransformKind::Cube);
        let t = apply_transform(&d, &spec).unwrap();
        let flow = t.column(Variable::Flow).unwrap();
        assert_relative_eq!(flow[0], 0.0);
        assert_relative_eq!(flow[1], 1.0, max_relative = 1e-12);
        assert_eq!(t.column(Variable::Ec).unwrap(), &[8.0, 27.0]);
    }

    #[test]
    fn apply_identity_is_identity() {
        let d = dataset(vec![(Variable::Flow, vec![1.0, 2.0, 3.0])]);
        let t = apply_transform(&d, &TransformSpec::identity()).unwrap();
        assert_eq!(d, t);
    }

    #[test]
    fn log_of_non_positive_names_column_and_row() {
        let d = dataset(vec![(Variable::Flow, vec![1.0, -2.0])]);
        let spec = TransformSpec::identity().with(Variable::Flow, TransformKind::NaturalLog);
        let err = apply_transform(&d, &spec).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Flow") && msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn scaler_uses_population_sd() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0]]);
        let params = fit_scaler(&x, &[0, 1, 2]).unwrap();
        let scaled = scale(&x, &params);
        let expect = 1.5f64.sqrt(); // 1.2247...
        assert_relative_eq!(scaled.get(0, 0), -expect, max_relative = 1e-12);
        assert_relative_eq!(scaled.get(1, 0), 0.0);
        assert_relative_eq!(scaled.get(2, 0), expect, max_relative = 1e-12);

        let two = Matrix::from_columns(&[vec![0.0, 2.0]]);
        let p2 = fit_scaler(&two, &[0, 1]).unwrap();
        let s2 = scale(&two, &p2);
        assert_relative_eq!(s2.get(0, 0), -1.0);
        assert_relative_eq!(s2.get(1, 0), 1.0);
    }

    #[test]
    fn scaling_standardized_input_is_noop() {
        let x = Matrix::from_columns(&[vec![-(1.5f64.sqrt()), 0.0, 1.5f64.sqrt()]]);
        let params = fit_scaler(&x, &[0, 1, 2]).unwrap();
        let scaled = scale(&x, &params);
        for i in 0..3 {
            assert_relative_eq!(scaled.get(i, 0), x.get(i, 0), epsilon = 1e-10);
        }
    }

    #[test]
    fn scaler_fits_on_training_rows_only() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0, 100.0]]);
        let params = fit_scaler(&x, &[0, 1, 2]).unwrap();
        assert_relative_eq!(params.means[0], 2.0);
        // Non-training row scaled with the training parameters.
        let scaled = scale(&x, &params);
        assert_relative_eq!(
            scaled.get(3, 0),
            (100.0 - 2.0) / (2.0f64 / 3.0).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scaler_rejects_constant_column() {
        let x = Matrix::from_columns(&[vec![7.0, 7.0, 7.0]]);
        assert!(fit_scaler(&x, &[0, 1, 2]).is_err());
    }

    #[test]
    fn pearson_exact_cases() {
        assert_relative_eq!(
            pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0
        );
        assert_relative_eq!(
            pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
        assert_relative_eq!(
            pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8,
            max_relative = 1e-12
        );
        assert!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn correlation_table_ranks_by_abs_r() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let d = dataset(vec![
            (Variable::Ec, vec![1.0, 3.0, 2.0, 4.0]),    // r = 0.8
            (Variable::Flow, vec![-1.0, -2.0, -3.0, -4.0]), // r = -1
            (Variable::Trp, y.clone()),
        ]);
        let table = correlation_table(&d, Variable::Trp, &[Variable::Ec, Variable::Flow]).unwrap();
        assert_eq!(table[0].0, Variable::Flow);
        assert_relative_eq!(table[0].1, -1.0);
        assert_eq!(table[1].0, Variable::Ec);
    }

    #[test]
    fn self_target_ranks_first_with_r_one() {
        let d = dataset(vec![
            (Variable::Ec, vec![1.0, 3.0, 2.0, 4.0]),
            (Variable::Trp, vec![1.0, 2.0, 3.0, 4.0]),
        ]);
        let table =
            correlation_table(&d, Variable::Trp, &[Variable::Ec, Variable::Trp]).unwrap();
        assert_eq!(table[0].0, Variable::Trp);
        assert_relative_eq!(table[0].1, 1.0);
    }

    proptest! {
        #[test]
        fn pearson_symmetry_and_affine(
            xs in proptest::collection::vec(-1e3f64..1e3, 3..40),
            ys in proptest::collection::vec(-1e3f64..1e3, 3..40),
            a in proptest::sample::select(vec![-3.0f64, -1.0, 0.5, 2.0]),
            b in -10.0f64..10.0,
        ) {
            let n = xs.len().min(ys.len());
            let (x, y) = (&xs[..n], &ys[..n]);
            let Ok(r) = pearson_r(x, y) else { return Ok(()) };
            let r_swapped = pearson_r(y, x).unwrap();
            prop_assert!((r - r_swapped).abs() < 1e-12);

            let ax: Vec<f64> = x.iter().map(|&v| a * v + b).collect();
            if let Ok(ra) = pearson_r(&ax, y) {
                prop_assert!((ra - a.signum() * r).abs() < 1e-9);
            }
        }

        #[test]
        fn scale_then_invert_recovers(
            col in proptest::collection::vec(-1e3f64..1e3, 2..30),
        ) {
            let x = Matrix::from_columns(&[col.clone()]);
            let rows: Vec<usize> = (0..col.len()).collect();
            let Ok(params) = fit_scaler(&x, &rows) else { return Ok(()) };
            let scaled = scale(&x, &params);
            // Scaled training column has zero mean and unit (population) sd.
            let n = col.len() as f64;
            let mean = (0..col.len()).map(|i| scaled.get(i, 0)).sum::<f64>() / n;
            let var = (0..col.len())
                .map(|i| (scaled.get(i, 0) - mean).powi(2))
                .sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10, "scaled mean {mean}");
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-10, "scaled sd {}", var.sqrt());
            for (i, &orig) in col.iter().enumerate() {
                let back = scaled.get(i, 0) * params.sds[0] + params.means[0];
                let tol = 1e-10 * orig.abs().max(1.0);
                prop_assert!((back - orig).abs() < tol);
            }
        }

        #[test]
        fn suggestion_ignores_column_order(
            a in proptest::collection::vec(0.1f64..1e3, 10..30),
            b in proptest::collection::vec(0.1f64..1e3, 10..30),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (a[..n].to_vec(), b[..n].to_vec());
            let d1 = dataset(vec![(Variable::Ec, a.clone()), (Variable::Trp, b.clone())]);
            let d2 = dataset(vec![(Variable::Trp, b), (Variable::Ec, a)]);
            let s1 = suggest_transforms(&d1, 0.5).unwrap();
            let s2 = suggest_transforms(&d2, 0.5).unwrap();
            prop_assert_eq!(s1, s2);
        }
    }

    #[test]
    fn transform_spec_serde_round_trip() {
        let spec = TransformSpec::identity()
            .with(Variable::Turb, TransformKind::NaturalLog)
            .with(Variable::Ec, TransformKind::Cube);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("natural_log"));
        let back: TransformSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
