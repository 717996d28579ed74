//! Stratified holdout splitting and k-fold cross-validation indices.
//!
//! The holdout stratifies a continuous target by quantile bins so the
//! validation fraction keeps the target's distribution. All randomness comes
//! from seeded ChaCha streams (see [`crate::rng`]), so a plan is a pure
//! function of `(target, parameters, seed)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{purpose, stream_rng};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Holdout split into validation and working row sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub validation_indices: Vec<usize>,
    pub working_indices: Vec<usize>,
    pub seed: u64,
    pub n_bins: usize,
    pub fraction: f64,
}

impl SplitPlan {
    /// Audit export: one `(row_index, role)` record per row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row_index", "role"])?;
        let mut rows: Vec<(usize, &str)> = self
            .validation_indices
            .iter()
            .map(|&i| (i, "validation"))
            .chain(self.working_indices.iter().map(|&i| (i, "working")))
            .collect();
        rows.sort_unstable();
        for (i, role) in rows {
            w.write_record([i.to_string(), role.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// K-fold assignment over the working rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// `fold_assignment[row] = fold id` for rows `0..n`.
    pub fold_assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.fold_assignment.len()
    }

    /// Iterate folds as `(train_rows, test_rows)` pairs.
    pub fn folds(&self) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> + '_ {
        (0..self.k).map(move |fold| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (row, &f) in self.fold_assignment.iter().enumerate() {
                if f == fold {
                    test.push(row);
                } else {
                    train.push(row);
                }
            }
            (train, test)
        })
    }
}

/// Type-7 (linearly interpolated) quantile of an already sorted slice.
fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::from_f64(h - lo as f64).unwrap();
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor() as usize
}

/// Stratified holdout of `fraction` of the rows.
///
/// The target is cut at its `1/n_bins..(n_bins-1)/n_bins` quantiles; within
/// each bin, validation rows are drawn uniformly without replacement. Bins
/// holding fewer than 2 rows are merged into their neighbour (logged). The
/// total validation size is `ceil(fraction·n)`, reached by adjusting the
/// per-bin round-half-up counts toward the bins with the largest fractional
/// quota remainder.
pub fn stratified_holdout<T: Scalar>(
    y: &[T],
    fraction: f64,
    n_bins: usize,
    seed: u64,
) -> Result<SplitPlan> {
    let n = y.len();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::data(format!(
            "validation fraction must lie in (0,1), got {fraction}"
        )));
    }
    if n_bins < 2 {
        return Err(Error::data("stratification needs at least 2 bins"));
    }
    if n < n_bins {
        return Err(Error::data(format!(
            "need at least {n_bins} rows to form {n_bins} bins, got {n}"
        )));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::data("target contains missing values"));
    }

    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN after check"));
    let edges: Vec<T> = (1..n_bins)
        .map(|b| quantile_sorted(&sorted, b as f64 / n_bins as f64))
        .collect();

    // Assign rows to bins; equal edges collapse bins naturally.
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (row, &v) in y.iter().enumerate() {
        let bin = edges.iter().take_while(|&&e| v > e).count();
        bins[bin].push(row);
    }

    // Merge undersized bins into the next non-empty neighbour.
    let mut merged: Vec<Vec<usize>> = Vec::new();
    let mut carry: Vec<usize> = Vec::new();
    for bin in bins {
        carry.extend(bin);
        if carry.len() >= 2 {
            merged.push(std::mem::take(&mut carry));
        }
    }
    if !carry.is_empty() {
        match merged.last_mut() {
            Some(last) => {
                log::debug!("merged trailing bin of {} row(s) into neighbour", carry.len());
                last.extend(std::mem::take(&mut carry));
            }
            None => merged.push(std::mem::take(&mut carry)),
        }
    }
    if merged.len() < n_bins {
        log::debug!(
            "stratification uses {} bin(s) after merging undersized bins",
            merged.len()
        );
    }

    // Per-bin validation counts: round half up, then adjust to the total.
    let target_total = ((fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let quotas: Vec<f64> = merged.iter().map(|b| fraction * b.len() as f64).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .zip(&merged)
        .map(|(&q, b)| round_half_up(q).min(b.len()))
        .collect();
    loop {
        let total: usize = counts.iter().sum();
        if total == target_total {
            break;
        }
        if total < target_total {
            // Bump the bin with the most unmet quota that still has room.
            let i = (0..counts.len())
                .filter(|&i| counts[i] < merged[i].len())
                .max_by(|&a, &b| {
                    (quotas[a] - counts[a] as f64)
                        .partial_cmp(&(quotas[b] - counts[b] as f64))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .expect("target_total < n leaves room");
            counts[i] += 1;
        } else {
            let i = (0..counts.len())
                .filter(|&i| counts[i] > 0)
                .min_by(|&a, &b| {
                    (quotas[a] - counts[a] as f64)
                        .partial_cmp(&(quotas[b] - counts[b] as f64))
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .expect("positive total has a positive count");
            counts[i] -= 1;
        }
    }

    let mut rng = stream_rng(seed, purpose::HOLDOUT, 0);
    let mut validation = Vec::with_capacity(target_total);
    for (bin, &count) in merged.iter_mut().zip(&counts) {
        bin.shuffle(&mut rng);
        validation.extend_from_slice(&bin[..count]);
    }
    validation.sort_unstable();
    let mut in_validation = vec![false; n];
    for &i in &validation {
        in_validation[i] = true;
    }
    let working = (0..n).filter(|&i| !in_validation[i]).collect();

    Ok(SplitPlan {
        validation_indices: validation,
        working_indices: working,
        seed,
        n_bins,
        fraction,
    })
}

/// Shuffled k-fold partition of `0..n` into near-equal folds.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::data("k-fold needs k >= 2"));
    }
    if n < k {
        return Err(Error::data(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, purpose::FOLDS, 0);
    order.shuffle(&mut rng);

    let base = n / k;
    let extra = n % k;
    let mut assignment = vec![0usize; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            assignment[row] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan {
        k,
        fold_assignment: assignment,
        seed,
    })
}

/// Plain (unstratified) random split with the same total-size rule as
/// [`stratified_holdout`]; used for baseline comparisons.
pub fn random_holdout(n: usize, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::data(format!(
            "validation fraction must lie in (0,1), got {fraction}"
        )));
    }
    let target = ((fraction * n as f64).ceil() as usize).clamp(1, n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, purpose::HOLDOUT, 1);
    order.shuffle(&mut rng);
    let mut validation: Vec<usize> = order[..target].to_vec();
    validation.sort_unstable();
    let mut in_validation = vec![false; n];
    for &i in &validation {
        in_validation[i] = true;
    }
    Ok(SplitPlan {
        validation_indices: validation,
        working_indices: (0..n).filter(|&i| !in_validation[i]).collect(),
        seed,
        n_bins: 1,
        fraction,
    })
}

/// Deterministic bootstrap-style helper: `count` uniform draws in `0..n`.
pub(crate) fn sample_with_replacement(
    rng: &mut impl Rng,
    n: usize,
    count: usize,
) -> Vec<usize> {
    (0..count).map(|_| rng.gen_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_plan_invariants(plan: &SplitPlan, n: usize) {
        let mut all: Vec<usize> = plan
            .validation_indices
            .iter()
            .chain(&plan.working_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>(), "disjoint union covers all rows");
        let target = (plan.fraction * n as f64).round() as i64;
        let got = plan.validation_indices.len() as i64;
        assert!((got - target).abs() <= 1, "{got} vs round target {target}");
    }

    #[test]
    fn holdout_hits_ceil_total_and_invariants() {
        let y: Vec<f64> = (0..12_723).map(|i| (i as f64 * 0.37).sin()).collect();
        let plan = stratified_holdout(&y, 0.10, 10, 42).unwrap();
        assert_eq!(plan.validation_indices.len(), 1_273);
        check_plan_invariants(&plan, y.len());

        let y2: Vec<f64> = (0..8_934).map(|i| (i as f64 * 0.11).cos()).collect();
        let plan2 = stratified_holdout(&y2, 0.10, 10, 42).unwrap();
        assert_eq!(plan2.validation_indices.len(), 894);
    }

    #[test]
    fn constant_target_degenerates_to_plain_split() {
        let y = vec![3.0f64; 100];
        let plan = stratified_holdout(&y, 0.5, 10, 7).unwrap();
        assert_eq!(plan.validation_indices.len(), 50);
        check_plan_invariants(&plan, 100);
    }

    #[test]
    fn tiny_bins_merge_instead_of_failing() {
        // 11 rows over 10 bins forces merges.
        let y: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let plan = stratified_holdout(&y, 0.2, 10, 1).unwrap();
        check_plan_invariants(&plan, 11);
    }

    #[test]
    fn same_seed_same_plan() {
        let y: Vec<f64> = (0..500).map(|i| (i as f64).sqrt()).collect();
        let a = stratified_holdout(&y, 0.1, 10, 99).unwrap();
        let b = stratified_holdout(&y, 0.1, 10, 99).unwrap();
        assert_eq!(a, b);
        let c = stratified_holdout(&y, 0.1, 10, 100).unwrap();
        assert_ne!(a.validation_indices, c.validation_indices);
    }

    #[test]
    fn kfold_small_case() {
        let plan = kfold_indices(10, 5, 3).unwrap();
        for (train, test) in plan.folds() {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            for t in &test {
                assert!(!train.contains(t));
            }
        }
    }

    #[test]
    fn kfold_paper_scale_counts() {
        let plan = kfold_indices(11_450, 5, 1).unwrap();
        for (train, test) in plan.folds() {
            assert_eq!(test.len(), 2_290);
            assert_eq!(train.len(), 9_160);
        }
        let cut = kfold_indices(8_040, 5, 1).unwrap();
        for (train, test) in cut.folds() {
            assert_eq!(test.len(), 1_608);
            assert_eq!(train.len(), 6_432);
        }
    }

    #[test]
    fn kfold_rejects_n_below_k() {
        assert!(kfold_indices(4, 5, 0).is_err());
    }

    fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
        let mut sa = a.to_vec();
        let mut sb = b.to_vec();
        sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < sa.len() && j < sb.len() {
            if sa[i] <= sb[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / sa.len() as f64;
            let fb = j as f64 / sb.len() as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }

    /// Statistical smoke test: stratification should track the target's
    /// distribution at least as well as a plain random split, on average.
    #[test]
    fn stratified_ks_beats_random_in_expectation() {
        let y: Vec<f64> = (0..800)
            .map(|i| ((i * 2654435761usize) % 1000) as f64 / 31.0)
            .map(|v| v * v) // skewed target
            .collect();
        let mut strat_sum = 0.0;
        let mut plain_sum = 0.0;
        for seed in 0..100u64 {
            let sp = stratified_holdout(&y, 0.1, 10, seed).unwrap();
            let rp = random_holdout(y.len(), 0.1, seed).unwrap();
            let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
            strat_sum += ks_distance(&pick(&sp.validation_indices), &pick(&sp.working_indices));
            plain_sum += ks_distance(&pick(&rp.validation_indices), &pick(&rp.working_indices));
        }
        assert!(
            strat_sum <= plain_sum,
            "mean KS stratified {strat_sum} > plain {plain_sum}"
        );
    }

    #[test]
    fn split_plan_csv_export() {
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let plan = stratified_holdout(&y, 0.25, 4, 5).unwrap();
        let mut path = std::env::temp_dir();
        path.push(format!("softsensor-split-{}.csv", std::process::id()));
        plan.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert!(text.starts_with("row_index,role"));
        assert_eq!(text.lines().count(), 21);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn holdout_invariants_hold(
            n in 20usize..400,
            bins in 2usize..12,
            fraction in 0.05f64..0.9,
            seed in 0u64..1000,
        ) {
            let y: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64).collect();
            let plan = stratified_holdout(&y, fraction, bins, seed).unwrap();
            let mut all: Vec<usize> = plan
                .validation_indices.iter().chain(&plan.working_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let target = (fraction * n as f64).round() as i64;
            prop_assert!((plan.validation_indices.len() as i64 - target).abs() <= 1);
        }

        #[test]
        fn kfold_invariants_hold(n in 5usize..300, k in 2usize..6, seed in 0u64..1000) {
            prop_assume!(n >= k);
            let plan = kfold_indices(n, k, seed).unwrap();
            let mut sizes = vec![0usize; k];
            for &f in &plan.fold_assignment {
                prop_assert!(f < k);
                sizes[f] += 1;
            }
            let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(max - min <= 1, "fold sizes differ by more than 1");
            prop_assert_eq!(kfold_indices(n, k, seed).unwrap(), plan);
        }
    }
}
