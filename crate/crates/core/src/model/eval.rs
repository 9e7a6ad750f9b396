//! Classification metrics, stratified k-fold cross-validation and
//! exhaustive grid search.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{train_forest, ForestConfig, ForestModel};
use crate::balance::{self, LabeledSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean of the averaged precision and recall.
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision/recall averaged by support (or unweighted for macro);
/// a class never predicted has precision 0.
pub fn compute_metrics(truth: &[usize], pred: &[usize], averaging: Averaging) -> Result<Metrics> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::InvalidArgument(
            "truth and predictions must be equal-length and non-empty".into(),
        ));
    }
    let n = truth.len() as f64;
    let correct = truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64;
    let mut classes: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new(); // (tp, predicted, support)
    for (&t, &p) in truth.iter().zip(pred) {
        classes.entry(t).or_default().2 += 1.0;
        classes.entry(p).or_default().1 += 1.0;
        if t == p {
            classes.entry(t).or_default().0 += 1.0;
        }
    }
    let (mut p_sum, mut r_sum, mut w_sum) = (0.0, 0.0, 0.0);
    for &(tp, predicted, support) in classes.values() {
        let w = match averaging {
            Averaging::Weighted => support,
            Averaging::Macro => 1.0,
        };
        if averaging == Averaging::Weighted && support == 0.0 {
            continue;
        }
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        p_sum += w * precision;
        r_sum += w * recall;
        w_sum += w;
    }
    let precision = p_sum / w_sum;
    let recall = r_sum / w_sum;
    Ok(Metrics {
        accuracy: correct / n,
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

pub fn evaluate(
    model: &ForestModel,
    heldout: &LabeledSet,
    averaging: Averaging,
) -> Result<Metrics> {
    let pred = model.predict_many(&heldout.features)?;
    compute_metrics(&heldout.labels, &pred, averaging)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<Metrics>,
    pub mean: Metrics,
    /// (max - min) / 2 per metric, the "+/-" column.
    pub half_range: Metrics,
    /// Population standard deviation per metric.
    pub std: Metrics,
}

fn summarize(folds: Vec<Metrics>) -> CvReport {
    let get = |m: &Metrics, i: usize| [m.accuracy, m.precision, m.recall, m.f1][i];
    let build = |f: &dyn Fn(&[f64]) -> f64| {
        let vals = |i: usize| folds.iter().map(|m| get(m, i)).collect::<Vec<_>>();
        Metrics {
            accuracy: f(&vals(0)),
            precision: f(&vals(1)),
            recall: f(&vals(2)),
            f1: f(&vals(3)),
        }
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_m = build(&mean);
    let half_range = build(&|v: &[f64]| {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        (max - min) / 2.0
    });
    let std = build(&|v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    });
    CvReport {
        folds,
        mean: mean_m,
        half_range,
        std,
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((c, rows)) = by_class.iter().find(|(_, r)| r.len() < k) {
        return Err(Error::Stratification(format!(
            "class {c} has {} members, fewer than k = {k}",
            rows.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub balance: balance::Method,
    pub balance_options: balance::Options,
    pub averaging: Averaging,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 3,
            balance: balance::Method::None,
            balance_options: balance::Options::default(),
            averaging: Averaging::Weighted,
        }
    }
}

/// Rebalancing, when configured, touches only the training folds.
pub fn cross_validate(
    set: &LabeledSet,
    config: ForestConfig,
    opts: CvOptions,
    seed: u64,
) -> Result<CvReport> {
    let folds = stratified_folds(&set.labels, opts.k, seed)?;
    let mut metrics = Vec::with_capacity(opts.k);
    for (f, val_idx) in folds.iter().enumerate() {
        let mut train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        train_idx.sort_unstable();
        let train = balance::apply(
            &set.subset(&train_idx),
            opts.balance,
            opts.balance_options,
            seed.wrapping_add(f as u64),
        )?;
        let model = train_forest(&train, &[], config, seed)?;
        metrics.push(evaluate(&model, &set.subset(val_idx), opts.averaging)?);
    }
    Ok(summarize(metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            n_estimators: vec![100, 200, 400],
            max_depth: vec![None, Some(10), Some(20)],
            min_samples_split: vec![2, 5],
        }
    }
}

impl ParamGrid {
    /// Grid points in order, the last parameter varying fastest.
    pub fn points(&self, base: ForestConfig) -> Vec<ForestConfig> {
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &d in &self.max_depth {
                for &s in &self.min_samples_split {
                    out.push(ForestConfig {
                        n_estimators: n,
                        max_depth: d,
                        min_samples_split: s,
                        ..base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ForestConfig,
    pub best_index: usize,
    pub points: Vec<(ForestConfig, CvReport)>,
}

/// Exhaustive search by mean CV accuracy; on a tie the earlier point wins.
pub fn grid_search(
    set: &LabeledSet,
    points: &[ForestConfig],
    opts: CvOptions,
    seed: u64,
) -> Result<GridResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("parameter grid is empty".into()));
    }
    let mut results = Vec::with_capacity(points.len());
    let mut best_index = 0;
    let mut best_accuracy = f64::NEG_INFINITY;
    for (i, &cfg) in points.iter().enumerate() {
        let report = cross_validate(set, cfg, opts, seed)?;
        if report.mean.accuracy > best_accuracy {
            best_accuracy = report.mean.accuracy;
            best_index = i;
        }
        results.push((cfg, report));
    }
    Ok(GridResult {
        best: points[best_index],
        best_index,
        points: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_give_unit_metrics() {
        let m = compute_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0], Averaging::Weighted).unwrap();
        assert_eq!(
            m,
            Metrics {
                accuracy: 1.0,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn f1_is_harmonic_mean_of_averaged_scores() {
        let m = compute_metrics(&[0, 0, 0, 1, 1], &[0, 1, 1, 1, 0], Averaging::Macro).unwrap();
        assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one() {
        let labels: Vec<usize> = (0..31).map(|i| (i % 3 == 0) as usize).collect();
        let folds = stratified_folds(&labels, 3, 4).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(sizes.iter().sum::<usize>(), 31);
    }

    #[test]
    fn small_class_cannot_be_stratified() {
        assert!(matches!(
            stratified_folds(&[0, 0, 0, 1, 1], 3, 0),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn separable_set_cross_validates_perfectly() {
        // wide gap between the classes so no validation point falls near a threshold
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![i as f64 + if i >= 30 { 100.0 } else { 0.0 }])
            .collect();
        let y = (0..60).map(|i| (i >= 30) as usize).collect();
        let s = LabeledSet::new(x, y).unwrap();
        let cfg = ForestConfig {
            n_estimators: 10,
            ..Default::default()
        };
        let r = cross_validate(&s, cfg, CvOptions::default(), 1).unwrap();
        assert_eq!(r.mean.accuracy, 1.0);
        assert_eq!(r.half_range.accuracy, 0.0);
    }

    #[test]
    fn grid_tie_keeps_first_point() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y = (0..30).map(|i| (i >= 15) as usize).collect();
        let s = LabeledSet::new(x, y).unwrap();
        let a = ForestConfig {
            n_estimators: 3,
            ..Default::default()
        };
        let b = ForestConfig {
            n_estimators: 5,
            ..Default::default()
        };
        let g = grid_search(&s, &[a, b], CvOptions::default(), 0).unwrap();
        assert_eq!(g.best_index, 0);
        assert_eq!(g.best, a);
    }
}
