//! Class rebalancing by oversampling: random duplication, SMOTE and ADASYN.
//!
//! Every method returns the original rows first and unchanged, followed by
//! the generated rows, each flagged as synthetic.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub synthetic: Vec<bool>,
    /// Method and seed that produced the synthetic rows, if any.
    pub provenance: Option<(Method, u64)>,
}

impl LabeledSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(w) = features.first().map(Vec::len) {
            if let Some(i) = features.iter().position(|r| r.len() != w) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has a different width"
                )));
            }
        }
        let n = labels.len();
        Ok(Self {
            features,
            labels,
            synthetic: vec![false; n],
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &l in &self.labels {
            *m.entry(l).or_default() += 1;
        }
        m
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            synthetic: idx.iter().map(|&i| self.synthetic[i]).collect(),
            provenance: self.provenance,
        }
    }

    fn push_synthetic(&mut self, row: Vec<f64>, label: usize) {
        self.features.push(row);
        self.labels.push(label);
        self.synthetic.push(true);
    }

    /// Classes below the majority count with their deficit.
    fn deficits(&self) -> Vec<(usize, usize)> {
        let counts = self.class_counts();
        let max = counts.values().copied().max().unwrap_or(0);
        counts
            .into_iter()
            .filter(|&(_, c)| c < max)
            .map(|(l, c)| (l, max - c))
            .collect()
    }

    fn rows_of(&self, label: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    None,
    Random,
    Smote,
    Adasyn,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Method::None),
            "random" | "random_oversample" => Ok(Method::Random),
            "smote" => Ok(Method::Smote),
            "adasyn" => Ok(Method::Adasyn),
            other => Err(Error::InvalidArgument(format!(
                "unknown balancing method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Options {
    pub k_neighbors: usize,
    pub beta: f64,
    /// Measure neighbor distances on z-scored features. Synthetic rows are
    /// still generated in the original space.
    pub standardize: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            beta: 1.0,
            standardize: false,
        }
    }
}

pub fn apply(set: &LabeledSet, method: Method, opts: Options, seed: u64) -> Result<LabeledSet> {
    match method {
        Method::None => Ok(set.clone()),
        Method::Random => Ok(random_oversample(set, seed)),
        Method::Smote => smote(set, opts, seed),
        Method::Adasyn => adasyn(set, opts, seed),
    }
}

pub fn random_oversample(set: &LabeledSet, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = set.clone();
    for (label, need) in set.deficits() {
        let rows = set.rows_of(label);
        for _ in 0..need {
            let i = rows[rng.gen_range(0..rows.len())];
            out.push_synthetic(set.features[i].clone(), label);
        }
    }
    if out.len() > set.len() {
        out.provenance = Some((Method::Random, seed));
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn standardized(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len() as f64;
    let w = features.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; w];
    let mut sd = vec![0.0; w];
    for r in features {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    for r in features {
        for ((s, x), m) in sd.iter_mut().zip(r).zip(&mean) {
            *s += (x - m).powi(2) / n;
        }
    }
    features
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((x, m), s)| if *s > 0.0 { (x - m) / s.sqrt() } else { 0.0 })
                .collect()
        })
        .collect()
}

/// The `k` rows of `pool` nearest to `target`, excluding `target` itself;
/// ties broken by index.
fn nearest(space: &[Vec<f64>], target: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != target)
        .map(|&j| (sq_dist(&space[target], &space[j]), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

fn interpolate(x: &[f64], n: &[f64], u: f64) -> Vec<f64> {
    x.iter().zip(n).map(|(a, b)| a + u * (b - a)).collect()
}

fn distance_space(set: &LabeledSet, opts: &Options) -> Vec<Vec<f64>> {
    if opts.standardize {
        standardized(&set.features)
    } else {
        set.features.clone()
    }
}

pub fn smote(set: &LabeledSet, opts: Options, seed: u64) -> Result<LabeledSet> {
    if opts.k_neighbors == 0 {
        return Err(Error::InvalidArgument(
            "k_neighbors must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = distance_space(set, &opts);
    let mut out = set.clone();
    for (label, need) in set.deficits() {
        let rows = set.rows_of(label);
        if rows.len() == 1 {
            log::warn!("class {label} has a single row; SMOTE falls back to random oversampling");
            for _ in 0..need {
                out.push_synthetic(set.features[rows[0]].clone(), label);
            }
            continue;
        }
        let k = opts.k_neighbors.min(rows.len() - 1);
        let neighbors: Vec<Vec<usize>> =
            rows.iter().map(|&i| nearest(&space, i, &rows, k)).collect();
        for _ in 0..need {
            let pick = rng.gen_range(0..rows.len());
            let nb = neighbors[pick][rng.gen_range(0..k)];
            let u: f64 = rng.gen();
            out.push_synthetic(
                interpolate(&set.features[rows[pick]], &set.features[nb], u),
                label,
            );
        }
    }
    if out.len() > set.len() {
        out.provenance = Some((Method::Smote, seed));
    }
    Ok(out)
}

/// Splits `total` in proportion to `weights` so the parts sum to `total`
/// exactly: floors first, then one extra unit to the largest remainders
/// (ties to the lower index).
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || total == 0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

/// Per-minority-row ADASYN quota for class `label`: the share of other-class
/// rows among each row's k nearest neighbors, apportioned over G.
pub fn adasyn_allocation(set: &LabeledSet, label: usize, opts: Options) -> Vec<usize> {
    let space = distance_space(set, &opts);
    adasyn_allocation_in(set, &space, label, opts)
}

fn adasyn_allocation_in(
    set: &LabeledSet,
    space: &[Vec<f64>],
    label: usize,
    opts: Options,
) -> Vec<usize> {
    let rows = set.rows_of(label);
    let majority = set.class_counts().values().copied().max().unwrap_or(0);
    let g = ((majority - rows.len()) as f64 * opts.beta).round() as usize;
    let all: Vec<usize> = (0..set.len()).collect();
    let k = opts.k_neighbors.min(set.len().saturating_sub(1)).max(1);
    let ratios: Vec<f64> = rows
        .iter()
        .map(|&i| {
            let nb = nearest(space, i, &all, k);
            nb.iter().filter(|&&j| set.labels[j] != label).count() as f64 / k as f64
        })
        .collect();
    largest_remainder(&ratios, g)
}

pub fn adasyn(set: &LabeledSet, opts: Options, seed: u64) -> Result<LabeledSet> {
    if opts.k_neighbors == 0 || !(opts.beta >= 0.0) {
        return Err(Error::InvalidArgument(
            "k_neighbors must be positive and beta non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = distance_space(set, &opts);
    let mut out = set.clone();
    for (label, _) in set.deficits() {
        let rows = set.rows_of(label);
        let quota = adasyn_allocation_in(set, &space, label, opts);
        if quota.iter().all(|&q| q == 0) {
            log::warn!("class {label}: no minority row has other-class neighbors; ADASYN generates nothing");
            continue;
        }
        let k = opts.k_neighbors.min(rows.len().saturating_sub(1));
        for (pos, &i) in rows.iter().enumerate() {
            if quota[pos] == 0 {
                continue;
            }
            let nbs = if k > 0 {
                nearest(&space, i, &rows, k)
            } else {
                Vec::new()
            };
            for _ in 0..quota[pos] {
                let row = if nbs.is_empty() {
                    set.features[i].clone()
                } else {
                    let nb = nbs[rng.gen_range(0..nbs.len())];
                    let u: f64 = rng.gen();
                    interpolate(&set.features[i], &set.features[nb], u)
                };
                out.push_synthetic(row, label);
            }
        }
    }
    if out.len() > set.len() {
        out.provenance = Some((Method::Adasyn, seed));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(f64, f64, usize)]) -> LabeledSet {
        LabeledSet::new(
            rows.iter().map(|r| vec![r.0, r.1]).collect(),
            rows.iter().map(|r| r.2).collect(),
        )
        .unwrap()
    }

    fn ten_three() -> LabeledSet {
        let mut rows: Vec<(f64, f64, usize)> = (0..10).map(|i| (i as f64, 10.0, 0)).collect();
        rows.extend([(0.0, 0.0, 1), (1.0, 1.0, 1), (2.0, 0.5, 1)]);
        set(&rows)
    }

    #[test]
    fn random_duplicates_minority_rows() {
        let s = ten_three();
        let out = random_oversample(&s, 1);
        assert_eq!(out.class_counts()[&1], 10);
        assert_eq!(out.synthetic.iter().filter(|&&f| f).count(), 7);
        for i in s.len()..out.len() {
            assert!(s.features[10..].contains(&out.features[i]));
        }
        assert_eq!(out, random_oversample(&s, 1));
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let s = set(&[(0.0, 0.0, 0), (1.0, 1.0, 1)]);
        assert_eq!(random_oversample(&s, 3), s);
        assert_eq!(smote(&s, Options::default(), 3).unwrap(), s);
        assert_eq!(adasyn(&s, Options::default(), 3).unwrap(), s);
    }

    #[test]
    fn smote_on_two_points_stays_on_diagonal() {
        let mut rows: Vec<(f64, f64, usize)> = (0..8).map(|i| (5.0 + i as f64, 9.0, 0)).collect();
        rows.extend([(0.0, 0.0, 1), (1.0, 1.0, 1)]);
        let s = set(&rows);
        let opts = Options {
            k_neighbors: 1,
            ..Default::default()
        };
        let out = smote(&s, opts, 7).unwrap();
        assert_eq!(out.len() - s.len(), 6);
        for r in &out.features[s.len()..] {
            assert_eq!(r[0], r[1]);
            assert!((0.0..=1.0).contains(&r[0]));
        }
    }

    #[test]
    fn smote_single_minority_row_falls_back() {
        let s = set(&[(0.0, 0.0, 0), (1.0, 0.0, 0), (5.0, 5.0, 1)]);
        let out = smote(&s, Options::default(), 0).unwrap();
        assert_eq!(out.features[3], vec![5.0, 5.0]);
    }

    #[test]
    fn largest_remainder_sums_exactly() {
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 7), [3, 2, 2]);
        assert_eq!(largest_remainder(&[0.0, 0.0], 5), [0, 0]);
        assert_eq!(largest_remainder(&[0.2, 0.8], 3), [1, 2]);
    }

    #[test]
    fn adasyn_isolated_minority_generates_nothing() {
        let mut rows: Vec<(f64, f64, usize)> = (0..6).map(|i| (100.0 + i as f64, 0.0, 0)).collect();
        rows.extend([(0.0, 0.0, 1), (0.1, 0.0, 1), (0.2, 0.0, 1)]);
        let s = set(&rows);
        let opts = Options {
            k_neighbors: 2,
            ..Default::default()
        };
        assert_eq!(adasyn_allocation(&s, 1, opts), [0, 0, 0]);
        assert_eq!(adasyn(&s, opts, 1).unwrap().len(), s.len());
    }
}
