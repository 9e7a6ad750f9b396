//! Random forest of CART trees with bootstrap sampling and per-split
//! feature subsampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{argmax, MaxFeatures, Tree, TreeParams};
use crate::balance::LabeledSet;
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    /// One tree on all rows with every feature considered: a plain CART tree.
    pub fn single_tree() -> Self {
        Self {
            n_estimators: 1,
            max_features: MaxFeatures::All,
            bootstrap: false,
            ..Default::default()
        }
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.min_samples_split < 2 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument(
                "n_estimators and min_samples_leaf must be positive, min_samples_split at least 2"
                    .into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidArgument("max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub trees: Vec<Tree>,
    pub n_estimators: usize,
    /// Training labels; tree leaves count classes in this order.
    pub classes: Vec<usize>,
    pub feature_names: Vec<String>,
    pub importances: Vec<f64>,
    pub config: ForestConfig,
    pub seed: u64,
    pub vocabulary_hash: Option<String>,
}

/// Per-tree generator: one ChaCha stream per tree index so trees are
/// independent of scheduling order.
pub fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn train_forest(
    set: &LabeledSet,
    feature_names: &[String],
    config: ForestConfig,
    seed: u64,
) -> Result<ForestModel> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let n_features = set.features[0].len();
    if !feature_names.is_empty() && feature_names.len() != n_features {
        return Err(Error::InvalidArgument(format!(
            "{} feature names for {n_features} features",
            feature_names.len()
        )));
    }
    if let Some((i, _)) = set
        .features
        .iter()
        .enumerate()
        .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "row {i} has a non-finite value"
        )));
    }
    let classes: Vec<usize> = set.class_counts().into_keys().collect();
    if classes.len() == 1 {
        log::warn!(
            "training set has a single class ({}); model predicts it always",
            classes[0]
        );
    }
    let y: Vec<usize> = set
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();
    let n = set.len();
    let params = config.tree_params();

    let grown: Vec<(Tree, Vec<f64>)> = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(&set.features, &y, idx, classes.len(), params, &mut rng)
        })
        .collect();

    let mut importances = vec![0.0; n_features];
    let mut contributing = 0usize;
    for (_, imp) in &grown {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            contributing += 1;
            for (acc, v) in importances.iter_mut().zip(imp) {
                *acc += v / total;
            }
        }
    }
    if contributing > 0 {
        let total: f64 = importances.iter().sum();
        importances.iter_mut().for_each(|v| *v /= total);
    }

    let feature_names = if feature_names.is_empty() {
        (0..n_features).map(|i| format!("f{i}")).collect()
    } else {
        feature_names.to_vec()
    };
    Ok(ForestModel {
        version: MODEL_VERSION,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        n_estimators: config.n_estimators,
        classes,
        feature_names,
        importances,
        config,
        seed,
        vocabulary_hash: None,
    })
}

impl ForestModel {
    /// Mean of the trees' leaf class fractions, indexed like `classes`.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        if self.trees.is_empty() {
            return Err(Error::Model("forest has no trees".into()));
        }
        if row.len() != self.feature_names.len() {
            return Err(Error::Model(format!(
                "vector has {} features, model expects {}",
                row.len(),
                self.feature_names.len()
            )));
        }
        let mut acc = vec![0.0; self.classes.len()];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.predict_proba(row)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        Ok(self.classes[argmax(&self.predict_proba(row)?)])
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }

    /// Features with their importance, highest first (ties by position).
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(usize, f64)> = self.importances.iter().copied().enumerate().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter()
            .map(|(i, w)| (self.feature_names[i].clone(), w))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let m: ForestModel = serde_json::from_str(raw)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Validation(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::jsonl::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = match std::fs::read_to_string(path) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ModelNotFound(path.to_path_buf()))
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        Self::from_json(&raw)
    }
}
