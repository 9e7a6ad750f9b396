//! Two-stage post classification. Stage 1 separates security/privacy
//! related posts (misinformation included, class 0) from irrelevant ones
//! (class 1); stage 2 runs on class-0 posts and separates misinformation
//! (class 1) from accurate security/privacy posts (class 0).

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{compute_metrics, cross_validate, grid_search, Averaging, CvOptions, CvReport, Metrics, ParamGrid};
use super::forest::{train_forest, ForestConfig, ForestModel};
use crate::annotate::Label;
use crate::balance::{self, LabeledSet};
use crate::error::{Error, Result};
use crate::ingest::{Account, Platform, Post};
use crate::report::Prediction;
use crate::textfeat::{Featurizer, DEFAULT_K};

pub const STAGE_MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Relevance,
    Misinfo,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relevance" | "stage1" | "1" => Ok(Stage::Relevance),
            "misinfo" | "misinformation" | "stage2" | "2" => Ok(Stage::Misinfo),
            other => Err(Error::InvalidArgument(format!("unknown stage {other:?}"))),
        }
    }
}

impl Stage {
    /// Training class for a groundtruth label; None when the label does not
    /// take part in this stage.
    pub fn class_of(self, label: Label) -> Option<usize> {
        match (self, label) {
            (Stage::Relevance, Label::Irrelevant) => Some(1),
            (Stage::Relevance, _) => Some(0),
            (Stage::Misinfo, Label::SecurityPrivacy) => Some(0),
            (Stage::Misinfo, Label::Misinformation) => Some(1),
            (Stage::Misinfo, Label::Irrelevant) => None,
        }
    }

    /// Oversampling used when none is configured.
    pub fn default_balance(self, platform: Platform) -> balance::Method {
        use balance::Method::*;
        match (self, platform) {
            (Stage::Relevance, Platform::Instagram) => Random,
            (Stage::Relevance, Platform::Facebook | Platform::Reddit) => Smote,
            (Stage::Relevance, Platform::Twitter) => None,
            (Stage::Misinfo, Platform::Instagram | Platform::Reddit) => Random,
            (Stage::Misinfo, Platform::Facebook | Platform::Twitter) => Smote,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub k: usize,
    pub contextual: bool,
    pub forest: ForestConfig,
    pub balance: Option<balance::Method>,
    pub balance_options: balance::Options,
    /// Fraction of each class held out for evaluation; 0 disables.
    pub holdout: f64,
    pub cv_folds: usize,
    pub grid_search: bool,
    pub averaging: Averaging,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            contextual: true,
            forest: ForestConfig::default(),
            balance: None,
            balance_options: balance::Options::default(),
            holdout: 0.3,
            cv_folds: 3,
            grid_search: false,
            averaging: Averaging::Weighted,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    pub version: u32,
    pub platform: Platform,
    pub stage: Stage,
    pub balance: balance::Method,
    pub featurizer: Featurizer,
    pub forest: ForestModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub platform: Platform,
    pub stage: Stage,
    pub balance: balance::Method,
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub class_counts: Vec<(usize, usize)>,
    pub cv: Option<CvReport>,
    pub holdout: Option<Metrics>,
    pub config: ForestConfig,
    pub top_features: Vec<(String, f64)>,
}

/// Stratified split: per class, the first `round(n * fraction)` rows of a
/// seeded shuffle are held out.
pub fn holdout_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64) * fraction).round() as usize;
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn accounts_of<'a>(accounts: &'a HashMap<String, Account>, post: &Post) -> Option<&'a Account> {
    accounts.get(&post.author_id)
}

/// Trains one stage for one platform from labeled posts.
pub fn train_stage(
    platform: Platform,
    stage: Stage,
    posts: &[Post],
    labels: &HashMap<String, Label>,
    accounts: &HashMap<String, Account>,
    opts: &TrainOptions,
) -> Result<(StageModel, TrainReport)> {
    let rows: Vec<(&Post, usize)> = posts
        .iter()
        .filter(|p| p.platform == platform)
        .filter_map(|p| labels.get(&p.id).and_then(|&l| stage.class_of(l)).map(|c| (p, c)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Validation(format!("no {platform} groundtruth rows for stage {stage:?}")));
    }
    let y: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let (train_idx, test_idx) = if opts.holdout > 0.0 {
        holdout_split(&y, opts.holdout, opts.seed)
    } else {
        ((0..rows.len()).collect(), Vec::new())
    };
    let train_posts: Vec<&Post> = train_idx.iter().map(|&i| rows[i].0).collect();
    let featurizer = Featurizer::fit(platform, &train_posts, opts.k, opts.contextual);
    let vectorize = |idx: &[usize]| -> Result<LabeledSet> {
        LabeledSet::new(
            idx.iter().map(|&i| featurizer.vectorize(rows[i].0, accounts_of(accounts, rows[i].0))).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let train_set = vectorize(&train_idx)?;
    let method = opts.balance.unwrap_or_else(|| stage.default_balance(platform));
    let cv_opts = CvOptions {
        k: opts.cv_folds,
        balance: method,
        balance_options: opts.balance_options,
        averaging: opts.averaging,
    };
    let mut config = opts.forest;
    let mut cv = None;
    if opts.grid_search {
        let g = grid_search(&train_set, &ParamGrid::default().points(opts.forest), cv_opts, opts.seed)?;
        config = g.best;
        cv = Some(g.points[g.best_index].1.clone());
    } else if opts.cv_folds >= 2 {
        cv = Some(cross_validate(&train_set, config, cv_opts, opts.seed)?);
    }
    let balanced = balance::apply(&train_set, method, opts.balance_options, opts.seed)?;
    let mut forest = train_forest(&balanced, &featurizer.feature_names(), config, opts.seed)?;
    forest.vocabulary_hash = Some(featurizer.vocabulary.hash());
    let holdout = if test_idx.is_empty() {
        None
    } else {
        let test_set = vectorize(&test_idx)?;
        let pred = forest.predict_many(&test_set.features)?;
        Some(compute_metrics(&test_set.labels, &pred, opts.averaging)?)
    };
    let report = TrainReport {
        platform,
        stage,
        balance: method,
        train_rows: train_idx.len(),
        holdout_rows: test_idx.len(),
        class_counts: train_set.class_counts().into_iter().collect(),
        cv,
        holdout,
        config,
        top_features: forest.feature_importance().into_iter().take(15).collect(),
    };
    let model = StageModel {
        version: STAGE_MODEL_VERSION,
        platform,
        stage,
        balance: method,
        featurizer,
        forest,
    };
    Ok((model, report))
}

impl StageModel {
    pub fn predict(&self, post: &Post, account: Option<&Account>) -> Result<usize> {
        self.forest.predict(&self.featurizer.vectorize(post, account))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let m: StageModel = serde_json::from_str(raw)?;
        if m.version != STAGE_MODEL_VERSION {
            return Err(Error::Validation(format!("stage model version {} is not supported", m.version)));
        }
        if m.forest.vocabulary_hash.as_deref() != Some(m.featurizer.vocabulary.hash().as_str()) {
            return Err(Error::Model("model and vocabulary do not belong together".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::jsonl::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(raw) => Self::from_json(&raw),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::ModelNotFound(path.to_path_buf())),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

/// Runs stage 1 on every post and stage 2 on the relevant ones.
pub fn classify_posts(
    relevance: &StageModel,
    misinfo: &StageModel,
    posts: &[Post],
    accounts: &HashMap<String, Account>,
) -> Result<Vec<Prediction>> {
    if relevance.stage != Stage::Relevance || misinfo.stage != Stage::Misinfo {
        return Err(Error::Model("classifier stages are swapped or duplicated".into()));
    }
    posts
        .iter()
        .map(|p| {
            let acct = accounts_of(accounts, p);
            let label = if relevance.predict(p, acct)? == 1 {
                Label::Irrelevant
            } else if misinfo.predict(p, acct)? == 1 {
                Label::Misinformation
            } else {
                Label::SecurityPrivacy
            };
            Ok(Prediction {
                post_id: p.id.clone(),
                platform: p.platform,
                author_id: p.author_id.clone(),
                created_at: p.created_at,
                label,
            })
        })
        .collect()
}
