//! Decision trees, random forests and their evaluation.

pub mod eval;
pub mod forest;
pub mod stage;
pub mod tree;

pub use eval::{
    compute_metrics, cross_validate, evaluate, grid_search, stratified_folds, Averaging, CvOptions,
    CvReport, GridResult, Metrics, ParamGrid,
};
pub use forest::{train_forest, ForestConfig, ForestModel};
pub use tree::{MaxFeatures, Node, Tree, TreeParams};
pub use stage::{classify_posts, holdout_split, train_stage, Stage, StageModel, TrainOptions, TrainReport};
