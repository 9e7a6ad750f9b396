//! CART classification tree grown by weighted Gini impurity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Score ties closer than this are broken by feature index, then threshold.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub depth: usize,
}

/// n * gini = n - sum(c^2) / n
pub fn weighted_gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    n - counts.iter().map(|c| c * c).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        if self.score < other.score - TIE_EPS {
            return true;
        }
        if self.score > other.score + TIE_EPS {
            return false;
        }
        (self.feature, self.threshold) < (other.feature, other.threshold)
    }
}

pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

struct Grower<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    n_features: usize,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    importances: Vec<f64>,
    depth: usize,
}

impl<R: Rng> Grower<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1.0;
        }
        c
    }

    fn best_for_feature(&self, idx: &[usize], f: usize, total: &[f64]) -> Option<Candidate> {
        let mut pairs: Vec<(f64, usize)> = idx.iter().map(|&i| (self.x[i][f], self.y[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut left = vec![0.0; self.n_classes];
        let mut best: Option<Candidate> = None;
        for pos in 0..n - 1 {
            left[pairs[pos].1] += 1.0;
            if pairs[pos].0 == pairs[pos + 1].0 {
                continue;
            }
            let n_left = pos + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let cand = Candidate {
                score: weighted_gini(&left) + weighted_gini(&right),
                feature: f,
                threshold: midpoint(pairs[pos].0, pairs[pos + 1].0),
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let counts = self.counts(&idx);
        let parent = weighted_gini(&counts);
        let node_id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            counts: counts.clone(),
        });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if parent <= 0.0 || !depth_ok || idx.len() < self.params.min_samples_split.max(2) {
            return node_id;
        }

        let mut order: Vec<usize> = (0..self.n_features).collect();
        order.shuffle(self.rng);
        let budget = self.params.max_features.resolve(self.n_features);
        let mut best: Option<Candidate> = None;
        for (visited, &f) in order.iter().enumerate() {
            if visited >= budget && best.is_some() {
                break;
            }
            if let Some(c) = self.best_for_feature(&idx, f, &counts) {
                // only splits that strictly lower impurity count
                if c.score < parent - TIE_EPS && best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else {
            return node_id;
        };

        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        self.importances[split.feature] += parent - split.score;
        let left = self.grow(l_idx, depth + 1);
        let right = self.grow(r_idx, depth + 1);
        self.nodes[node_id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        node_id
    }
}

impl Tree {
    /// Grows a tree on the rows `idx` (duplicates allowed, as in a bootstrap
    /// sample). Returns the tree and its unnormalized impurity decreases per
    /// feature.
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[usize],
        idx: Vec<usize>,
        n_classes: usize,
        params: TreeParams,
        rng: &mut R,
    ) -> (Tree, Vec<f64>) {
        let n_features = x.first().map_or(0, Vec::len);
        let mut g = Grower {
            x,
            y,
            n_classes,
            n_features,
            params,
            rng,
            nodes: Vec::new(),
            importances: vec![0.0; n_features],
            depth: 0,
        };
        g.grow(idx, 0);
        let tree = Tree {
            nodes: g.nodes,
            n_classes,
            depth: g.depth,
        };
        (tree, g.importances)
    }

    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let counts = self.leaf(row);
        let n: f64 = counts.iter().sum();
        counts.iter().map(|c| c / n).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
