use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{canonical_order, check_trainable, Classifier};
use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::parallel::{map_range, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows every tree to purity.
    pub max_depth: Option<usize>,
    /// Candidate features per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    /// Draw `n` rows with replacement per tree; otherwise use every row once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            max_features: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn features_per_split(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
        /// `n·G − n_l·G_l − n_r·G_r` in training-sample units.
        impurity_decrease: f64,
    },
    /// Training class counts `[class 0, class 1]`.
    Leaf { counts: [u32; 2] },
}

/// A CART tree stored in pre-order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Stream of the forest seed that drove this tree's bootstrap and
    /// feature draws.
    pub stream: u64,
    /// Training samples that reached the root.
    pub samples: u32,
}

impl Tree {
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidArgument(format!("invalid tree: {reason}")));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.samples == 0 {
            return bad("zero root samples".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    impurity_decrease,
                } => {
                    if feature as usize >= d {
                        return bad(format!("node {i} splits on feature {feature} >= {d}"));
                    }
                    let in_range = |c: u32| (c as usize) > i && (c as usize) < self.nodes.len();
                    if !in_range(left) || !in_range(right) || left == right {
                        return bad(format!("node {i} has invalid children"));
                    }
                    if !threshold.is_finite() || !(impurity_decrease >= 0.0) {
                        return bad(format!("node {i} has a non-finite split"));
                    }
                }
                Node::Leaf { counts } => {
                    if counts[0] + counts[1] == 0 {
                        return bad(format!("leaf {i} has no samples"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Majority class of the reached leaf; ties go to class 0.
    pub fn predict_row(&self, row: &[f32]) -> u8 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { counts } => return (counts[1] > counts[0]) as u8,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub d: usize,
    pub config: ForestConfig,
}

impl ForestModel {
    pub fn validate(&self) -> Result<()> {
        self.trees.iter().try_for_each(|t| t.validate(self.d))
    }

    /// Per-tree votes for class 1.
    pub fn votes(&self, row: &[f32]) -> usize {
        self.trees.iter().filter(|t| t.predict_row(row) == 1).count()
    }
}

impl Classifier for ForestModel {
    fn dim(&self) -> usize {
        self.d
    }

    /// Majority vote over trees; ties go to class 0.
    fn predict_row(&self, row: &[f32]) -> u8 {
        (2 * self.votes(row) > self.trees.len()) as u8
    }
}

/// Normalized mean decrease in Gini impurity per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
}

impl ImportanceVector {
    /// Feature indices by decreasing importance; equal values keep the
    /// lower index first.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut r = self.ranking();
        r.truncate(k);
        r
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Mean decrease in Gini impurity, each split weighted by the fraction of
/// its tree's samples reaching it, averaged over trees and normalized to 1.
pub fn importance(model: &ForestModel) -> Result<ImportanceVector> {
    if model.trees.is_empty() {
        return Err(Error::NotFitted("forest has no trees".into()));
    }
    let mut values = vec![0.0f64; model.d];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split {
                feature,
                impurity_decrease,
                ..
            } = *node
            {
                values[feature as usize] += impurity_decrease / tree.samples as f64;
            }
        }
    }
    let n_trees = model.trees.len() as f64;
    values.iter_mut().for_each(|v| *v /= n_trees);
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NotFitted("forest has no informative split".into()));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(ImportanceVector { values })
}

/// Gini impurity `1 − Σp²` of class counts.
pub fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// `Σc²/n`; maximizing its child sum minimizes weighted child impurity.
fn purity(c0: u32, c1: u32) -> f64 {
    let n = (c0 + c1) as f64;
    (c0 as f64 * c0 as f64 + c1 as f64 * c1 as f64) / n
}

struct Candidate {
    feature: usize,
    threshold: f32,
    score: f64,
}

impl Candidate {
    /// Higher score wins; ties go to the lower feature, then lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        use std::cmp::Ordering;
        match self.score.total_cmp(&other.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => {
                self.feature
                    .cmp(&other.feature)
                    .then(self.threshold.total_cmp(&other.threshold))
                    == Ordering::Less
            }
        }
    }
}

struct Grower<'a> {
    /// Column-major canonical data: `cols[j * n + i]`.
    cols: &'a [f32],
    labels: &'a [u8],
    n: usize,
    d: usize,
    mtry: usize,
    max_depth: Option<usize>,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
    pairs: Vec<(f32, u8)>,
}

impl Grower<'_> {
    fn counts(&self, samples: &[usize]) -> [u32; 2] {
        let ones = samples.iter().filter(|&&i| self.labels[i] == 1).count() as u32;
        [samples.len() as u32 - ones, ones]
    }

    fn best_on(&mut self, feature: usize, samples: &[usize], total: [u32; 2]) -> Option<Candidate> {
        let col = &self.cols[feature * self.n..(feature + 1) * self.n];
        self.pairs.clear();
        self.pairs.extend(samples.iter().map(|&i| (col[i], self.labels[i])));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let pairs = &self.pairs;
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            return None;
        }
        let mut left = [0u32; 2];
        let mut best: Option<Candidate> = None;
        for k in 0..pairs.len() - 1 {
            left[pairs[k].1 as usize] += 1;
            let (a, b) = (pairs[k].0, pairs[k + 1].0);
            if a == b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = purity(left[0], left[1]) + purity(right[0], right[1]);
            if best.as_ref().is_none_or(|c| score > c.score) {
                let mid = (a as f64 + (b as f64 - a as f64) / 2.0) as f32;
                let threshold = if mid >= a && mid < b { mid } else { a };
                best = Some(Candidate {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let counts = self.counts(&samples);
        self.nodes.push(Node::Leaf { counts });
        if counts[0] == 0 || counts[1] == 0 || self.max_depth.is_some_and(|m| depth >= m) {
            return id;
        }
        // Lazy Fisher-Yates over features; constant ones do not count
        // towards the candidate budget.
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for k in 0..self.d {
            if visited == self.mtry {
                break;
            }
            let swap = self.rng.gen_range(k..self.d);
            self.features.swap(k, swap);
            let feature = self.features[k];
            if let Some(c) = self.best_on(feature, &samples, counts) {
                visited += 1;
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else {
            return id;
        };
        let col = &self.cols[best.feature * self.n..(best.feature + 1) * self.n];
        let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| col[i] <= best.threshold);
        let impurity_decrease = (best.score - purity(counts[0], counts[1])).max(0.0);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left,
            right,
            impurity_decrease,
        };
        id
    }
}

pub fn fit_forest(x: &FeatureMatrix, cfg: &ForestConfig) -> Result<ForestModel> {
    fit_forest_with(x, cfg, Execution::default())
}

/// Fits `cfg.n_trees` CART trees, one seeded stream per tree, fanning out
/// over trees under [`Execution::Parallel`]. The result is identical in
/// both modes.
pub fn fit_forest_with(x: &FeatureMatrix, cfg: &ForestConfig, exec: Execution) -> Result<ForestModel> {
    check_trainable(x)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    if cfg.max_depth == Some(0) {
        return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
    }
    let (n, d) = (x.n(), x.d());
    let order = canonical_order(x);
    let mut cols = vec![0f32; n * d];
    for (r, &i) in order.iter().enumerate() {
        for (j, &v) in x.row(i).iter().enumerate() {
            cols[j * n + r] = v;
        }
    }
    let labels: Vec<u8> = order.iter().map(|&i| x.labels()[i]).collect();
    let mtry = cfg.features_per_split(d);

    let trees = map_range(exec, cfg.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(t as u64);
        let samples: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut grower = Grower {
            cols: &cols,
            labels: &labels,
            n,
            d,
            mtry,
            max_depth: cfg.max_depth,
            rng,
            nodes: Vec::new(),
            features: (0..d).collect(),
            pairs: Vec::with_capacity(n),
        };
        grower.grow(samples, 0);
        Tree {
            nodes: grower.nodes,
            stream: t as u64,
            samples: n as u32,
        }
    });
    Ok(ForestModel {
        trees,
        d,
        config: cfg.clone(),
    })
}
