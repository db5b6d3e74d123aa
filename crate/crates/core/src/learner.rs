//! Regression forest over feature vectors and the greedy learned policy.
//!
//! Trees use axis-aligned splits chosen by weighted squared-error reduction over a
//! random subset of features, and predict the weighted mean of their leaf's targets.
//! Each tree sees a bootstrap sample drawn from its own RNG stream, so training is
//! reproducible regardless of how many threads build trees.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::features::{FeatureContext, FeatureVector, FEATURE_COUNT, SCHEMA_VERSION};
use crate::objective::{Budget, Instance, PathState};
use crate::sensor::Belief;
use crate::{par, seed, Error, Result};

const TREE_STREAM: u64 = 0x5452_4545;

/// A training example: features of `(state, action, belief)` and the oracle's value-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct QDatapoint {
    pub features: FeatureVector,
    pub q: f64,
    pub t: usize,
    pub weight: f64,
}

impl QDatapoint {
    pub fn new(features: FeatureVector, q: f64, t: usize) -> Result<Self> {
        if !(q.is_finite() && (0.0..=1.0).contains(&q)) {
            return Err(Error::Contract(format!("value-to-go {q} outside [0, 1]")));
        }
        Ok(QDatapoint {
            features,
            q,
            t,
            weight: 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree_count: 50,
            max_depth: 12,
            min_leaf: 5,
            feature_subsample: (FEATURE_COUNT / 3).max(1),
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 || self.min_leaf == 0 || self.feature_subsample == 0 {
            return Err(Error::Config(
                "tree_count, min_leaf and feature_subsample must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Contract("tree has no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let TreeNode::Split { left, right, threshold, .. } = *n {
                if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::Contract(format!("node {i} has invalid children")));
                }
                if !threshold.is_finite() {
                    return Err(Error::Contract(format!("node {i} has a non-finite threshold")));
                }
            }
        }
        Ok(RegressionTree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}

struct TreeBuilder<'a, R> {
    x: &'a [&'a [f64]],
    y: &'a [f64],
    w: &'a [f64],
    params: &'a ForestParams,
    n_features: usize,
    rng: R,
    nodes: Vec<TreeNode>,
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn weighted_mean(&self, rows: &[usize]) -> f64 {
        let (sw, swy) = rows
            .iter()
            .fold((0.0, 0.0), |(sw, swy), &r| (sw + self.w[r], swy + self.w[r] * self.y[r]));
        if sw > 0.0 {
            swy / sw
        } else {
            rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
        }
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: self.weighted_mean(rows),
        });
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return id;
        }
        let first = self.y[rows[0]];
        if rows.iter().all(|&r| self.y[r] == first) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return id;
        };
        let mut split = 0;
        for i in 0..rows.len() {
            if self.x[rows[i]][feature] <= threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Tries a random feature subset first and falls back to the remaining features
    /// only when none of the subset admits a split.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.n_features).collect();
        order.shuffle(&mut self.rng);
        let k = self.params.feature_subsample.min(self.n_features);
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, &f) in order.iter().enumerate() {
            if i >= k && best.is_some() {
                break;
            }
            if let Some((gain, thr)) = self.split_on(rows, f) {
                if best.is_none_or(|(g, ..)| gain > g) {
                    best = Some((gain, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    /// Best SSE reduction for one feature, respecting `min_leaf` on both sides.
    fn split_on(&self, rows: &[usize], f: usize) -> Option<(f64, f64)> {
        let mut sorted: Vec<usize> = rows.to_vec();
        sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
        let (tw, twy) = sorted
            .iter()
            .fold((0.0, 0.0), |(a, b), &r| (a + self.w[r], b + self.w[r] * self.y[r]));
        if tw <= 0.0 {
            return None;
        }
        let parent = twy * twy / tw;
        let min_leaf = self.params.min_leaf;
        let (mut lw, mut lwy) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..sorted.len() - 1 {
            let r = sorted[i];
            lw += self.w[r];
            lwy += self.w[r] * self.y[r];
            let n_left = i + 1;
            if n_left < min_leaf || sorted.len() - n_left < min_leaf {
                continue;
            }
            let (a, b) = (self.x[r][f], self.x[sorted[i + 1]][f]);
            if a == b {
                continue;
            }
            let rw = tw - lw;
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let rwy = twy - lwy;
            // SSE reduction = sum_left^2/w_left + sum_right^2/w_right - total^2/w_total
            let gain = lwy * lwy / lw + rwy * rwy / rw - parent;
            if gain > 1e-12 && best.is_none_or(|(g, _)| gain > g) {
                let mid = a + (b - a) / 2.0;
                // guard against the midpoint rounding onto the right value
                let thr = if mid < b { mid } else { a };
                best = Some((gain, thr));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<RegressionTree>,
    params: ForestParams,
    train_seed: u64,
    schema_version: u32,
    feature_count: usize,
    target_range: (f64, f64),
}

impl RegressionForest {
    /// Trains `tree_count` trees, each on a bootstrap sample, deterministically in `seed`.
    pub fn fit(data: &[QDatapoint], params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate().map_err(|e| Error::Training(e.to_string()))?;
        let first = data
            .first()
            .ok_or_else(|| Error::Training("no training data".into()))?;
        let schema = first.features.schema_version();
        let n_features = first.features.len();
        if n_features == 0 {
            return Err(Error::Training("feature vectors are empty".into()));
        }
        for (i, d) in data.iter().enumerate() {
            if d.features.schema_version() != schema {
                return Err(Error::Training(format!(
                    "datapoint {i} has schema {} but the first has {schema}",
                    d.features.schema_version()
                )));
            }
            if d.features.len() != n_features {
                return Err(Error::Training(format!("datapoint {i} has the wrong length")));
            }
            if !(d.q.is_finite() && d.weight.is_finite() && d.weight >= 0.0) {
                return Err(Error::Training(format!("datapoint {i} has an invalid target")));
            }
        }
        let x: Vec<&[f64]> = data.iter().map(|d| d.features.values()).collect();
        let y: Vec<f64> = data.iter().map(|d| d.q).collect();
        let w: Vec<f64> = data.iter().map(|d| d.weight).collect();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let trees = par::map_indexed(params.tree_count, |k| {
            let mut rng = seed::stream(seed, &[TREE_STREAM, k as u64]);
            let n = y.len();
            let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut builder = TreeBuilder {
                x: &x,
                y: &y,
                w: &w,
                params,
                n_features,
                rng,
                nodes: Vec::new(),
            };
            builder.build(&mut rows, 0);
            RegressionTree {
                nodes: builder.nodes,
            }
        });
        Ok(RegressionForest {
            trees,
            params: *params,
            train_seed: seed,
            schema_version: schema,
            feature_count: n_features,
            target_range: (lo, hi),
        })
    }

    /// Assembles a forest from explicit trees.
    pub fn from_trees(
        trees: Vec<RegressionTree>,
        params: ForestParams,
        schema_version: u32,
        feature_count: usize,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Contract("forest has no trees".into()));
        }
        if trees.iter().filter_map(|t| t.max_feature()).any(|f| f >= feature_count) {
            return Err(Error::Contract("a split refers to a missing feature".into()));
        }
        let leaves = trees.iter().flat_map(|t| t.nodes.iter()).filter_map(|n| match n {
            TreeNode::Leaf { value } => Some(*value),
            _ => None,
        });
        let (lo, hi) = leaves.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Ok(RegressionForest {
            params: ForestParams {
                tree_count: trees.len(),
                ..params
            },
            trees,
            train_seed: 0,
            schema_version,
            feature_count,
            target_range: (lo, hi),
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    /// Smallest and largest training target.
    pub fn target_range(&self) -> (f64, f64) {
        self.target_range
    }

    /// Mean of the per-tree predictions.
    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        if features.schema_version() != self.schema_version {
            return Err(Error::Contract(format!(
                "features use schema {} but the model expects {}",
                features.schema_version(),
                self.schema_version
            )));
        }
        if features.len() != self.feature_count {
            return Err(Error::Contract(format!(
                "expected {} features, got {}",
                self.feature_count,
                features.len()
            )));
        }
        Ok(self.predict_raw(features.values()))
    }

    pub(crate) fn predict_raw(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    /// Text model file:
    ///
    /// ```text
    /// explore-forest 1
    /// schema <version> features <count>
    /// params <trees> <max_depth> <min_leaf> <feature_subsample>
    /// seed <u64>
    /// range <min target> <max target>
    /// tree <node count>
    /// L <value>                         leaf
    /// S <feature> <threshold> <l> <r>   split, x[feature] <= threshold goes to l
    /// end
    /// ```
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FOREST_MAGIC} {FOREST_VERSION}")?;
        writeln!(
            out,
            "schema {} features {}",
            self.schema_version, self.feature_count
        )?;
        let p = &self.params;
        writeln!(
            out,
            "params {} {} {} {}",
            p.tree_count, p.max_depth, p.min_leaf, p.feature_subsample
        )?;
        writeln!(out, "seed {}", self.train_seed)?;
        writeln!(out, "range {} {}", self.target_range.0, self.target_range.1)?;
        for tree in &self.trees {
            writeln!(out, "tree {}", tree.nodes.len())?;
            for node in &tree.nodes {
                match node {
                    TreeNode::Leaf { value } => writeln!(out, "L {value}")?,
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "S {feature} {threshold} {left} {right}")?,
                }
            }
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            match lines.next() {
                Some((i, line)) => Ok((
                    i + 1,
                    line?.split_whitespace().map(str::to_string).collect(),
                )),
                None => Err(Error::parse(0, format!("unexpected end of file, expected {what}"))),
            }
        };
        fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::parse(line, format!("invalid number {s:?}")))
        }
        fn expect(line: usize, f: &[String], key: &str, arity: usize) -> Result<()> {
            if f.first().map(String::as_str) != Some(key) || f.len() != arity + 1 {
                return Err(Error::parse(line, format!("expected `{key}` with {arity} fields")));
            }
            Ok(())
        }

        let (ln, f) = next("header")?;
        expect(ln, &f, FOREST_MAGIC, 1)?;
        let version: u32 = num(ln, &f[1])?;
        if version != FOREST_VERSION {
            return Err(Error::Incompatible(format!(
                "model file version {version}, this build reads {FOREST_VERSION}"
            )));
        }
        let (ln, f) = next("schema")?;
        expect(ln, &f, "schema", 3)?;
        let schema_version: u32 = num(ln, &f[1])?;
        if f[2] != "features" {
            return Err(Error::parse(ln, "expected `features`"));
        }
        let feature_count: usize = num(ln, &f[3])?;
        let (ln, f) = next("params")?;
        expect(ln, &f, "params", 4)?;
        let params = ForestParams {
            tree_count: num(ln, &f[1])?,
            max_depth: num(ln, &f[2])?,
            min_leaf: num(ln, &f[3])?,
            feature_subsample: num(ln, &f[4])?,
        };
        let (ln, f) = next("seed")?;
        expect(ln, &f, "seed", 1)?;
        let train_seed: u64 = num(ln, &f[1])?;
        let (ln, f) = next("range")?;
        expect(ln, &f, "range", 2)?;
        let target_range = (num(ln, &f[1])?, num(ln, &f[2])?);

        let mut trees = Vec::with_capacity(params.tree_count);
        for _ in 0..params.tree_count {
            let (ln, f) = next("tree")?;
            expect(ln, &f, "tree", 1)?;
            let count: usize = num(ln, &f[1])?;
            let mut nodes = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let (ln, f) = next("tree node")?;
                let node = match f.first().map(String::as_str) {
                    Some("L") if f.len() == 2 => TreeNode::Leaf {
                        value: num(ln, &f[1])?,
                    },
                    Some("S") if f.len() == 5 => TreeNode::Split {
                        feature: num(ln, &f[1])?,
                        threshold: num(ln, &f[2])?,
                        left: num(ln, &f[3])?,
                        right: num(ln, &f[4])?,
                    },
                    _ => return Err(Error::parse(ln, "expected a leaf or split line")),
                };
                nodes.push(node);
            }
            let tree = RegressionTree::from_nodes(nodes).map_err(|e| Error::parse(ln, e.to_string()))?;
            if tree.max_feature().is_some_and(|m| m >= feature_count) {
                return Err(Error::parse(ln, "split on a feature beyond the schema"));
            }
            trees.push(tree);
        }
        let (ln, f) = next("end")?;
        expect(ln, &f, "end", 0)?;
        if trees.is_empty() {
            return Err(Error::parse(ln, "model has no trees"));
        }
        Ok(RegressionForest {
            trees,
            params,
            train_seed,
            schema_version,
            feature_count,
            target_range,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(fs::File::open(path)?))
    }
}

const FOREST_MAGIC: &str = "explore-forest";
const FOREST_VERSION: u32 = 1;

/// Greedy policy over predicted value-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedPolicy {
    forest: RegressionForest,
}

impl LearnedPolicy {
    /// Rejects forests trained against a different feature schema than this build's.
    pub fn new(forest: RegressionForest) -> Result<Self> {
        if forest.schema_version() != SCHEMA_VERSION || forest.feature_count() != FEATURE_COUNT {
            return Err(Error::Incompatible(format!(
                "model uses feature schema {} ({} features), this build extracts schema {} ({})",
                forest.schema_version(),
                forest.feature_count(),
                SCHEMA_VERSION,
                FEATURE_COUNT
            )));
        }
        Ok(LearnedPolicy { forest })
    }

    pub fn forest(&self) -> &RegressionForest {
        &self.forest
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(RegressionForest::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.forest.save(path)
    }

    /// Feasible action with the highest predicted value-to-go (lowest index on ties);
    /// `Ok(None)` when nothing is feasible.
    pub fn select_action(
        &self,
        inst: &Instance,
        belief: &Belief,
        state: &PathState,
        budget: &Budget,
    ) -> Result<Option<usize>> {
        let feasible = inst.feasible_actions(state, budget);
        match feasible.len() {
            0 => return Ok(None),
            1 => return Ok(Some(feasible[0])),
            _ => {}
        }
        let ctx = FeatureContext::new(belief, inst.nodes(), inst.sensor(), budget);
        let mut best: Option<(f64, usize)> = None;
        for a in feasible {
            let q = self.forest.predict(&ctx.extract(state, a)?)?;
            if best.is_none_or(|(b, _)| q > b) {
                best = Some((q, a));
            }
        }
        Ok(best.map(|(_, a)| a))
    }
}

/// Draws `count` distinct feature indices; exposed for tests of the subsampling rule.
pub fn sample_features(rng: &mut impl Rng, n_features: usize, count: usize) -> Vec<usize> {
    index::sample(rng, n_features, count.min(n_features)).into_vec()
}
