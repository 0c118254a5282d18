//! Quantile regression forest.
//!
//! Trees are grown on without-replacement subsamples, choosing each split
//! among `mtry` random features by minimizing the summed squared error of
//! the two children. Leaves keep the in-bag training rows they contain, so
//! a query point induces weights over training rows
//! `w_i(s) = (1/B) sum_b [i in leaf_b(s)] / |leaf_b(s)|`, and the weighted
//! responses give conditional CDFs, quantiles and KDE posterior densities.

use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{self, DensityEstimate, Grid, GridSpec, Support};
use crate::error::{Error, Result};
use crate::model::TrainingSet;
use crate::rng::{self, tag, Rng};
use crate::stats;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// Features tried per split.
    pub mtry: usize,
    /// Nodes with at most this many rows become leaves.
    pub min_node_size: usize,
    pub sample_fraction: f64,
    /// 0 means unlimited.
    pub max_depth: usize,
}

impl ForestHyper {
    /// Defaults for `q` features: 200 trees, `mtry = max(1, q/3)`,
    /// leaves of at most 5 rows, 0.632 subsampling.
    pub fn for_dim(q: usize) -> Self {
        ForestHyper {
            n_trees: 200,
            mtry: (q / 3).max(1),
            min_node_size: 5,
            sample_fraction: 0.632,
            max_depth: 0,
        }
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees must be >= 1"));
        }
        if self.mtry == 0 || self.mtry > q {
            return Err(Error::config(format!("mtry must lie in 1..={q}, got {}", self.mtry)));
        }
        if self.min_node_size == 0 {
            return Err(Error::config("min_node_size must be >= 1"));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::config("sample_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Column-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    q: usize,
    columns: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_row_major(data: &[f64], n: usize, q: usize) -> Result<Self> {
        if data.len() != n * q || n == 0 || q == 0 {
            return Err(Error::config("feature matrix shape mismatch"));
        }
        let mut columns = vec![0.0; n * q];
        for i in 0..n {
            for j in 0..q {
                columns[j * n + i] = data[i * q + j];
            }
        }
        Ok(FeatureMatrix { n, q, columns })
    }

    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Self> {
        let q = cols.len();
        let n = cols.first().map(|c| c.len()).unwrap_or(0);
        if q == 0 || n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(Error::config("feature columns must be nonempty and equally long"));
        }
        Ok(FeatureMatrix {
            n,
            q,
            columns: cols.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.q).map(|j| self.get(i, j)).collect()
    }

    /// Rows `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let n = rows.len();
        let mut columns = Vec::with_capacity(n * self.q);
        for j in 0..self.q {
            let c = self.column(j);
            columns.extend(rows.iter().map(|&i| c[i]));
        }
        FeatureMatrix { n, q: self.q, columns }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Range `start..start + len` into the tree's `leaf_rows`.
    Leaf { start: u32, len: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub leaf_rows: Vec<u32>,
    /// Sorted in-bag training rows.
    pub in_bag: Vec<u32>,
}

impl Tree {
    pub fn leaf_of(&self, x: &[f64]) -> &[u32] {
        let mut k = 0usize;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { start, len } => {
                    return &self.leaf_rows[*start as usize..(*start + *len) as usize];
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// `(feature, threshold)` of every split in depth-first order.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, threshold, .. } => Some((*feature as usize, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

/// Best split of a node: feature, threshold and the children's summed
/// squared error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub sse: f64,
}

/// Scans thresholds at midpoints between consecutive distinct values of
/// each candidate feature (ascending), keeping the first strict improvement
/// so that ties (within `1e-12` of the node's total sum of squares) resolve
/// to the smallest `(feature, threshold)`.
pub fn best_split(x: &FeatureMatrix, y: &[f64], rows: &[u32], features: &[usize], scratch: &mut Vec<(f64, f64)>) -> Option<SplitChoice> {
    let n = rows.len();
    let mean = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / n as f64;
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let col = x.column(f);
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (col[r as usize], y[r as usize] - mean)));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let (total, total_sq) = scratch.iter().fold((0.0, 0.0), |(s, s2), p| (s + p.1, s2 + p.1 * p.1));
        let (mut left, mut left_sq) = (0.0, 0.0);
        for i in 0..n - 1 {
            left += scratch[i].1;
            left_sq += scratch[i].1 * scratch[i].1;
            if !(scratch[i].0 < scratch[i + 1].0) {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let right = total - left;
            let sse = (left_sq - left * left / nl) + ((total_sq - left_sq) - right * right / nr);
            let better = match best {
                None => true,
                // float noise in the running sums scales with the node's total
                Some(b) => sse < b.sse - 1e-12 * total_sq,
            };
            if better {
                let (a, b) = (scratch[i].0, scratch[i + 1].0);
                let mid = 0.5 * (a + b);
                let threshold = if mid < b && mid >= a { mid } else { a };
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    sse: sse.max(0.0),
                });
            }
        }
    }
    best
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    hyper: &'a ForestHyper,
    nodes: Vec<Node>,
    leaf_rows: Vec<u32>,
    scratch: Vec<(f64, f64)>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [u32], depth: usize, rng: &mut Rng) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { start: 0, len: 0 });
        let y0 = self.y[rows[0] as usize];
        let pure = rows.iter().all(|&r| self.y[r as usize] == y0);
        let depth_capped = self.hyper.max_depth > 0 && depth >= self.hyper.max_depth;
        let split = if rows.len() <= self.hyper.min_node_size || pure || depth_capped {
            None
        } else {
            let mut features: Vec<usize> = if self.hyper.mtry >= self.x.q() {
                (0..self.x.q()).collect()
            } else {
                index::sample(rng, self.x.q(), self.hyper.mtry).into_vec()
            };
            features.sort_unstable();
            best_split(self.x, self.y, rows, &features, &mut self.scratch)
        };
        match split {
            None => {
                let start = self.leaf_rows.len() as u32;
                self.leaf_rows.extend_from_slice(rows);
                self.nodes[id as usize] = Node::Leaf {
                    start,
                    len: rows.len() as u32,
                };
            }
            Some(s) => {
                let col = self.x.column(s.feature);
                let mut cut = 0;
                for i in 0..rows.len() {
                    if col[rows[i] as usize] <= s.threshold {
                        rows.swap(i, cut);
                        cut += 1;
                    }
                }
                let (l, r) = rows.split_at_mut(cut);
                let left = self.grow(l, depth + 1, rng);
                let right = self.grow(r, depth + 1, rng);
                self.nodes[id as usize] = Node::Split {
                    feature: s.feature as u32,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

/// Grows one tree on the given in-bag rows.
pub fn grow_tree(x: &FeatureMatrix, y: &[f64], mut in_bag: Vec<u32>, hyper: &ForestHyper, rng: &mut Rng) -> Tree {
    in_bag.sort_unstable();
    let mut rows = in_bag.clone();
    let mut g = Grower {
        x,
        y,
        hyper,
        nodes: Vec::new(),
        leaf_rows: Vec::with_capacity(rows.len()),
        scratch: Vec::with_capacity(rows.len()),
    };
    g.grow(&mut rows, 0, rng);
    Tree {
        nodes: g.nodes,
        leaf_rows: g.leaf_rows,
        in_bag,
    }
}

/// A trained forest for one scalar response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub trees: Vec<Tree>,
    pub response: Vec<f64>,
    pub hyper: ForestHyper,
    pub seed: u64,
    pub n_features: usize,
    /// Support of the response (the prior support of the target parameter).
    pub support: Support,
    pub response_name: String,
    pub feature_names: Vec<String>,
    #[serde(skip)]
    order: OnceLock<Vec<u32>>,
}

impl Forest {
    /// Trains on an explicit feature matrix. Tree `b` uses stream
    /// `(seed, TREE, b)` for both its subsample and its feature draws.
    pub fn fit(x: &FeatureMatrix, y: &[f64], hyper: &ForestHyper, seed: u64, support: Support) -> Result<Forest> {
        hyper.validate(x.q())?;
        if y.len() != x.n() {
            return Err(Error::config("response length differs from feature rows"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("response contains non-finite values"));
        }
        let n = x.n();
        let k = ((hyper.sample_fraction * n as f64).ceil() as usize).clamp(1, n);
        let trees = (0..hyper.n_trees)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::stream(seed, &[tag::TREE, b as u64]);
                let in_bag: Vec<u32> = if k == n {
                    (0..n as u32).collect()
                } else {
                    index::sample(&mut rng, n, k).into_iter().map(|i| i as u32).collect()
                };
                grow_tree(x, y, in_bag, hyper, &mut rng)
            })
            .collect();
        Ok(Forest {
            format_version: FOREST_FORMAT_VERSION,
            trees,
            response: y.to_vec(),
            hyper: *hyper,
            seed,
            n_features: x.q(),
            support,
            response_name: String::new(),
            feature_names: Vec::new(),
            order: OnceLock::new(),
        })
    }

    pub fn n_train(&self) -> usize {
        self.response.len()
    }

    /// Sparse weights `(row, w)` sorted by row; weights sum to one.
    pub fn sparse_weights(&self, s: &[f64]) -> Vec<(u32, f64)> {
        let b = self.trees.len() as f64;
        let mut acc: Vec<(u32, f64)> = Vec::new();
        for tree in &self.trees {
            let leaf = tree.leaf_of(s);
            let w = 1.0 / (b * leaf.len() as f64);
            acc.extend(leaf.iter().map(|&r| (r, w)));
        }
        acc.sort_unstable_by_key(|p| p.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(acc.len());
        for (r, w) in acc {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += w,
                _ => merged.push((r, w)),
            }
        }
        merged
    }

    /// Training rows ordered by response value (ties by row).
    fn response_order(&self) -> &[u32] {
        self.order.get_or_init(|| {
            let mut o: Vec<u32> = (0..self.response.len() as u32).collect();
            o.sort_by(|a, b| self.response[*a as usize].total_cmp(&self.response[*b as usize]).then(a.cmp(b)));
            o
        })
    }

    /// `(response, weight)` pairs sorted by response, one per training row
    /// with positive weight.
    pub fn response_pairs(&self, s: &[f64]) -> Vec<(f64, f64)> {
        let b = self.trees.len() as f64;
        let leaves: Vec<&[u32]> = self.trees.iter().map(|t| t.leaf_of(s)).collect();
        let total: usize = leaves.iter().map(|l| l.len()).sum();
        let n = self.n_train();
        if total * 8 >= n {
            let mut w = vec![0.0; n];
            for leaf in &leaves {
                let v = 1.0 / (b * leaf.len() as f64);
                leaf.iter().for_each(|&r| w[r as usize] += v);
            }
            return self
                .response_order()
                .iter()
                .filter(|&&r| w[r as usize] > 0.0)
                .map(|&r| (self.response[r as usize], w[r as usize]))
                .collect();
        }
        let mut acc: Vec<(f64, u32, f64)> = Vec::with_capacity(total);
        for leaf in &leaves {
            let v = 1.0 / (b * leaf.len() as f64);
            acc.extend(leaf.iter().map(|&r| (self.response[r as usize], r, v)));
        }
        acc.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(acc.len());
        let mut last_row = u32::MAX;
        for (v, r, w) in acc {
            match pairs.last_mut() {
                Some(p) if r == last_row => p.1 += w,
                _ => pairs.push((v, w)),
            }
            last_row = r;
        }
        pairs
    }

    pub fn response_range(&self) -> f64 {
        let (lo, hi) = self
            .response
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        hi - lo
    }

    /// Bandwidth floor for degenerate weight vectors.
    pub fn bandwidth_floor(&self) -> f64 {
        1e-6 * self.response_range()
    }

    /// Mean response over the out-of-bag trees of each training row of `x`
    /// (the matrix the forest was trained on). Rows that are in-bag for
    /// every tree get the overall response mean.
    pub fn oob_predictions(&self, x: &FeatureMatrix) -> Vec<f64> {
        let n = self.n_train();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for tree in &self.trees {
            let mut in_bag = tree.in_bag.iter().peekable();
            for i in 0..n {
                if in_bag.peek().is_some_and(|&&r| r as usize == i) {
                    in_bag.next();
                    continue;
                }
                let leaf = tree.leaf_of(&x.row(i));
                sum[i] += leaf.iter().map(|&r| self.response[r as usize]).sum::<f64>() / leaf.len() as f64;
                count[i] += 1;
            }
        }
        let overall = stats::mean(&self.response);
        sum.iter().zip(&count).map(|(s, c)| if *c > 0 { s / *c as f64 } else { overall }).collect()
    }

    /// Conditional mean prediction.
    pub fn predict_mean(&self, s: &[f64]) -> f64 {
        self.sparse_weights(s).iter().map(|(r, w)| w * self.response[*r as usize]).sum()
    }
}

/// Forest for parameter `target` with the training summaries as features.
pub fn train_forest(train: &TrainingSet, target: usize, hyper: &ForestHyper, seed: u64) -> Result<Forest> {
    if target >= train.p() {
        return Err(Error::config(format!("target index {target} out of range for {} parameters", train.p())));
    }
    let x = FeatureMatrix::from_row_major(train.summary_matrix(), train.len(), train.q())?;
    let y = train.param_column(target);
    let mut f = Forest::fit(&x, &y, hyper, seed, train.prior.support(target))?;
    f.response_name = train.param_names[target].clone();
    f.feature_names = train.summary_names.clone();
    Ok(f)
}

/// Dense weight vector over the training rows.
pub fn query_weights(f: &Forest, s: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; f.n_train()];
    for (r, v) in f.sparse_weights(s) {
        w[r as usize] = v;
    }
    w
}

/// `sum_i w_i(s) [eta_i <= y]`.
pub fn conditional_cdf(f: &Forest, s: &[f64], y: f64) -> f64 {
    f.response_pairs(s).iter().take_while(|p| p.0 <= y).map(|p| p.1).sum::<f64>().min(1.0)
}

/// Smallest response value whose conditional CDF reaches `q`.
pub fn conditional_quantile(f: &Forest, s: &[f64], q: f64) -> f64 {
    stats::weighted_quantile_sorted(&f.response_pairs(s), q)
}

/// Weighted Gaussian KDE of the training responses under the query's
/// forest weights, on an automatic grid: `spec.points` nodes spanning the
/// weighted quantile range widened by `spec.expand`, clipped to the
/// response support.
pub fn posterior_density(f: &Forest, s: &[f64], spec: &GridSpec) -> Result<DensityEstimate> {
    let pairs = f.response_pairs(s);
    let (h, _) = density::floored_bandwidth(&pairs, f.bandwidth_floor());
    let (lo, hi) = density::weighted_range(&pairs, spec);
    let grid = spec.layout(lo, hi, 4.0 * h, f.support)?;
    density::kde_on_grid(&pairs, h, &grid, f.support)
}

/// Same KDE on a caller-supplied grid.
pub fn posterior_density_on(f: &Forest, s: &[f64], grid: &Grid) -> Result<DensityEstimate> {
    let pairs = f.response_pairs(s);
    let (h, _) = density::floored_bandwidth(&pairs, f.bandwidth_floor());
    density::kde_on_grid(&pairs, h, grid, f.support)
}

pub fn pinball_loss(y: f64, q_hat: f64, tau: f64) -> f64 {
    let u = y - q_hat;
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

pub const TUNING_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub candidates: Vec<(ForestHyper, f64)>,
    pub best: ForestHyper,
}

/// k-fold cross-validated mean pinball loss over [`TUNING_LEVELS`].
pub fn cv_pinball_loss(x: &FeatureMatrix, y: &[f64], hyper: &ForestHyper, folds: usize, seed: u64) -> Result<f64> {
    let n = x.n();
    if folds < 2 || folds > n {
        return Err(Error::config(format!("need 2 <= folds <= n, got {folds}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, &[tag::TUNE]);
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut total = 0.0;
    for k in 0..folds {
        let test: Vec<usize> = (k..n).step_by(folds).map(|i| perm[i]).collect();
        let train: Vec<usize> = (0..n).filter(|i| i % folds != k).map(|i| perm[i]).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let f = Forest::fit(&xt, &yt, hyper, rng::derive_seed(seed, &[tag::TUNE, k as u64]), Support::REAL)?;
        total += test
            .par_iter()
            .map(|&i| {
                let pairs = f.response_pairs(&x.row(i));
                TUNING_LEVELS
                    .iter()
                    .map(|&tau| pinball_loss(y[i], stats::weighted_quantile_sorted(&pairs, tau), tau))
                    .sum::<f64>()
            })
            .sum::<f64>();
    }
    Ok(total / (n * TUNING_LEVELS.len()) as f64)
}

/// Grid search by cross-validated pinball loss; ties prefer smaller `mtry`,
/// then larger `min_node_size`.
pub fn tune_hyperparameters_report(train: &TrainingSet, target: usize, grid: &[ForestHyper], folds: usize, seed: u64) -> Result<TuningReport> {
    if grid.is_empty() {
        return Err(Error::config("tuning grid is empty"));
    }
    if target >= train.p() {
        return Err(Error::config("target index out of range"));
    }
    for h in grid {
        h.validate(train.q())?;
    }
    if grid.len() == 1 {
        return Ok(TuningReport {
            candidates: vec![(grid[0], f64::NAN)],
            best: grid[0],
        });
    }
    let x = FeatureMatrix::from_row_major(train.summary_matrix(), train.len(), train.q())?;
    let y = train.param_column(target);
    let candidates = grid
        .iter()
        .map(|h| Ok((*h, cv_pinball_loss(&x, &y, h, folds, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    let best = candidates
        .iter()
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(a.0.mtry.cmp(&b.0.mtry))
                .then(b.0.min_node_size.cmp(&a.0.min_node_size))
        })
        .map(|c| c.0)
        .expect("nonempty grid");
    Ok(TuningReport { candidates, best })
}

pub fn tune_hyperparameters(train: &TrainingSet, target: usize, grid: &[ForestHyper], folds: usize, seed: u64) -> Result<ForestHyper> {
    tune_hyperparameters_report(train, target, grid, folds, seed).map(|r| r.best)
}

/// Standard tuning grid: `mtry` in `{1, q/3, 2q/3, q}`, `min_node_size` on
/// a roughly logarithmic ladder up to a fifth of the training size, and
/// `sample_fraction` in `{0.5, 0.8}`.
pub fn default_tuning_grid(q: usize, n: usize, n_trees: usize) -> Vec<ForestHyper> {
    let mut mtrys = vec![1, (q / 3).max(1), (2 * q / 3).max(1), q];
    mtrys.sort_unstable();
    mtrys.dedup();
    let sizes: Vec<usize> = [5, 20, 50, 100, 200, 500, 1000].into_iter().filter(|&s| s == 5 || s * 5 <= n).collect();
    let mut grid = Vec::new();
    for &mtry in &mtrys {
        for &min_node_size in &sizes {
            for &sample_fraction in &[0.5, 0.8] {
                grid.push(ForestHyper {
                    n_trees,
                    mtry,
                    min_node_size,
                    sample_fraction,
                    max_depth: 0,
                });
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = rng::stream(seed, &[]);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let y = (0..n).map(|i| 2.0 * cols[0][i] + (cols[1][i] * 6.0).sin() + 0.1 * rng.random::<f64>()).collect();
        (FeatureMatrix::from_columns(cols).unwrap(), y)
    }

    #[test]
    fn constant_response_gives_constant_quantiles() {
        let (x, _) = toy(100, 1);
        let y = vec![2.5; 100];
        let f = Forest::fit(&x, &y, &ForestHyper::for_dim(3), 4, Support::REAL).unwrap();
        for q in [0.1, 0.5, 0.9] {
            assert_eq!(conditional_quantile(&f, &[0.3, 0.3, 0.3], q), 2.5);
        }
        let d = posterior_density(&f, &[0.3, 0.3, 0.3], &GridSpec::default());
        // all weight on one value: floor bandwidth of 1e-6 * range(=0) spike
        assert!(d.is_ok());
    }

    #[test]
    fn single_leaf_weights() {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { start: 0, len: 2 },
                Node::Leaf { start: 2, len: 3 },
            ],
            leaf_rows: vec![3, 7, 0, 1, 2],
            in_bag: vec![0, 1, 2, 3, 7],
        };
        let f = Forest {
            format_version: FOREST_FORMAT_VERSION,
            trees: vec![tree],
            response: (0..10).map(|i| i as f64).collect(),
            hyper: ForestHyper::for_dim(1),
            seed: 0,
            n_features: 1,
            support: Support::REAL,
            response_name: String::new(),
            feature_names: vec![],
            order: OnceLock::new(),
        };
        let w = query_weights(&f, &[0.2]);
        assert_eq!(w[3], 0.5);
        assert_eq!(w[7], 0.5);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        // two-point weights {0.5 at 3, 0.5 at 7}: median is the lower point
        assert_eq!(conditional_quantile(&f, &[0.2], 0.5), 3.0);
        assert_eq!(conditional_cdf(&f, &[0.2], -1.0), 0.0);
        assert_eq!(conditional_cdf(&f, &[0.2], 100.0), 1.0);
    }

    #[test]
    fn training_is_reproducible() {
        let (x, y) = toy(200, 2);
        let h = ForestHyper::for_dim(3);
        let a = Forest::fit(&x, &y, &h, 9, Support::REAL).unwrap();
        let b = Forest::fit(&x, &y, &h, 9, Support::REAL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thresholds_lie_strictly_inside_in_bag_range() {
        let (x, y) = toy(300, 3);
        let f = Forest::fit(&x, &y, &ForestHyper::for_dim(3), 1, Support::REAL).unwrap();
        for t in &f.trees {
            for (feat, thr) in t.splits() {
                let vals: Vec<f64> = t.in_bag.iter().map(|&r| x.get(r as usize, feat)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo <= thr && thr < hi);
            }
            let mut rows = t.leaf_rows.clone();
            rows.sort_unstable();
            assert_eq!(rows, t.in_bag, "each in-bag row sits in exactly one leaf");
        }
    }

    #[test]
    fn pinball_median_is_half_absolute_error() {
        let ys = [1.0, -2.0, 3.5, 0.0];
        let qs = [0.5, 1.0, 2.0, -1.0];
        let pin: f64 = ys.iter().zip(&qs).map(|(y, q)| pinball_loss(*y, *q, 0.5)).sum();
        let mae: f64 = ys.iter().zip(&qs).map(|(y, q)| (y - q).abs()).sum();
        assert!((pin - 0.5 * mae).abs() < 1e-15);
    }

    #[test]
    fn hyper_validation() {
        let mut h = ForestHyper::for_dim(3);
        assert!(h.validate(3).is_ok());
        h.mtry = 4;
        assert!(h.validate(3).is_err());
        h.mtry = 1;
        h.sample_fraction = 0.0;
        assert!(h.validate(3).is_err());
    }
}
