//! Invariant suites run by the `selftest` subcommand. Each suite checks an
//! exact property against an oracle written independently of the code
//! under test.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::Serialize;

use crate::density::{DensityEstimate, Grid, GridSpec, Support};
use crate::diagnostics::max_log_relative_belief;
use crate::error::Result;
use crate::imputation::{ar1_conditional, Ar1Model};
use crate::model::{merge_summary, split_summary, PartitionSpec, SummaryVector};
use crate::qrf::{self, FeatureMatrix, Forest, ForestHyper, Node};
use crate::rng::{self, tag, Rng};
use crate::stats;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// Number of individual checks.
    pub checks: usize,
    /// Largest violation observed, in the suite's own units.
    pub worst: f64,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, checks: usize, worst: f64, tol: f64, detail: String) -> Self {
        SuiteResult {
            name,
            passed: worst <= tol,
            checks,
            worst,
            detail,
        }
    }
}

fn random_forest(seed: u64, n: usize, q: usize, n_trees: usize) -> Result<(Forest, FeatureMatrix)> {
    let mut r = rng::stream(seed, &[tag::SELFTEST, 0]);
    let data: Vec<f64> = (0..n * q).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
    let x = FeatureMatrix::from_row_major(&data, n, q)?;
    let y: Vec<f64> = (0..n)
        .map(|i| x.get(i, 0) + 0.5 * x.get(i, 1 % q).powi(2) + 0.3 * r.random::<f64>())
        .collect();
    let hyper = ForestHyper {
        n_trees,
        mtry: (q / 2).max(1),
        min_node_size: 5,
        sample_fraction: 0.632,
        max_depth: 0,
    };
    Ok((Forest::fit(&x, &y, &hyper, seed, Support::REAL)?, x))
}

fn random_queries(r: &mut Rng, count: usize, q: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..q).map(|_| r.random::<f64>() * 5.0 - 2.5).collect()).collect()
}

/// Forest weights lie on the simplex: nonnegative, summing to one.
pub fn weight_simplex(seed: u64) -> Result<SuiteResult> {
    let (f, _) = random_forest(seed, 400, 3, 60)?;
    let mut r = rng::stream(seed, &[tag::SELFTEST, 1]);
    let mut worst = 0.0f64;
    for s in random_queries(&mut r, 100, 3) {
        let w = qrf::query_weights(&f, &s);
        let neg = w.iter().cloned().fold(0.0f64, |m, v| m.max(-v));
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs()).max(neg);
    }
    Ok(SuiteResult::new("weight-simplex", 100, worst, 1e-12, "max |sum w - 1|".into()))
}

/// Conditional CDF is nondecreasing with range [0, 1], and quantiles are
/// nondecreasing in the level.
pub fn cdf_quantile_monotone(seed: u64) -> Result<SuiteResult> {
    let (f, _) = random_forest(seed, 400, 3, 60)?;
    let mut r = rng::stream(seed, &[tag::SELFTEST, 2]);
    let mut violations = 0usize;
    let ys: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
    let levels: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for s in random_queries(&mut r, 100, 3) {
        let cdf: Vec<f64> = ys.iter().map(|&y| qrf::conditional_cdf(&f, &s, y)).collect();
        violations += cdf.windows(2).filter(|w| w[1] < w[0]).count();
        violations += cdf.iter().filter(|c| !(**c >= 0.0 && **c <= 1.0)).count();
        let qs: Vec<f64> = levels.iter().map(|&t| qrf::conditional_quantile(&f, &s, t)).collect();
        violations += qs.windows(2).filter(|w| w[1] < w[0]).count();
    }
    Ok(SuiteResult::new(
        "cdf-quantile-monotone",
        100,
        violations as f64,
        0.0,
        "count of monotonicity or range violations".into(),
    ))
}

/// Posterior densities integrate to one on their grids.
pub fn density_normalization(seed: u64) -> Result<SuiteResult> {
    let (f, _) = random_forest(seed, 400, 3, 60)?;
    let mut r = rng::stream(seed, &[tag::SELFTEST, 3]);
    let mut worst = 0.0f64;
    let queries = random_queries(&mut r, 50, 3);
    for s in &queries {
        let d = qrf::posterior_density(&f, s, &GridSpec::default())?;
        worst = worst.max((stats::trapezoid(d.grid.points(), &d.values) - 1.0).abs());
    }
    Ok(SuiteResult::new("density-normalization", queries.len(), worst, 1e-9, "max |integral - 1|".into()))
}

fn random_density(r: &mut Rng, grid: &Grid) -> Result<DensityEstimate> {
    let k = r.random_range(1..4);
    let comps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (r.random::<f64>() * 6.0 - 3.0, 0.2 + r.random::<f64>() * 1.5, r.random::<f64>() + 0.1))
        .collect();
    let values = grid
        .points()
        .iter()
        .map(|&x| comps.iter().map(|(m, s, w)| w * stats::normal_pdf(x, *m, *s)).sum())
        .collect();
    DensityEstimate::normalized(grid.clone(), values, Support::REAL)
}

/// For normalized densities on a shared grid the maximum log ratio is
/// nonnegative, and exactly zero for identical densities.
pub fn relative_belief_bounds(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut r = rng::stream(seed, &[tag::SELFTEST, 4]);
    let grid = Grid::uniform(-8.0, 8.0, 401)?;
    let mut worst_neg = 0.0f64;
    let mut worst_self = 0.0f64;
    for _ in 0..100 {
        let p = random_density(&mut r, &grid)?;
        let q = random_density(&mut r, &grid)?;
        worst_neg = worst_neg.max(-max_log_relative_belief(&p, &q)?);
        worst_self = worst_self.max(max_log_relative_belief(&p, &p)?.abs());
    }
    Ok(vec![
        SuiteResult::new("relative-belief-nonnegative", 100, worst_neg, 1e-6, "max of -R over pairs".into()),
        SuiteResult::new("relative-belief-self-zero", 100, worst_self, 0.0, "max |R(p, p)|".into()),
    ])
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for i in 0..n {
            if i != c {
                let f = m[i][c];
                if f != 0.0 {
                    let pivot = m[c].clone();
                    m[i].iter_mut().zip(&pivot).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// AR(1) conditional mean map and covariance against a dense
/// Schur complement built from an explicit inverse.
pub fn ar1_schur(seed: u64) -> Result<SuiteResult> {
    let mut r = rng::stream(seed, &[tag::SELFTEST, 5]);
    let mut worst = 0.0f64;
    let trials = 100;
    for _ in 0..trials {
        let len = r.random_range(2..=12);
        let phi = r.random::<f64>() * 1.8 - 0.9;
        let model = Ar1Model::new(0.0, phi, 0.2 + r.random::<f64>())?;
        let start = r.random_range(0..50usize);
        let patch: Vec<usize> = (start..start + len).collect();
        let k = r.random_range(1..len);
        let mut window: Vec<usize> = patch.choose_multiple(&mut r, k).copied().collect();
        window.sort_unstable();
        let others: Vec<usize> = patch.iter().copied().filter(|p| !window.contains(p)).collect();
        let s2 = model.innovation_var / (1.0 - phi * phi);
        let cov = |i: usize, j: usize| s2 * phi.powi((i as i64 - j as i64).unsigned_abs() as i32);
        let s_oo: Vec<Vec<f64>> = others.iter().map(|&i| others.iter().map(|&j| cov(i, j)).collect()).collect();
        let inv = gauss_jordan_inverse(&s_oo);
        let cond = ar1_conditional(&model, &patch, &window)?;
        for (a, &wa) in window.iter().enumerate() {
            // row a of S_WO S_OO^{-1}
            let map_row: Vec<f64> = (0..others.len())
                .map(|c| others.iter().enumerate().map(|(b, &ob)| cov(wa, ob) * inv[b][c]).sum())
                .collect();
            for (c, m) in map_row.iter().enumerate() {
                worst = worst.max((cond.mean_map[(a, c)] - m).abs());
            }
            for (b, &wb) in window.iter().enumerate() {
                let reduction: f64 = others.iter().enumerate().map(|(c, &oc)| map_row[c] * cov(oc, wb)).sum();
                worst = worst.max((cond.cov[(a, b)] - (cov(wa, wb) - reduction)).abs());
            }
        }
    }
    Ok(SuiteResult::new("ar1-schur-complement", trials, worst, 1e-10, "max abs error".into()))
}

/// Splitting a summary vector and merging the blocks back is the identity.
pub fn split_merge_roundtrip(seed: u64) -> Result<SuiteResult> {
    let mut r = rng::stream(seed, &[tag::SELFTEST, 6]);
    let mut failures = 0usize;
    let trials = 200;
    for _ in 0..trials {
        let q = r.random_range(2..=16);
        let mut idx: Vec<usize> = (0..q).collect();
        idx.shuffle(&mut r);
        let cut = r.random_range(1..q);
        let part = PartitionSpec::new(idx[..cut].to_vec(), idx[cut..].to_vec(), q)?;
        let s = SummaryVector::new((0..q).map(|i| format!("s{i}")).collect(), (0..q).map(|_| r.random::<f64>() * 100.0 - 50.0).collect());
        let (a, b) = split_summary(&s, &part)?;
        if merge_summary(&a, &b, &part)? != s {
            failures += 1;
        }
    }
    Ok(SuiteResult::new("split-merge-roundtrip", trials, failures as f64, 0.0, "count of non-identical round trips".into()))
}

#[derive(Debug, PartialEq)]
enum OracleNode {
    Split(usize, f64),
    Leaf(Vec<u32>),
}

/// Exhaustive CART: every (feature, midpoint) pair, node SSE recomputed
/// from scratch with two-pass means.
fn brute_force_cart(x: &[Vec<f64>], y: &[f64], rows: &[u32], min_node: usize, out: &mut Vec<OracleNode>) {
    let pure = rows.iter().all(|&r| y[r as usize] == y[rows[0] as usize]);
    let sse = |idx: &[u32]| {
        let m = idx.iter().map(|&i| y[i as usize]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i as usize] - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, usize, f64)> = None;
    if rows.len() > min_node && !pure {
        for (f, col) in x.iter().enumerate() {
            let mut vals: Vec<f64> = rows.iter().map(|&r| col[r as usize]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, rr): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| col[r as usize] <= t);
                let total = sse(&l) + sse(&rr);
                let better = match best {
                    None => true,
                    Some((b, _, _)) => total < b - 1e-9 * b.abs().max(1e-300),
                };
                if better {
                    best = Some((total, f, t));
                }
            }
        }
    }
    match best {
        None => {
            let mut leaf = rows.to_vec();
            leaf.sort_unstable();
            out.push(OracleNode::Leaf(leaf));
        }
        Some((_, f, t)) => {
            out.push(OracleNode::Split(f, t));
            let (l, rr): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| x[f][r as usize] <= t);
            brute_force_cart(x, y, &l, min_node, out);
            brute_force_cart(x, y, &rr, min_node, out);
        }
    }
}

/// A single full-sample tree with every feature tried equals exhaustive CART.
pub fn cart_brute_force(seed: u64) -> Result<SuiteResult> {
    let mut r = rng::stream(seed, &[tag::SELFTEST, 7]);
    let mut mismatches = 0usize;
    let trials = 50;
    for t in 0..trials {
        let n = r.random_range(5..=30);
        let q = r.random_range(1..=4);
        let min_node = r.random_range(1..=5);
        let cols: Vec<Vec<f64>> = (0..q).map(|_| (0..n).map(|_| (r.random::<f64>() * 20.0).round() / 4.0).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] * 0.7 + r.random::<f64>()).collect();
        let x = FeatureMatrix::from_columns(cols.clone())?;
        let hyper = ForestHyper {
            n_trees: 1,
            mtry: q,
            min_node_size: min_node,
            sample_fraction: 1.0,
            max_depth: 0,
        };
        let forest = Forest::fit(&x, &y, &hyper, seed ^ t, Support::REAL)?;
        let tree = &forest.trees[0];
        let got: Vec<OracleNode> = tree
            .nodes
            .iter()
            .map(|node| match node {
                Node::Split { feature, threshold, .. } => OracleNode::Split(*feature as usize, *threshold),
                Node::Leaf { start, len } => {
                    let mut leaf = tree.leaf_rows[*start as usize..(*start + *len) as usize].to_vec();
                    leaf.sort_unstable();
                    OracleNode::Leaf(leaf)
                }
            })
            .collect();
        let mut want = Vec::new();
        brute_force_cart(&cols, &y, &(0..n as u32).collect::<Vec<_>>(), min_node, &mut want);
        if got != want {
            mismatches += 1;
        }
    }
    Ok(SuiteResult::new("cart-brute-force", trials as usize, mismatches as f64, 0.0, "count of trees differing from the oracle".into()))
}

/// Runs every suite.
pub fn run_all(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = vec![
        weight_simplex(seed)?,
        cdf_quantile_monotone(seed)?,
        density_normalization(seed)?,
    ];
    out.extend(relative_belief_bounds(seed)?);
    out.push(ar1_schur(seed)?);
    out.push(split_merge_roundtrip(seed)?);
    out.push(cart_brute_force(seed)?);
    Ok(out)
}
