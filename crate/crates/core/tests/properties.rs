use lfconflict::density::{DensityEstimate, Grid, Support};
use lfconflict::diagnostics::{conflict::tail_fraction, max_log_relative_belief, window_set};
use lfconflict::imputation::{impute_forest, impute_linear_bayes, ForestImputeConfig, ImputationRequest};
use lfconflict::model::PartitionSpec;
use lfconflict::qrf::{self, FeatureMatrix, Forest, ForestHyper};
use lfconflict::rng;
use proptest::prelude::*;
use rand::Rng as _;

fn random_table(n: usize, q: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    let mut out = Vec::with_capacity(n * q);
    for _ in 0..n {
        let z: f64 = r.random_range(-1.0..1.0);
        out.extend((0..q).map(|j| z * (j + 1) as f64 + r.random_range(-0.5..0.5)));
    }
    out
}

/// A partition of `0..q` from a bitmask, both blocks nonempty.
fn partition(q: usize, mask: u32) -> PartitionSpec {
    let mut a: Vec<usize> = (0..q).filter(|j| mask >> j & 1 == 1).collect();
    let mut b: Vec<usize> = (0..q).filter(|j| mask >> j & 1 == 0).collect();
    if a.is_empty() {
        a.push(b.pop().unwrap());
    }
    if b.is_empty() {
        b.push(a.pop().unwrap());
    }
    PartitionSpec::new(a, b, q).unwrap()
}

fn density_from(raw: &[f64], grid: &Grid) -> DensityEstimate {
    DensityEstimate::normalized(grid.clone(), raw.iter().map(|v| v.abs() + 1e-3).collect(), Support::REAL).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_weights_form_a_simplex(seed in 0u64..10_000, n in 20usize..120, q in 1usize..4, mns in 1usize..10, sf in 0.3f64..1.0) {
        let data = random_table(n, q + 1, seed);
        let x = FeatureMatrix::from_row_major(&data.chunks(q + 1).flat_map(|r| r[..q].to_vec()).collect::<Vec<_>>(), n, q).unwrap();
        let y: Vec<f64> = data.chunks(q + 1).map(|r| r[q]).collect();
        let h = ForestHyper { n_trees: 15, mtry: q, min_node_size: mns, sample_fraction: sf, max_depth: 0 };
        let f = Forest::fit(&x, &y, &h, seed, Support::REAL).unwrap();
        let s: Vec<f64> = (0..q).map(|j| (j as f64 - 1.0) * 0.7).collect();
        let w = qrf::query_weights(&f, &s);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let qs: Vec<f64> = [0.1, 0.5, 0.9].iter().map(|&p| qrf::conditional_quantile(&f, &s, p)).collect();
        prop_assert!(qs[0] <= qs[1] && qs[1] <= qs[2]);
    }

    #[test]
    fn relative_belief_is_nonnegative(a in prop::collection::vec(-5.0f64..5.0, 40), b in prop::collection::vec(-5.0f64..5.0, 40)) {
        let grid = Grid::uniform(0.0, 1.0, 40).unwrap();
        let (p, q) = (density_from(&a, &grid), density_from(&b, &grid));
        prop_assert!((p.integral() - 1.0).abs() < 1e-9);
        prop_assert!(max_log_relative_belief(&p, &q).unwrap() >= -1e-6);
        prop_assert!(max_log_relative_belief(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn engines_keep_observed_components(seed in 0u64..10_000, q in 2usize..5, mask in 0u32..16) {
        let n = 80;
        let reference = random_table(n, q, seed);
        let part = partition(q, mask);
        let target: Vec<f64> = (0..q).map(|j| 0.1 * j as f64 + 0.05).collect();
        let req = ImputationRequest { reference: &reference, n, q, target: target.clone(), part: part.clone(), m: 4, seed };
        let cfg = ForestImputeConfig { trees_per_fit: 5, max_sweeps: 2, ..Default::default() };
        for out in [impute_linear_bayes(&req).unwrap(), impute_forest(&req, &cfg).unwrap()] {
            prop_assert_eq!(out.len(), 4);
            for v in &out {
                for &j in &part.indices_a {
                    prop_assert_eq!(v[j], target[j]);
                }
                prop_assert!(v.iter().all(|x| x.is_finite()));
            }
        }
        // same seed, same draws
        prop_assert_eq!(impute_linear_bayes(&req).unwrap(), impute_linear_bayes(&req).unwrap());
    }

    #[test]
    fn window_sets_contain_t(t_len in 1usize..60, k in 1usize..8, t in 1usize..60) {
        prop_assume!(k <= t_len && t <= t_len);
        let ws = window_set(t, k, t_len);
        let brute = (1..=t_len + 1 - k).filter(|&l| l <= t && t < l + k).count();
        prop_assert_eq!(ws.len(), brute);
        prop_assert!(ws.iter().all(|&(a, b)| a <= t && t <= b && b - a + 1 == k && b <= t_len));
    }

    #[test]
    fn tail_fraction_is_on_the_reference_lattice(refs in prop::collection::vec(0.0f64..3.0, 1..50), obs in 0.0f64..3.0) {
        let p = tail_fraction(&refs, obs);
        let scaled = p * refs.len() as f64;
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((scaled - scaled.round()).abs() < 1e-9);
    }
}
