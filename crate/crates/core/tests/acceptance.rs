//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! A FAIL line is a measured outcome, not a harness error, so the process
//! still exits 0; panics (broken plumbing) fail the target. Set
//! `ACCEPTANCE_ONLY=1,4,7` to run a subset.

use std::path::PathBuf;
use std::time::Instant;

use lfconflict::abc::{self, Scaling};
use lfconflict::density::{self, DensityEstimate, Grid, GridSpec, Support};
use lfconflict::diagnostics::{
    calibrate_conflict, max_log_relative_belief, renyi_divergence, subset_posterior, window_scan, FeatureMap, MappedRegressor, NormalRegressor,
    SummaryCompletion, WindowScanConfig,
};
use lfconflict::experiment::{self, ExperimentConfig};
use lfconflict::imputation::{ForestImputeConfig, ImputationEngine, WindowImputer};
use lfconflict::model::{build_training_set, PartitionSpec, SummaryVector, TrainingSet};
use lfconflict::qrf::{self, Forest, ForestHyper};
use lfconflict::rng::{self, tag};
use lfconflict::setar::{self, SetarProcess};
use lfconflict::simulators::{self, PoissonModel, RickerConfig, RickerModel, RickerSummary};
use lfconflict::{selftest, stats};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn info(detail: String) {
    println!("     info: {detail}");
}

fn gamma66() -> Gamma {
    Gamma::new(6.0, 6.0).unwrap()
}

fn poisson_obs() -> SummaryVector {
    simulators::poisson_summaries(&[0, 0, 0, 0, 5]).unwrap()
}

fn poisson_train(n: usize, seed: u64) -> TrainingSet {
    build_training_set(&PoissonModel { n_obs: 5 }, &PoissonModel::default_prior(), n, seed).unwrap()
}

fn ks_to(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn analytic_on(grid: &Grid, pdf: impl Fn(f64) -> f64, support: Support) -> DensityEstimate {
    DensityEstimate::normalized(grid.clone(), grid.points().iter().map(|&x| pdf(x)).collect(), support).unwrap()
}

fn sample_kde_on(samples: &[f64], grid: &Grid, support: Support) -> DensityEstimate {
    let pairs = density::weighted_pairs(samples, &vec![1.0; samples.len()]);
    density::kde_on_grid(&pairs, density::silverman_bandwidth(&pairs), grid, support).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    stats::median(&v)
}

fn c1_abc() {
    let t0 = Instant::now();
    let train = poisson_train(100_000, 1);
    let s_obs = poisson_obs();
    let g = gamma66();
    let ks_ybar = ks_to(&abc::rejection_abc(&train, &s_obs, Some(&[0]), 500, Scaling::Mad).unwrap().param_column(0), |x| g.cdf(x));
    let ks_both = ks_to(&abc::rejection_abc(&train, &s_obs, None, 500, Scaling::Mad).unwrap().param_column(0), |x| g.cdf(x));
    let secs = t0.elapsed().as_secs_f64();
    report(
        1,
        "rejection ABC, Poisson",
        ks_ybar < 0.08 && ks_both >= 2.0 * ks_ybar && secs < 60.0,
        format!("KS(ybar)={ks_ybar:.4} (<0.08), KS(ybar,s2)={ks_both:.4} (>= {:.4}), {secs:.1}s (<60s)", 2.0 * ks_ybar),
    );
}

/// Tuned forest for `eta` as the CLI would train it.
fn poisson_forest(train: &TrainingSet, seed: u64) -> Forest {
    let grid = qrf::default_tuning_grid(train.q(), train.len(), 100);
    let mut h = qrf::tune_hyperparameters(train, 0, &grid, 5, rng::derive_seed(seed, &[tag::TUNE, 0])).unwrap();
    h.n_trees = 200;
    qrf::train_forest(train, 0, &h, rng::derive_seed(seed, &[tag::TREE, 0])).unwrap()
}

fn c2_c3_c4() {
    let s_obs = poisson_obs();
    let g = gamma66();
    let support = Support::new(0.0, f64::INFINITY);
    let spec = GridSpec::default();
    let mut tvs = Vec::new();
    let mut asym_ok = 0;
    let mut asym = Vec::new();
    let mut c4 = None;
    for seed in SEEDS {
        let train = poisson_train(10_000, seed);
        let f = poisson_forest(&train, seed);
        let post = qrf::posterior_density(&f, &s_obs.values, &spec).unwrap();
        tvs.push(post.total_variation(&analytic_on(&post.grid, |x| g.pdf(x), support)).unwrap());

        let p_of = |a: usize, b: usize| {
            let part = PartitionSpec::new(vec![a], vec![b], 2).unwrap();
            let src = SummaryCompletion {
                engine: ImputationEngine::LinearBayes,
                train: &train,
                s_obs: &s_obs,
                part: &part,
            };
            calibrate_conflict(&f, &s_obs.values, &src, 100, 100, &spec, rng::derive_seed(seed, &[tag::IMPUTE, a as u64])).unwrap()
        };
        let (given_s2, given_ybar) = (p_of(1, 0), p_of(0, 1));
        if given_s2.p_tilde <= 0.05 && given_ybar.p_tilde >= 0.2 {
            asym_ok += 1;
        }
        asym.push(format!("({:.2},{:.2})", given_s2.p_tilde, given_ybar.p_tilde));
        info(format!(
            "Poisson seed {seed}: given ybar R_obs={:.3} at eta={:.3}; given s2 R_obs={:.3} at eta={:.3}",
            given_ybar.r_obs, given_ybar.r_obs_argmax, given_s2.r_obs, given_s2.r_obs_argmax
        ));

        if c4.is_none() {
            let sub = |a: usize, b: usize| {
                let part = PartitionSpec::new(vec![a], vec![b], 2).unwrap();
                let src = SummaryCompletion {
                    engine: ImputationEngine::LinearBayes,
                    train: &train,
                    s_obs: &s_obs,
                    part: &part,
                };
                subset_posterior(&f, &s_obs.values, &src, 100, &spec, seed).unwrap()
            };
            let sub_ybar = sub(0, 1);
            let tv_ybar = sub_ybar.total_variation(&analytic_on(&sub_ybar.grid, |x| g.pdf(x), support)).unwrap();
            let sub_s2 = sub(1, 0);
            let big = poisson_train(1_000_000, 1000 + seed);
            let acc = abc::rejection_abc(&big, &s_obs, Some(&[1]), 1000, Scaling::Mad).unwrap().param_column(0);
            let tv_s2 = sub_s2.total_variation(&sample_kde_on(&acc, &sub_s2.grid, support)).unwrap();
            c4 = Some((tv_ybar, tv_s2));
        }
    }
    let tv_med = median(tvs.clone());
    report(
        2,
        "QRF posterior vs Gamma(6,6)",
        tv_med < 0.15,
        format!("median TV={tv_med:.4} (<0.15) over {:.4?}", tvs),
    );
    report(
        3,
        "Poisson conflict asymmetry",
        asym_ok >= 4,
        format!("{asym_ok}/5 seeds with p(s2|ybar imputed)<=0.05 and p(ybar|s2 imputed)>=0.2; (p_s2,p_ybar)={}", asym.join(" ")),
    );
    let (tv_ybar, tv_s2) = c4.unwrap();
    report(
        4,
        "subset posterior oracles",
        tv_ybar < 0.2 && tv_s2 < 0.25,
        format!("TV(ybar vs Gamma(6,6))={tv_ybar:.4} (<0.2), TV(s2 vs 1e6-ABC)={tv_s2:.4} (<0.25)"),
    );
}

fn c5_selftest() {
    let res = selftest::run_all(0).unwrap();
    let failed: Vec<&str> = res.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    report(
        5,
        "invariant suites",
        failed.is_empty(),
        format!("{}/{} suites pass{}", res.len() - failed.len(), res.len(), if failed.is_empty() { String::new() } else { format!(", failing {failed:?}") }),
    );
}

fn c6_analytic() {
    let grid = Grid::uniform(-20.0, 20.0, 8001).unwrap();
    let normal = |mu: f64, sd: f64| analytic_on(&grid, |x| stats::normal_pdf(x, mu, sd), Support::REAL);
    let r = max_log_relative_belief(&normal(0.0, 1.0), &normal(0.0, 2.0)).unwrap();
    // closed form for equal variances: alpha (mu1 - mu2)^2 / (2 sigma^2)
    let closed = 2.0 * 1.0 / 2.0;
    let d = renyi_divergence(&normal(0.0, 1.0), &normal(1.0, 1.0), 2.0).unwrap();
    report(
        6,
        "analytic statistics",
        (r - 2f64.ln()).abs() <= 0.01 && (d - closed).abs() <= 0.01,
        format!("R(N(0,1),N(0,2))={r:.5} (log 2={:.5}), Renyi2(N(0,1),N(1,1))={d:.5} (closed form {closed})", 2f64.ln()),
    );
}

fn c7_setar() {
    let p = SetarProcess {
        lower: [20.0, 0.7, 0.0],
        rho: 5.0,
        upper: [5.0, 0.8, -0.1],
        zeta: 3.0,
        threshold: 50.0,
    };
    let truth = p.truth();
    let ok = (0..50u64)
        .filter(|&r| {
            let x = p.simulate(2000, &mut rng::stream(r, &[tag::SIMULATE]));
            let fit = setar::fit_setar(&x, p.threshold).unwrap();
            let (est, se) = (fit.summaries(), fit.standard_errors());
            (0..8).all(|i| (est[i] - truth[i]).abs() <= 3.0 * se[i])
        })
        .count();
    report(7, "SETAR recovery", ok >= 45, format!("{ok}/50 replications within 3 SE on all 8 parameters (>=45)"));
}

/// Growth differs by abundance: `log r` 0.04 below N=0.001, -0.05 above.
fn ricker_conflict_series(seed: u64) -> Vec<f64> {
    let theta = [12.0, 0.04, -2.0];
    simulators::ricker_simulate_switching(&theta, &RickerConfig::default(), 0.001, -0.05, 1000 + seed)
        .unwrap()
        .into_iter()
        .map(|v| v as f64)
        .collect()
}

fn c8_ricker() {
    let hyper = ForestHyper {
        n_trees: 200,
        mtry: 2,
        min_node_size: 100,
        sample_fraction: 0.5,
        max_depth: 0,
    };
    let prior = RickerModel::default_prior();
    let spec = GridSpec::default();
    let (mut hits, mut lb_hits) = (0, 0);
    let mut detail = Vec::new();
    for seed in SEEDS {
        let x = ricker_conflict_series(seed);
        let c = setar::select_threshold(&x).unwrap();
        let model = RickerModel {
            config: RickerConfig::default(),
            summary: RickerSummary::Setar { threshold: c },
        };
        let s_obs = setar::ricker_setar_summaries(&x, c);
        let train = match build_training_set(&model, &prior, 10_000, seed) {
            Ok(t) => t,
            Err(e) => {
                detail.push(format!("seed {seed}: training set failed ({e})"));
                continue;
            }
        };
        let f = qrf::train_forest(&train, 1, &hyper, rng::derive_seed(seed, &[tag::TREE, 1])).unwrap();
        let part = PartitionSpec::new(vec![0, 1, 2, 3], vec![4, 5, 6, 7], 8).unwrap();
        let run = |engine: ImputationEngine| {
            let src = SummaryCompletion {
                engine,
                train: &train,
                s_obs: &s_obs,
                part: &part,
            };
            calibrate_conflict(&f, &s_obs.values, &src, 100, 100, &spec, rng::derive_seed(seed, &[tag::IMPUTE, 1, 0])).unwrap()
        };
        let forest = run(ImputationEngine::Forest(ForestImputeConfig::default()));
        let lb = run(ImputationEngine::LinearBayes);
        hits += (forest.p_tilde <= 0.1) as usize;
        lb_hits += (lb.p_tilde <= 0.1) as usize;
        detail.push(format!("seed {seed}: p={:.2} (discarded {})", forest.p_tilde, train.discarded));
        info(format!("Ricker seed {seed}: linear-bayes engine p={:.2}", lb.p_tilde));
    }
    info(format!("Ricker with the linear-bayes engine: {lb_hits}/5 seeds at p<=0.1"));
    report(
        8,
        "Ricker regime conflict (forest imputation)",
        hits >= 3,
        format!("{hits}/5 seeds with p(log_r | S_U imputed from S_L)<=0.1 (>=3); {}", detail.join("; ")),
    );
}

fn c9_stereo() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut cfg = ExperimentConfig::load(&root.join("configs/stereo.json")).unwrap();
    let out = tempfile::tempdir().unwrap();
    cfg.out = out.path().to_path_buf();
    cfg.observed = Some(root.join("data/stereo_obs.csv"));
    let t0 = Instant::now();
    let train = experiment::cmd_gen_train(&cfg, None).unwrap();
    experiment::cmd_train(&cfg, None).unwrap();
    let reports = experiment::cmd_diagnose(&cfg, None).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let suites_ok = selftest::run_all(0).unwrap().iter().all(|r| r.passed);
    let finite = reports.iter().all(|r| r.r_obs.is_finite() && (0.0..=1.0).contains(&r.p_tilde));
    let ps: Vec<String> = reports.iter().map(|r| format!("{}|{}={:.2}", r.parameter, r.observed_names.join("+"), r.p_tilde)).collect();
    report(
        9,
        "stereo pipeline",
        secs < 900.0 && suites_ok && finite && reports.len() == 6,
        format!("n={} in {secs:.0}s (<900s), {} reports, suites pass={suites_ok}; {}", train.len(), reports.len(), ps.join(" ")),
    );
}

fn c10_window() {
    let t_len = 250;
    let cfg = RickerConfig { t_len, ..Default::default() };
    let prior = RickerModel::default_prior();
    let model = RickerModel {
        config: cfg,
        summary: RickerSummary::RawSeries,
    };
    let train = build_training_set(&model, &prior, 10_000, 7).unwrap();
    let map = FeatureMap::Log1p;
    let rows: Vec<f64> = (0..train.len()).flat_map(|i| map.apply(train.summary_row(i))).collect();
    let params: Vec<f64> = (0..train.len()).flat_map(|i| train.param_row(i).to_vec()).collect();
    let mapped = TrainingSet::from_parts(train.model_id.clone(), prior.clone(), train.seed, train.summary_names.clone(), params, rows, 0).unwrap();
    let inner = NormalRegressor::fit(&mapped, 1, 1e-6).unwrap();
    let reg = MappedRegressor { inner: &inner, map };
    let scan = WindowScanConfig::default();
    let (mut hits, mut clean_flags) = (0, 0);
    let mut detail = Vec::new();
    for seed in SEEDS {
        let theta = prior.draw(&mut rng::stream(seed, &[tag::OBSERVED])).values;
        let clean: Vec<f64> = simulators::ricker_simulate(&theta, &cfg, seed).unwrap().into_iter().map(|v| v as f64).collect();
        let mut bad = clean.clone();
        let hit = simulators::inject_spike(&mut bad, 120, 10, 3.0).unwrap();
        let (lo, hi) = (hit[0] - scan.k, hit[hit.len() - 1] + scan.k);
        let with = window_scan(&reg, &WindowImputer::new(&bad, 8).unwrap(), &scan, seed).unwrap();
        let without = window_scan(&reg, &WindowImputer::new(&clean, 8).unwrap(), &scan, seed).unwrap();
        let near = with.flagged.iter().filter(|&&t| (lo..=hi).contains(&t)).count();
        hits += (near > 0) as usize;
        clean_flags += without.flagged.len();
        detail.push(format!("seed {seed}: {near} near anomaly, clean {}/{t_len}", without.flagged.len()));
    }
    let rate = clean_flags as f64 / (SEEDS.len() * t_len) as f64;
    report(
        10,
        "window scan",
        hits >= 3 && rate <= 0.05,
        format!("anomaly found in {hits}/5 seeds (>=3), clean flag rate {rate:.4} (<=0.05); {}", detail.join("; ")),
    );
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |ids: &[u32]| only.as_ref().is_none_or(|o| ids.iter().any(|i| o.contains(i)));
    let t0 = Instant::now();
    if want(&[1]) {
        c1_abc();
    }
    if want(&[2, 3, 4]) {
        c2_c3_c4();
    }
    if want(&[5]) {
        c5_selftest();
    }
    if want(&[6]) {
        c6_analytic();
    }
    if want(&[7]) {
        c7_setar();
    }
    if want(&[8]) {
        c8_ricker();
    }
    if want(&[9]) {
        c9_stereo();
    }
    if want(&[10]) {
        c10_window();
    }
    println!("acceptance finished in {:.0}s", t0.elapsed().as_secs_f64());
}
