use std::fs;
use std::path::Path;

use lfconflict::density::Support;
use lfconflict::experiment::{self, ExperimentConfig};
use lfconflict::io;
use lfconflict::Error;
use tempfile::TempDir;

fn poisson_config(dir: &Path, extra: &str) -> ExperimentConfig {
    let obs = dir.join("obs.csv");
    fs::write(&obs, "0\n0\n0\n0\n5\n").unwrap();
    let text = format!(
        r#"{{
            "model": {{ "kind": "poisson", "n_obs": 5 }},
            "n_train": 2000,
            "seed": 3,
            "forest": {{ "n_trees": 40, "mtry": 2, "min_node_size": 20, "sample_fraction": 0.5, "max_depth": 0 }},
            "partitions": [
                {{ "observed": ["ybar"], "imputed": ["s2"] }},
                {{ "observed": ["s2"], "imputed": ["ybar"] }}
            ],
            "m": 10,
            "m_star": 10,
            "observed": {obs:?},
            "out": {out:?}
            {extra}
        }}"#,
        obs = obs,
        out = dir.join("nested/out"),
    );
    let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn gen_train_creates_directories_and_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = poisson_config(dir.path(), "");
    let t = experiment::cmd_gen_train(&cfg, None).unwrap();
    assert_eq!(t.len(), 2000);
    assert_eq!(t.summary_names, ["ybar", "s2"]);
    let first = fs::read(cfg.train_path()).unwrap();
    experiment::cmd_gen_train(&cfg, None).unwrap();
    assert_eq!(first, fs::read(cfg.train_path()).unwrap());
    assert!(io::sidecar_path(&cfg.train_path()).exists());
    let back = io::read_training_set(&cfg.train_path()).unwrap();
    assert_eq!(back, t);
}

#[test]
fn diagnose_writes_reports_for_both_partitions() {
    let dir = TempDir::new().unwrap();
    let cfg = poisson_config(dir.path(), "");
    let reports = experiment::cmd_diagnose(&cfg, None).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].observed_names, ["ybar"]);
    assert_eq!(reports[1].observed_names, ["s2"]);
    for r in &reports {
        assert!(r.r_obs.is_finite());
        assert!((0.0..=1.0).contains(&r.p_tilde));
        assert_eq!(r.r_ref.len(), 10);
    }
    let out = &cfg.out;
    for stem in ["diagnose_eta_given_ybar", "diagnose_eta_given_s2"] {
        let dens = io::read_densities(&out.join(format!("{stem}_densities.csv")), Support::new(0.0, f64::INFINITY)).unwrap();
        let names: Vec<&str> = dens.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["full", "subset", "refit"]);
        assert!(out.join(format!("{stem}.json")).exists());
        let refs = fs::read_to_string(out.join(format!("{stem}_reference.csv"))).unwrap();
        assert_eq!(refs.lines().count(), 11);
    }
}

#[test]
fn diagnose_is_reproducible_across_thread_counts() {
    let run = |threads: usize| {
        let dir = TempDir::new().unwrap();
        let cfg = poisson_config(dir.path(), "");
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let reports = pool.install(|| experiment::cmd_diagnose(&cfg, None)).unwrap();
        reports.iter().map(|r| (r.r_obs, r.p_tilde, r.r_ref.clone())).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn unknown_partition_names_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let mut cfg = poisson_config(dir.path(), "");
    cfg.partitions[0].imputed = vec!["variance".into()];
    let err = experiment::cmd_diagnose(&cfg, None).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn abc_writes_accepted_sample() {
    let dir = TempDir::new().unwrap();
    let cfg = poisson_config(dir.path(), r#", "abc": { "n": 5000, "k": 50, "summaries": ["ybar"] }"#);
    let out = experiment::cmd_abc(&cfg, None).unwrap();
    assert_eq!(out[0].k, 50);
    assert_eq!(out[0].summaries, ["ybar"]);
    let rows = fs::read_to_string(cfg.out.join("abc_accepted.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51);
    io::read_density(&cfg.out.join("abc_density_eta.csv"), Support::new(0.0, f64::INFINITY)).unwrap();
}

#[test]
fn missing_observed_file_reports_its_path() {
    let dir = TempDir::new().unwrap();
    let cfg = poisson_config(dir.path(), "");
    let missing = dir.path().join("nope.csv");
    let err = experiment::cmd_diagnose(&cfg, Some(&missing)).unwrap_err();
    assert!(err.to_string().contains("nope.csv"), "{err}");
}

fn window_config(dir: &Path, series: &[f64]) -> ExperimentConfig {
    let obs = dir.join("series.csv");
    fs::write(&obs, series.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")).unwrap();
    let text = format!(
        r#"{{
            "model": {{ "kind": "ricker", "series": {{ "t_len": {t}, "n0": 1.0, "burn_in": 50 }}, "summary": {{ "kind": "raw-series" }} }},
            "n_train": 400,
            "seed": 5,
            "imputation": {{ "engine": "window" }},
            "m": 5,
            "m_star": 5,
            "window": {{ "regressor": "normal", "feature_map": "log1p" }},
            "observed": {obs:?},
            "out": {out:?}
        }}"#,
        t = series.len(),
        obs = obs,
        out = dir.join("out"),
    );
    serde_json::from_str(&text).unwrap()
}

#[test]
fn window_scan_emits_table_and_flags() {
    let dir = TempDir::new().unwrap();
    let series = experiment::simulate_observed(&window_config(dir.path(), &[0.0; 30]), &[12.0, 0.01, -1.0], 9).unwrap();
    let cfg = window_config(dir.path(), &series);
    let reps = experiment::cmd_window_scan(&cfg, None).unwrap();
    assert_eq!(reps.len(), 3);
    for r in &reps {
        assert_eq!(r.points.len(), 30);
        assert!(r.flagged.iter().all(|t| r.points[t - 1].p_tilde < 0.05));
    }
    let table = fs::read_to_string(cfg.out.join("window_scan_log_r.csv")).unwrap();
    assert_eq!(table.lines().count(), 31);
}

#[test]
fn window_scan_rejects_series_shorter_than_window() {
    let dir = TempDir::new().unwrap();
    let mut cfg = window_config(dir.path(), &[1.0, 2.0, 3.0]);
    cfg.window.k = 4;
    assert!(matches!(experiment::cmd_window_scan(&cfg, None), Err(Error::Config(_))));
}

#[test]
fn window_scan_needs_the_window_engine() {
    let dir = TempDir::new().unwrap();
    let mut cfg = window_config(dir.path(), &[1.0; 20]);
    cfg.imputation = lfconflict::imputation::ImputationEngine::LinearBayes;
    assert!(matches!(experiment::cmd_window_scan(&cfg, None), Err(Error::Config(_))));
}
