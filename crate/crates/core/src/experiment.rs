//! Config-driven pipelines behind the command-line subcommands.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::abc::{self, Scaling};
use crate::density::{GridSpec, Support};
use crate::diagnostics::{
    self, ConflictReport, FeatureMap, MappedRegressor, NormalRegressor, PosteriorRegressor, SummaryCompletion, WindowScanConfig, WindowScanReport,
};
use crate::error::{Error, Result};
use crate::imputation::{ImputationEngine, WindowImputer};
use crate::io;
use crate::model::{build_training_set, GenerativeModel, PartitionSpec, PriorSpec, SummaryVector, TrainingSet};
use crate::qrf::{self, Forest, ForestHyper, TuningReport};
use crate::rng::{self, tag};
use crate::setar;
use crate::simulators::{self, PoissonModel, RickerConfig, RickerModel, RickerSummary, StereoModel};

/// Which simulator, and how Ricker series are summarized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Poisson {
        n_obs: usize,
    },
    Stereo,
    Ricker {
        #[serde(default)]
        series: RickerConfig,
        summary: RickerSummaryConfig,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RickerSummaryConfig {
    /// SETAR estimates; without a threshold, it is selected on the observed
    /// series.
    Setar {
        #[serde(default)]
        threshold: Option<f64>,
    },
    RawSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub observed: Vec<String>,
    pub imputed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub folds: usize,
    /// Trees per forest during cross-validation.
    pub n_trees: usize,
    /// Explicit candidates; the standard grid when empty.
    pub grid: Vec<ForestHyper>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            folds: 5,
            n_trees: 100,
            grid: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub scaling: Scaling,
    /// Summaries used in the distance; all when empty.
    #[serde(default)]
    pub summaries: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    #[default]
    Forest,
    Normal,
}

/// Window-scan settings; `m`, `m_star` and the grid come from the
/// top-level config, the patch padding from the window engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub k: usize,
    pub flag_level: f64,
    pub regressor: RegressorKind,
    pub feature_map: FeatureMap,
}

impl Default for WindowConfig {
    fn default() -> Self {
        let scan = WindowScanConfig::default();
        WindowConfig {
            k: scan.k,
            flag_level: scan.flag_level,
            regressor: RegressorKind::Forest,
            feature_map: FeatureMap::Identity,
        }
    }
}

impl ExperimentConfig {
    pub fn window_scan_config(&self) -> WindowScanConfig {
        WindowScanConfig {
            k: self.window.k,
            m: self.m,
            m_star: self.m_star,
            grid: self.grid,
            flag_level: self.window.flag_level,
        }
    }
}

fn default_m() -> usize {
    100
}

/// One experiment, read from a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Overrides the model's default prior.
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    pub n_train: usize,
    #[serde(default)]
    pub seed: u64,
    /// Parameter names to analyse; all when empty.
    #[serde(default)]
    pub targets: Vec<String>,
    /// Fixed forest hyperparameters. When absent, a tuning result in the
    /// output directory is used if present, else defaults.
    #[serde(default)]
    pub forest: Option<ForestHyper>,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub partitions: Vec<PartitionConfig>,
    #[serde(default = "default_engine")]
    pub imputation: ImputationEngine,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_m")]
    pub m_star: usize,
    #[serde(default)]
    pub grid: GridSpec,
    /// Observed data file.
    #[serde(default)]
    pub observed: Option<PathBuf>,
    #[serde(default)]
    pub abc: Option<AbcConfig>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_engine() -> ImputationEngine {
    ImputationEngine::LinearBayes
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = io::read_json(path).map_err(|e| match e {
            Error::Json { path, source } => Error::config(format!("{}: {source}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::config("n_train must be >= 1"));
        }
        if self.m == 0 || self.m_star == 0 {
            return Err(Error::config("m and m_star must be >= 1"));
        }
        if let ModelConfig::Ricker { series, .. } = &self.model {
            series.validate()?;
        }
        let prior = self.prior();
        prior.validate()?;
        for t in &self.targets {
            if prior.index_of(t).is_none() {
                return Err(Error::config(format!("unknown target parameter {t:?}")));
            }
        }
        Ok(())
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior.clone().unwrap_or_else(|| match self.model {
            ModelConfig::Poisson { .. } => PoissonModel::default_prior(),
            ModelConfig::Stereo => StereoModel::default_prior(),
            ModelConfig::Ricker { .. } => RickerModel::default_prior(),
        })
    }

    pub fn target_indices(&self) -> Result<Vec<usize>> {
        let prior = self.prior();
        if self.targets.is_empty() {
            return Ok((0..prior.dim()).collect());
        }
        self.targets
            .iter()
            .map(|t| prior.index_of(t).ok_or_else(|| Error::config(format!("unknown target parameter {t:?}"))))
            .collect()
    }

    pub fn train_path(&self) -> PathBuf {
        self.out.join("train.csv")
    }

    fn tuning_path(&self, param: &str) -> PathBuf {
        self.out.join(format!("tuning_{param}.json"))
    }

    fn forest_path(&self, param: &str) -> PathBuf {
        self.out.join(format!("forest_{param}.json"))
    }

    fn observed_path(&self, override_path: Option<&Path>) -> Result<PathBuf> {
        override_path
            .map(Path::to_path_buf)
            .or_else(|| self.observed.clone())
            .ok_or_else(|| Error::config("no observed data: set \"observed\" in the config or pass --observed"))
    }
}

/// The generative model, resolving a data-dependent SETAR threshold from the
/// observed series when needed.
pub fn resolve_model(cfg: &ExperimentConfig, observed: Option<&[f64]>) -> Result<Box<dyn GenerativeModel>> {
    Ok(match &cfg.model {
        ModelConfig::Poisson { n_obs } => {
            if *n_obs == 0 {
                return Err(Error::config("n_obs must be >= 1"));
            }
            Box::new(PoissonModel { n_obs: *n_obs })
        }
        ModelConfig::Stereo => Box::new(StereoModel),
        ModelConfig::Ricker { series, summary } => {
            let summary = match summary {
                RickerSummaryConfig::RawSeries => RickerSummary::RawSeries,
                RickerSummaryConfig::Setar { threshold: Some(c) } => RickerSummary::Setar { threshold: *c },
                RickerSummaryConfig::Setar { threshold: None } => {
                    let x = observed.ok_or_else(|| Error::config("SETAR threshold selection needs the observed series"))?;
                    let c = setar::select_threshold(x)?;
                    info!("selected SETAR threshold {c} on the observed series");
                    RickerSummary::Setar { threshold: c }
                }
            };
            Box::new(RickerModel {
                config: series.clone(),
                summary,
            })
        }
    })
}

/// Observed summary vector for the configured model.
pub fn observed_summaries(model: &dyn GenerativeModel, cfg: &ExperimentConfig, data: &[f64]) -> Result<SummaryVector> {
    let dataset = match &cfg.model {
        ModelConfig::Poisson { .. } | ModelConfig::Ricker { .. } => {
            if data.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                return Err(Error::config("observed counts must be nonnegative integers"));
            }
            crate::model::Dataset::Counts(data.iter().map(|v| *v as u64).collect())
        }
        ModelConfig::Stereo => crate::model::Dataset::Diameters(data.to_vec()),
    };
    if let ModelConfig::Ricker { series, .. } = &cfg.model {
        if data.len() != series.t_len {
            return Err(Error::config(format!("observed series has length {}, config expects {}", data.len(), series.t_len)));
        }
    }
    let s = model.summarize(&dataset);
    if !s.valid {
        return Err(Error::numerical("summaries of the observed data are not finite"));
    }
    Ok(s)
}

fn load_observed(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<Option<Vec<f64>>> {
    match cfg.observed_path(observed) {
        Ok(p) => Ok(Some(io::read_observed(&p)?)),
        Err(e) if matches!(cfg.model, ModelConfig::Ricker { summary: RickerSummaryConfig::Setar { threshold: None }, .. }) => Err(e),
        Err(_) => Ok(None),
    }
}

/// Simulates and writes the training set.
pub fn cmd_gen_train(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<TrainingSet> {
    let data = load_observed(cfg, observed)?;
    let model = resolve_model(cfg, data.as_deref())?;
    let train = build_training_set(model.as_ref(), &cfg.prior(), cfg.n_train, cfg.seed)?;
    io::write_training_set(&cfg.train_path(), &train)?;
    info!("wrote {} training rows to {}", train.len(), cfg.train_path().display());
    Ok(train)
}

/// Reads the training set from the output directory, generating it first if
/// it is missing or was made with a different seed or size.
pub fn load_or_generate(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<TrainingSet> {
    let path = cfg.train_path();
    if path.exists() {
        let t = io::read_training_set(&path)?;
        if t.seed == cfg.seed && t.len() == cfg.n_train {
            return Ok(t);
        }
    }
    cmd_gen_train(cfg, observed)
}

pub fn cmd_tune(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<Vec<TuningReport>> {
    let train = load_or_generate(cfg, observed)?;
    let mut reports = Vec::new();
    for target in cfg.target_indices()? {
        let grid = if cfg.tuning.grid.is_empty() {
            qrf::default_tuning_grid(train.q(), train.len(), cfg.tuning.n_trees)
        } else {
            cfg.tuning.grid.clone()
        };
        let seed = rng::derive_seed(cfg.seed, &[tag::TUNE, target as u64]);
        let rep = qrf::tune_hyperparameters_report(&train, target, &grid, cfg.tuning.folds, seed)?;
        let name = &train.param_names[target];
        info!("tuned {name}: {:?}", rep.best);
        io::write_json(&cfg.tuning_path(name), &rep)?;
        reports.push(rep);
    }
    Ok(reports)
}

/// Hyperparameters for a target: config, then a stored tuning result with
/// its tree count raised to the default, then defaults.
pub fn hyper_for(cfg: &ExperimentConfig, train: &TrainingSet, target: usize) -> Result<ForestHyper> {
    if let Some(h) = cfg.forest {
        return Ok(h);
    }
    let path = cfg.tuning_path(&train.param_names[target]);
    if path.exists() {
        let rep: TuningReport = io::read_json(&path)?;
        let mut h = rep.best;
        h.n_trees = h.n_trees.max(ForestHyper::for_dim(train.q()).n_trees);
        return Ok(h);
    }
    Ok(ForestHyper::for_dim(train.q()))
}

fn forest_seed(cfg: &ExperimentConfig, target: usize) -> u64 {
    rng::derive_seed(cfg.seed, &[tag::TREE, target as u64])
}

pub fn cmd_train(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<Vec<Forest>> {
    let train = load_or_generate(cfg, observed)?;
    cfg.target_indices()?
        .into_iter()
        .map(|target| {
            let h = hyper_for(cfg, &train, target)?;
            let f = qrf::train_forest(&train, target, &h, forest_seed(cfg, target))?;
            io::write_forest(&cfg.forest_path(&train.param_names[target]), &f)?;
            Ok(f)
        })
        .collect()
}

fn load_or_train(cfg: &ExperimentConfig, train: &TrainingSet, target: usize) -> Result<Forest> {
    let path = cfg.forest_path(&train.param_names[target]);
    if path.exists() {
        let f = io::read_forest(&path)?;
        if f.n_train() == train.len() && f.n_features == train.q() {
            return Ok(f);
        }
    }
    let h = hyper_for(cfg, train, target)?;
    let f = qrf::train_forest(train, target, &h, forest_seed(cfg, target))?;
    io::write_forest(&path, &f)?;
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcOutput {
    pub parameter: String,
    pub summaries: Vec<String>,
    pub k: usize,
    pub n: usize,
    pub max_distance: f64,
}

/// Rejection ABC on a dedicated prior sample of size `abc.n`.
pub fn cmd_abc(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<Vec<AbcOutput>> {
    let acfg = cfg.abc.as_ref().ok_or_else(|| Error::config("config has no \"abc\" section"))?;
    let data = io::read_observed(&cfg.observed_path(observed)?)?;
    let model = resolve_model(cfg, Some(&data))?;
    let s_obs = observed_summaries(model.as_ref(), cfg, &data)?;
    let seed = rng::derive_seed(cfg.seed, &[tag::REFERENCE, 1]);
    let train = build_training_set(model.as_ref(), &cfg.prior(), acfg.n, seed)?;
    let cols = if acfg.summaries.is_empty() {
        None
    } else {
        Some(
            acfg.summaries
                .iter()
                .map(|s| train.summary_index(s).ok_or_else(|| Error::config(format!("unknown summary {s:?}"))))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let res = abc::rejection_abc(&train, &s_obs, cols.as_deref(), acfg.k, acfg.scaling)?;
    let used: Vec<String> = res.columns.iter().map(|&j| train.summary_names[j].clone()).collect();
    let header: Vec<&str> = train.param_names.iter().map(|s| s.as_str()).chain(["distance"]).collect();
    io::write_table(
        &cfg.out.join("abc_accepted.csv"),
        &header,
        res.accepted
            .iter()
            .zip(&res.distances)
            .map(|(d, dist)| d.values.iter().chain([dist]).map(|v| v.to_string()).collect()),
    )?;
    let mut out = Vec::new();
    for target in cfg.target_indices()? {
        let name = &train.param_names[target];
        let dens = abc::kde_from_samples(&res.param_column(target), &cfg.grid, train.prior.support(target))?;
        io::write_density(&cfg.out.join(format!("abc_density_{name}.csv")), &dens)?;
        out.push(AbcOutput {
            parameter: name.clone(),
            summaries: used.clone(),
            k: acfg.k,
            n: acfg.n,
            max_distance: *res.distances.last().unwrap_or(&0.0),
        });
    }
    io::write_json(&cfg.out.join("abc.json"), &out)?;
    Ok(out)
}

fn partition_label(names: &[String]) -> String {
    names.join("+")
}

/// Conflict reports for every target and partition. Writes, per pair, the
/// full, subset and refit posteriors on one grid, the report JSON and the
/// reference statistics.
pub fn cmd_diagnose(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<Vec<ConflictReport>> {
    if cfg.partitions.is_empty() {
        return Err(Error::config("config lists no partitions"));
    }
    let data = io::read_observed(&cfg.observed_path(observed)?)?;
    let model = resolve_model(cfg, Some(&data))?;
    let s_obs = observed_summaries(model.as_ref(), cfg, &data)?;
    let train = load_or_generate(cfg, observed)?;
    if train.summary_names != s_obs.names {
        return Err(Error::config("training set summaries differ from the configured model's"));
    }
    let parts = cfg
        .partitions
        .iter()
        .map(|p| {
            let a: Vec<&str> = p.observed.iter().map(|s| s.as_str()).collect();
            let b: Vec<&str> = p.imputed.iter().map(|s| s.as_str()).collect();
            PartitionSpec::from_names(&train.summary_names, &a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for target in cfg.target_indices()? {
        let name = train.param_names[target].clone();
        let forest = load_or_train(cfg, &train, target)?;
        for (pi, (part, pc)) in parts.iter().zip(&cfg.partitions).enumerate() {
            let src = SummaryCompletion {
                engine: cfg.imputation.clone(),
                train: &train,
                s_obs: &s_obs,
                part,
            };
            let seed = rng::derive_seed(cfg.seed, &[tag::IMPUTE, target as u64, pi as u64]);
            let mut rep = diagnostics::calibrate_conflict(&forest, &s_obs.values, &src, cfg.m, cfg.m_star, &cfg.grid, seed)?;
            rep.parameter = name.clone();
            rep.observed_names = pc.observed.clone();
            rep.imputed_names = pc.imputed.clone();
            let full = rep.full.clone().expect("calibration keeps densities");
            let subset = rep.subset.clone().expect("calibration keeps densities");
            // forest refitted on the observed block alone
            let reduced = train.select_summaries(&part.indices_a)?;
            let mut h = hyper_for(cfg, &train, target)?;
            h.mtry = h.mtry.min(reduced.q());
            let refit = qrf::train_forest(&reduced, target, &h, forest_seed(cfg, target))?;
            let s_a: Vec<f64> = part.indices_a.iter().map(|&j| s_obs.values[j]).collect();
            let refit_d = qrf::posterior_density_on(&refit, &s_a, &full.grid)?;
            let stem = format!("diagnose_{name}_given_{}", partition_label(&pc.observed));
            io::write_densities(&cfg.out.join(format!("{stem}_densities.csv")), &["full", "subset", "refit"], &[&full, &subset, &refit_d])?;
            io::write_table(
                &cfg.out.join(format!("{stem}_reference.csv")),
                &["replicate", "r_ref", "r_obs"],
                rep.r_ref.iter().enumerate().map(|(i, r)| vec![(i + 1).to_string(), r.to_string(), rep.r_obs.to_string()]),
            )?;
            io::write_json(&cfg.out.join(format!("{stem}.json")), &rep)?;
            info!("{name} given {}: R_obs = {:.4}, p = {:.3}", partition_label(&pc.observed), rep.r_obs, rep.p_tilde);
            reports.push(rep);
        }
    }
    Ok(reports)
}

/// Trains the series regressor for one target on a raw-series training set.
pub fn window_regressor(cfg: &ExperimentConfig, train: &TrainingSet, target: usize) -> Result<Box<dyn PosteriorRegressor>> {
    let mapped = match cfg.window.feature_map {
        FeatureMap::Identity => train.clone(),
        map => {
            let rows: Vec<f64> = (0..train.len()).flat_map(|i| map.apply(train.summary_row(i))).collect();
            TrainingSet::from_parts(
                train.model_id.clone(),
                train.prior.clone(),
                train.seed,
                train.summary_names.clone(),
                (0..train.len()).flat_map(|i| train.param_row(i).to_vec()).collect(),
                rows,
                train.discarded,
            )?
        }
    };
    Ok(match cfg.window.regressor {
        RegressorKind::Forest => {
            let h = hyper_for(cfg, &mapped, target)?;
            Box::new(qrf::train_forest(&mapped, target, &h, forest_seed(cfg, target))?)
        }
        RegressorKind::Normal => Box::new(NormalRegressor::fit(&mapped, target, 1e-6)?),
    })
}

/// Window scan of the observed series for every target parameter.
pub fn cmd_window_scan(cfg: &ExperimentConfig, observed: Option<&Path>) -> Result<Vec<WindowScanReport>> {
    if !matches!(cfg.model, ModelConfig::Ricker { summary: RickerSummaryConfig::RawSeries, .. }) {
        return Err(Error::config("window-scan needs a Ricker model with raw-series summaries"));
    }
    let ImputationEngine::Window { patch_pad } = cfg.imputation else {
        return Err(Error::config("window-scan needs \"imputation\": {\"engine\": \"window\"}"));
    };
    let scan = cfg.window_scan_config();
    let data = io::read_observed(&cfg.observed_path(observed)?)?;
    if data.len() < scan.k {
        return Err(Error::config("observed series is shorter than the window width"));
    }
    let model = resolve_model(cfg, Some(&data))?;
    observed_summaries(model.as_ref(), cfg, &data)?;
    let train = load_or_generate(cfg, observed)?;
    let imputer = WindowImputer::new(&data, patch_pad)?;
    let mut out = Vec::new();
    for target in cfg.target_indices()? {
        let name = train.param_names[target].clone();
        let inner = window_regressor(cfg, &train, target)?;
        let reg = MappedRegressor {
            inner: inner.as_ref(),
            map: cfg.window.feature_map,
        };
        let seed = rng::derive_seed(cfg.seed, &[tag::WINDOW, target as u64]);
        let rep = diagnostics::window_scan(&reg, &imputer, &scan, seed)?;
        io::write_table(
            &cfg.out.join(format!("window_scan_{name}.csv")),
            &["t", "value", "r_obs", "p_tilde", "n_windows", "flagged"],
            rep.points.iter().map(|p| {
                vec![
                    p.t.to_string(),
                    data[p.t - 1].to_string(),
                    p.r_obs.to_string(),
                    p.p_tilde.to_string(),
                    p.n_windows.to_string(),
                    (p.p_tilde < rep.flag_level).to_string(),
                ]
            }),
        )?;
        io::write_json(&cfg.out.join(format!("window_scan_{name}.json")), &rep)?;
        info!("{name}: {} flagged times", rep.flagged.len());
        out.push(rep);
    }
    Ok(out)
}

/// Support of the named parameter under the configured prior.
pub fn parameter_support(cfg: &ExperimentConfig, name: &str) -> Result<Support> {
    let prior = cfg.prior();
    let i = prior.index_of(name).ok_or_else(|| Error::config(format!("unknown parameter {name:?}")))?;
    Ok(prior.support(i))
}

/// Counts simulated from the configured model at `theta`, for making
/// synthetic observed data.
pub fn simulate_observed(cfg: &ExperimentConfig, theta: &[f64], seed: u64) -> Result<Vec<f64>> {
    let s = rng::derive_seed(seed, &[tag::OBSERVED]);
    Ok(match &cfg.model {
        ModelConfig::Poisson { n_obs } => simulators::poisson_simulate(theta[0], *n_obs, s)?.into_iter().map(|v| v as f64).collect(),
        ModelConfig::Stereo => simulators::stereo_simulate(theta, s)?,
        ModelConfig::Ricker { series, .. } => simulators::ricker_simulate(theta, series, s)?.into_iter().map(|v| v as f64).collect(),
    })
}
