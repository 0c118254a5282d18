//! Generative-model interface and the data types shared by every stage:
//! priors, parameter draws, datasets, summary vectors, training sets and
//! summary partitions.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Support;
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

/// Marginal prior of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum PriorComponent {
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParam {
    pub name: String,
    #[serde(flatten)]
    pub dist: PriorComponent,
}

/// Independent product prior over named parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub params: Vec<PriorParam>,
}

impl PriorSpec {
    pub fn new(params: Vec<PriorParam>) -> Result<Self> {
        let spec = PriorSpec { params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma(name: &str, shape: f64, rate: f64) -> PriorParam {
        PriorParam {
            name: name.to_string(),
            dist: PriorComponent::Gamma { shape, rate },
        }
    }

    pub fn uniform(name: &str, lo: f64, hi: f64) -> PriorParam {
        PriorParam {
            name: name.to_string(),
            dist: PriorComponent::Uniform { lo, hi },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::config("prior must have at least one parameter"));
        }
        for p in &self.params {
            match p.dist {
                PriorComponent::Gamma { shape, rate } => {
                    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                        return Err(Error::config(format!("gamma prior for {} needs shape > 0 and rate > 0", p.name)));
                    }
                }
                PriorComponent::Uniform { lo, hi } => {
                    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                        return Err(Error::config(format!("uniform prior for {} needs lo < hi", p.name)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn support(&self, i: usize) -> Support {
        match self.params[i].dist {
            PriorComponent::Gamma { .. } => Support::new(0.0, f64::INFINITY),
            PriorComponent::Uniform { lo, hi } => Support::new(lo, hi),
        }
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dim() && values.iter().enumerate().all(|(i, v)| self.support(i).contains(*v))
    }

    pub fn draw(&self, rng: &mut Rng) -> ParameterDraw {
        let values = self
            .params
            .iter()
            .map(|p| match p.dist {
                PriorComponent::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                    .expect("validated gamma prior")
                    .sample(rng),
                PriorComponent::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            })
            .collect();
        ParameterDraw { values }
    }
}

/// One parameter vector, on the scale the prior is declared on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub values: Vec<f64>,
}

/// Draws `n` independent parameter vectors; draw `i` uses its own stream.
pub fn sample_prior(prior: &PriorSpec, n: usize, seed: u64) -> Result<Vec<ParameterDraw>> {
    prior.validate()?;
    if n == 0 {
        return Err(Error::config("sample_prior needs n >= 1"));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| prior.draw(&mut rng::stream(seed, &[tag::PRIOR, i as u64])))
        .collect())
}

/// Raw simulated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dataset {
    Counts(Vec<u64>),
    Diameters(Vec<f64>),
    Series(Vec<f64>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Counts(v) => v.len(),
            Dataset::Diameters(v) | Dataset::Series(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Dataset::Counts(v) => v.iter().map(|c| *c as f64).collect(),
            Dataset::Diameters(v) | Dataset::Series(v) => v.clone(),
        }
    }
}

/// Named summary statistics of one dataset. An invalid vector marks a
/// simulation that must be discarded (e.g. an empty SETAR regime).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub valid: bool,
}

impl SummaryVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        let valid = values.len() == names.len() && values.iter().all(|v| v.is_finite());
        SummaryVector { values, names, valid }
    }

    pub fn invalid(names: Vec<String>) -> Self {
        let values = vec![f64::NAN; names.len()];
        SummaryVector {
            values,
            names,
            valid: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A simulator plus summarizer. Implementations are pure functions of
/// `(theta, rng)` and safe to call from many threads.
pub trait GenerativeModel: Sync {
    fn id(&self) -> &str;

    fn summary_names(&self) -> Vec<String>;

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Dataset>;

    fn summarize(&self, data: &Dataset) -> SummaryVector;
}

/// Paired parameter and summary rows from the joint prior model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub model_id: String,
    pub prior: PriorSpec,
    pub seed: u64,
    pub param_names: Vec<String>,
    pub summary_names: Vec<String>,
    params: Vec<f64>,
    summaries: Vec<f64>,
    n: usize,
    /// Simulations that came back invalid and were replaced by a fresh
    /// parameter draw.
    pub discarded: usize,
}

/// Maximum parameter re-draws for one training row.
pub const MAX_ATTEMPTS: usize = 100;

impl TrainingSet {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        model_id: String,
        prior: PriorSpec,
        seed: u64,
        summary_names: Vec<String>,
        params: Vec<f64>,
        summaries: Vec<f64>,
        discarded: usize,
    ) -> Result<Self> {
        let p = prior.dim();
        let q = summary_names.len();
        if p == 0 || q == 0 || params.len() % p != 0 {
            return Err(Error::config("training set dimensions are inconsistent"));
        }
        let n = params.len() / p;
        if n == 0 || summaries.len() != n * q {
            return Err(Error::config("training set needs at least one row and matching summary rows"));
        }
        if summaries.iter().chain(params.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("training set contains non-finite values"));
        }
        Ok(TrainingSet {
            model_id,
            param_names: prior.names(),
            prior,
            seed,
            summary_names,
            params,
            summaries,
            n,
            discarded,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn p(&self) -> usize {
        self.param_names.len()
    }

    pub fn q(&self) -> usize {
        self.summary_names.len()
    }

    pub fn param_row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.params[i * p..(i + 1) * p]
    }

    pub fn summary_row(&self, i: usize) -> &[f64] {
        let q = self.q();
        &self.summaries[i * q..(i + 1) * q]
    }

    pub fn param_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.param_row(i)[j]).collect()
    }

    /// Row-major `n x q` summary matrix.
    pub fn summary_matrix(&self) -> &[f64] {
        &self.summaries
    }

    pub fn summary_index(&self, name: &str) -> Option<usize> {
        self.summary_names.iter().position(|s| s == name)
    }

    /// Same rows keeping only the listed summary columns, in that order.
    pub fn select_summaries(&self, columns: &[usize]) -> Result<TrainingSet> {
        if columns.is_empty() || columns.iter().any(|&c| c >= self.q()) {
            return Err(Error::config("summary column selection out of range"));
        }
        let summaries = (0..self.n)
            .flat_map(|i| {
                let row = self.summary_row(i);
                columns.iter().map(move |&c| row[c])
            })
            .collect();
        let names = columns.iter().map(|&c| self.summary_names[c].clone()).collect();
        TrainingSet::from_parts(
            self.model_id.clone(),
            self.prior.clone(),
            self.seed,
            names,
            self.params.clone(),
            summaries,
            self.discarded,
        )
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Result<TrainingSet> {
        let n = n.min(self.n);
        TrainingSet::from_parts(
            self.model_id.clone(),
            self.prior.clone(),
            self.seed,
            self.summary_names.clone(),
            self.params[..n * self.p()].to_vec(),
            self.summaries[..n * self.q()].to_vec(),
            self.discarded,
        )
    }
}

/// Simulates `n` valid rows. Invalid simulations trigger a fresh parameter
/// draw, up to [`MAX_ATTEMPTS`] per row; generation aborts when more than
/// half of all simulations fail. Row `i`, attempt `a` always uses the same
/// stream, so the result does not depend on the number of worker threads.
pub fn build_training_set(model: &dyn GenerativeModel, prior: &PriorSpec, n: usize, seed: u64) -> Result<TrainingSet> {
    prior.validate()?;
    if n == 0 {
        return Err(Error::config("training set needs n >= 1"));
    }
    let rows: Vec<Option<(ParameterDraw, Vec<f64>, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = rng::stream(seed, &[tag::SIMULATE, i as u64, attempt as u64]);
                let theta = prior.draw(&mut rng);
                let Ok(data) = model.simulate(&theta.values, &mut rng) else {
                    continue;
                };
                let s = model.summarize(&data);
                if s.valid {
                    return Some((theta, s.values, attempt));
                }
            }
            None
        })
        .collect();

    let failed_rows = rows.iter().filter(|r| r.is_none()).count();
    let discarded: usize = rows.iter().flatten().map(|r| r.2).sum::<usize>() + failed_rows * MAX_ATTEMPTS;
    let attempts = discarded + (n - failed_rows);
    if failed_rows > 0 || discarded * 2 > attempts {
        return Err(Error::numerical(format!(
            "model {}: {discarded} of {attempts} simulations invalid ({failed_rows} rows exhausted {MAX_ATTEMPTS} attempts)",
            model.id()
        )));
    }
    if discarded > 0 {
        log::info!("model {}: replaced {discarded} invalid simulations", model.id());
    }
    let mut params = Vec::with_capacity(n * prior.dim());
    let mut summaries = Vec::with_capacity(n * model.summary_names().len());
    for (theta, s, _) in rows.into_iter().flatten() {
        params.extend(theta.values);
        summaries.extend(s);
    }
    TrainingSet::from_parts(model.id().to_string(), prior.clone(), seed, model.summary_names(), params, summaries, discarded)
}

/// Split of the summary vector into a retained block `A` and a deleted
/// block `B`. Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub indices_a: Vec<usize>,
    pub indices_b: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(indices_a: Vec<usize>, indices_b: Vec<usize>, q: usize) -> Result<Self> {
        let part = PartitionSpec { indices_a, indices_b };
        part.validate(q)?;
        Ok(part)
    }

    pub fn from_names(names: &[String], a: &[&str], b: &[&str]) -> Result<Self> {
        let lookup = |n: &&str| {
            names
                .iter()
                .position(|s| s == n)
                .ok_or_else(|| Error::config(format!("unknown summary name {n:?}; available: {}", names.join(", "))))
        };
        let ia = a.iter().map(lookup).collect::<Result<Vec<_>>>()?;
        let ib = b.iter().map(lookup).collect::<Result<Vec<_>>>()?;
        PartitionSpec::new(ia, ib, names.len())
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if self.indices_a.is_empty() || self.indices_b.is_empty() {
            return Err(Error::config("both partition blocks must be nonempty"));
        }
        let mut seen = vec![false; q];
        for &i in self.indices_a.iter().chain(&self.indices_b) {
            if i >= q {
                return Err(Error::config(format!("partition index {i} out of range for dimension {q}")));
            }
            if seen[i] {
                return Err(Error::config(format!("partition index {i} appears twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::config("partition does not cover every summary component"));
        }
        Ok(())
    }

    /// The partition with the roles of `A` and `B` swapped.
    pub fn swapped(&self) -> Self {
        PartitionSpec {
            indices_a: self.indices_b.clone(),
            indices_b: self.indices_a.clone(),
        }
    }
}

/// Splits `s` into `(S_A, S_B)` in the index order of each block.
pub fn split_summary(s: &SummaryVector, part: &PartitionSpec) -> Result<(SummaryVector, SummaryVector)> {
    part.validate(s.len())?;
    let take = |idx: &[usize]| {
        let names = idx.iter().map(|&i| s.names.get(i).cloned().unwrap_or_default()).collect();
        SummaryVector {
            values: idx.iter().map(|&i| s.values[i]).collect(),
            names,
            valid: s.valid,
        }
    };
    Ok((take(&part.indices_a), take(&part.indices_b)))
}

/// Inverse of [`split_summary`].
pub fn merge_summary(a: &SummaryVector, b: &SummaryVector, part: &PartitionSpec) -> Result<SummaryVector> {
    let q = part.indices_a.len() + part.indices_b.len();
    part.validate(q)?;
    if a.len() != part.indices_a.len() || b.len() != part.indices_b.len() {
        return Err(Error::config("block lengths do not match the partition"));
    }
    let mut values = vec![0.0; q];
    let mut names = vec![String::new(); q];
    for (k, &i) in part.indices_a.iter().enumerate() {
        values[i] = a.values[k];
        names[i] = a.names.get(k).cloned().unwrap_or_default();
    }
    for (k, &i) in part.indices_b.iter().enumerate() {
        values[i] = b.values[k];
        names[i] = b.names.get(k).cloned().unwrap_or_default();
    }
    Ok(SummaryVector {
        values,
        names,
        valid: a.valid && b.valid,
    })
}
