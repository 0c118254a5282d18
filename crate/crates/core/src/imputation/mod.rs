//! Multiple imputation of a deleted summary block given the retained one.
//!
//! Summary-vector engines ([`linear_bayes`], [`forest`]) learn the relation
//! between blocks from the reference table (the training summaries) and
//! fill in the `B` entries of a single target row. The [`window`] engine
//! works on raw series instead.

pub mod ar1;
pub mod forest;
pub mod linear_bayes;
pub mod spline;
pub mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PartitionSpec, SummaryVector, TrainingSet};

pub use ar1::{ar1_conditional, fit_ar1, Ar1Conditional, Ar1Model};
pub use forest::{impute_forest, ForestImputeConfig};
pub use linear_bayes::impute_linear_bayes;
pub use window::{impute_window, WindowImputer};

/// A target row to complete against a fully observed reference table.
#[derive(Clone, Debug)]
pub struct ImputationRequest<'a> {
    /// Row-major `n x q` reference table.
    pub reference: &'a [f64],
    pub n: usize,
    pub q: usize,
    /// Full-length target row; entries in `part.indices_b` are ignored.
    pub target: Vec<f64>,
    pub part: PartitionSpec,
    pub m: usize,
    pub seed: u64,
}

impl<'a> ImputationRequest<'a> {
    pub fn new(train: &'a TrainingSet, s_obs: &SummaryVector, part: &PartitionSpec, m: usize, seed: u64) -> Result<Self> {
        let req = ImputationRequest {
            reference: train.summary_matrix(),
            n: train.len(),
            q: train.q(),
            target: s_obs.values.clone(),
            part: part.clone(),
            m,
            seed,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("number of imputations must be >= 1"));
        }
        if self.reference.len() != self.n * self.q || self.target.len() != self.q {
            return Err(Error::config("imputation reference/target shape mismatch"));
        }
        self.part.validate(self.q)?;
        if self.part.indices_a.is_empty() {
            return Err(Error::config("observed block must be nonempty"));
        }
        if self.part.indices_a.iter().any(|&j| !self.target[j].is_finite()) {
            return Err(Error::domain("observed summary block contains non-finite values"));
        }
        Ok(())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.reference[i * self.q + j]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.reference[i * self.q..(i + 1) * self.q]
    }
}

/// Engine choice for summary-vector imputation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case")]
pub enum ImputationEngine {
    LinearBayes,
    Forest(ForestImputeConfig),
    /// Series windows (spline mean plus AR(1) noise); only the window scan
    /// uses it.
    Window {
        #[serde(default = "default_patch_pad")]
        patch_pad: usize,
    },
}

fn default_patch_pad() -> usize {
    window::DEFAULT_PATCH_PAD
}

impl ImputationEngine {
    /// `req.m` completed summary vectors.
    pub fn impute(&self, req: &ImputationRequest) -> Result<Vec<Vec<f64>>> {
        match self {
            ImputationEngine::LinearBayes => impute_linear_bayes(req),
            ImputationEngine::Forest(cfg) => impute_forest(req, cfg),
            ImputationEngine::Window { .. } => Err(Error::config("the window engine imputes series windows, not summary blocks; use window-scan")),
        }
    }
}
