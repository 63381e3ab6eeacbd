//! JSON run description shared by the CLI and the C interface.

use crate::asymptotics::{RegimeThresholds, TheoryOptions};
use crate::decision::{CostModel, Instance};
use crate::error::{Error, Result};
use crate::estimators::FitOptions;
use crate::model::{Dataset, ParamFamily, TrueDistribution};
use crate::montecarlo::{ExperimentConfig, TGrid};
use crate::quadrature::QuadratureSpec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub family: FamilySpec,
    pub true_distribution: TruthSpec,
    pub cost_model: CostSpec,
    #[serde(default)]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default)]
    pub bounds: Option<BoundsSpec>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub theory: TheoryOptions,
    #[serde(default)]
    pub regime_thresholds: RegimeThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    GaussianLocation {
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        theta_bounds: Option<BoxSpec>,
    },
    GaussianFullMean {
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        theta_bounds: Option<BoxSpec>,
    },
    FiniteDiscrete {
        support: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthSpec {
    InFamily { theta0: Vec<f64> },
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, cov: Vec<Vec<f64>> },
    Empirical { sample: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSpec {
    Newsvendor {
        h: Vec<f64>,
        b: Vec<f64>,
        #[serde(default)]
        smoothing: f64,
        #[serde(default)]
        omega_half_width: Option<f64>,
    },
    Portfolio {
        gamma: f64,
        dim: usize,
        #[serde(default)]
        omega_half_width: Option<f64>,
    },
}

/// Either `"auto"` or an explicit threshold list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TGridSpec {
    List(Vec<f64>),
    Rule(String),
}

impl Default for TGridSpec {
    fn default() -> Self {
        TGridSpec::Rule("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub t_grid: TGridSpec,
    pub base_seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_n_list() -> Vec<usize> {
    vec![250, 1000, 4000]
}

fn default_replications() -> usize {
    2000
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Error budget subtracted from the lower bound.
    #[serde(default)]
    pub budget_lower: f64,
    /// Error budget added to the upper bound.
    #[serde(default)]
    pub budget_upper: f64,
    #[serde(default)]
    pub generalization: Option<GeneralizationSpec>,
}

/// User-supplied constants of the uniform generalization bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationSpec {
    pub l_c: f64,
    pub rho_c: f64,
    pub b_c: f64,
    pub d_theta: f64,
    pub e_theta: f64,
    pub c_abs: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub starts: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            tol: f.tol,
            max_iter: f.max_iter,
            starts: f.starts,
        }
    }
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{field}: expected a nonempty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn at<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("{field}: {other}")),
    })
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected {CONFIG_SCHEMA_VERSION}, found {}",
                self.schema_version
            )));
        }
        if let Some(e) = &self.experiment {
            self.experiment_config(e)?;
        }
        if let Some(b) = &self.bounds {
            if b.n == Some(0) {
                return Err(Error::Config("bounds.n: must be positive".into()));
            }
            if !(b.budget_lower >= 0.0 && b.budget_upper >= 0.0) {
                return Err(Error::Config("bounds: budgets must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            quadrature: self.quadrature.clone(),
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            starts: self.solver.starts,
        }
    }

    pub fn family(&self) -> Result<ParamFamily> {
        at(
            "family",
            match &self.family {
                FamilySpec::GaussianLocation { cov, theta_bounds } => {
                    ParamFamily::gaussian_location(matrix(cov, "family.cov")?, theta_bounds.clone().map(|b| (b.lower, b.upper)))
                }
                FamilySpec::GaussianFullMean { cov, theta_bounds } => {
                    ParamFamily::gaussian_full_mean(matrix(cov, "family.cov")?, theta_bounds.clone().map(|b| (b.lower, b.upper)))
                }
                FamilySpec::FiniteDiscrete { support } => ParamFamily::finite_discrete(support.clone()),
            },
        )
    }

    pub fn truth(&self, family: &ParamFamily) -> Result<TrueDistribution> {
        let truth = at(
            "true_distribution",
            match &self.true_distribution {
                TruthSpec::InFamily { theta0 } => TrueDistribution::in_family(family.clone(), DVector::from_vec(theta0.clone())),
                TruthSpec::GaussianMixture { weights, means, cov } => TrueDistribution::gaussian_mixture(
                    weights.clone(),
                    means.iter().map(|m| DVector::from_vec(m.clone())).collect(),
                    matrix(cov, "true_distribution.cov")?,
                ),
                TruthSpec::Empirical { sample } => {
                    Dataset::from_rows(sample, 0).and_then(TrueDistribution::empirical)
                }
            },
        )?;
        Ok(truth.with_quadrature(self.quadrature.clone()))
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let (model, hw) = match &self.cost_model {
            CostSpec::Newsvendor {
                h,
                b,
                smoothing,
                omega_half_width,
            } => (CostModel::newsvendor(h.clone(), b.clone(), *smoothing), *omega_half_width),
            CostSpec::Portfolio {
                gamma,
                dim,
                omega_half_width,
            } => (CostModel::portfolio(*gamma, *dim), *omega_half_width),
        };
        let model = at("cost_model", model)?;
        match hw {
            Some(w) => at("cost_model.omega_half_width", model.with_omega_half_width(w)),
            None => Ok(model),
        }
    }

    /// Builds the instance; solver failures keep their own error kind.
    pub fn instance(&self) -> Result<Instance> {
        let family = self.family()?;
        let truth = self.truth(&family)?;
        let model = self.cost_model()?;
        Instance::new(family, truth, model).map_err(|e| match e {
            Error::Invalid(m) => Error::Config(m),
            other => other,
        })
    }

    pub fn experiment_config(&self, e: &ExperimentSpec) -> Result<ExperimentConfig> {
        let t_grid = match &e.t_grid {
            TGridSpec::List(t) => TGrid::Explicit(t.clone()),
            TGridSpec::Rule(r) if r == "auto" => TGrid::Auto,
            TGridSpec::Rule(r) => return Err(Error::Config(format!("experiment.t_grid: unknown rule {r:?}"))),
        };
        let cfg = ExperimentConfig {
            n_list: e.n_list.clone(),
            replications: e.replications,
            t_grid,
            base_seed: e.base_seed,
            fit: self.fit_options(),
            threads: e.threads,
        };
        cfg.validate().map_err(|err| Error::Config(format!("experiment: {err}")))?;
        Ok(cfg)
    }
}
