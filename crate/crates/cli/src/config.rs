//! Run configuration: parsed from flags or JSON, echoed into the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stlt_core::{ConstraintKind, OuterParams, SolverKind, SolverParams, SyntheticKind};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintName {
    None,
    Nonneg,
    Hankel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverName {
    Rcg,
    Rtr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthName {
    Gaussian,
    Nonneg,
    Exponential,
}

impl SynthName {
    pub fn kind(self) -> SyntheticKind {
        match self {
            SynthName::Gaussian => SyntheticKind::Gaussian,
            SynthName::Nonneg => SyntheticKind::Nonnegative,
            SynthName::Exponential => SyntheticKind::Exponential,
        }
    }

    /// Generator matching a constraint kind.
    pub fn for_constraint(c: ConstraintName) -> Self {
        match c {
            ConstraintName::None => SynthName::Gaussian,
            ConstraintName::Nonneg => SynthName::Nonneg,
            ConstraintName::Hankel => SynthName::Exponential,
        }
    }
}

/// Seeded synthetic ground truth; `ranks` are the true latent ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SynthName,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Observed entries as a `.tns` file. Mutually exclusive with `synthetic`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Ground truth for recovery metrics when reading from `input`.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintName,
    #[serde(default)]
    pub tau: Option<Vec<usize>>,
    #[serde(default)]
    pub ranks: Vec<usize>,
    /// Total weight, split evenly over the modes. `None` means `K / ||Y_Omega||`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "one")]
    pub cost_c: f64,
    #[serde(default)]
    pub solver: Option<SolverName>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_iters")]
    pub cg_iters: usize,
    #[serde(default = "default_nnls_tol")]
    pub nnls_tol: f64,
    #[serde(default = "default_nnls_iters")]
    pub nnls_iters: usize,
    #[serde(default = "default_inner_rounds")]
    pub inner_rounds: usize,
    /// Wall-clock budget in seconds; a run that hits it is not reproducible.
    #[serde(default)]
    pub time_limit: Option<f64>,
    /// Write measured times to `wall_ms`; otherwise the column is zero so
    /// histories compare byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_constraint() -> ConstraintName {
    ConstraintName::None
}
fn one() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    OuterParams::default().eps
}
fn default_max_iters() -> usize {
    OuterParams::default().max_iter
}
fn default_cg_tol() -> f64 {
    SolverParams::default().cg_tol
}
fn default_cg_iters() -> usize {
    SolverParams::default().cg_max_iter
}
fn default_nnls_tol() -> f64 {
    SolverParams::default().nnls_tol
}
fn default_nnls_iters() -> usize {
    SolverParams::default().nnls_max_iter
}
fn default_inner_rounds() -> usize {
    SolverParams::default().alternation_max_rounds
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    /// Reads a config file. A run manifest is accepted too: its `config`
    /// object is used.
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    pub fn constraint_kind(&self) -> Result<ConstraintKind, CliError> {
        match (self.constraint, &self.tau) {
            (ConstraintName::None, None) => Ok(ConstraintKind::None),
            (ConstraintName::Nonneg, None) => Ok(ConstraintKind::Nonnegative),
            (ConstraintName::Hankel, Some(tau)) => Ok(ConstraintKind::Hankel { tau: tau.clone() }),
            (ConstraintName::Hankel, None) => Err(CliError::Input("--tau is required with --constraint hankel".into())),
            (_, Some(_)) => Err(CliError::Input("--tau only applies to --constraint hankel".into())),
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_iters,
            nnls_tol: self.nnls_tol,
            nnls_max_iter: self.nnls_iters,
            alternation_max_rounds: self.inner_rounds,
            ..SolverParams::default()
        }
    }

    pub fn outer_params(&self) -> OuterParams {
        OuterParams {
            solver: self.solver.map(|s| match s {
                SolverName::Rcg => SolverKind::Rcg,
                SolverName::Rtr => SolverKind::Rtr,
            }),
            eps: self.eps,
            max_iter: self.max_iters,
            seed: self.seed,
            inner: self.solver_params(),
            time_limit: self.time_limit,
            ..OuterParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => return Err(CliError::Input("give either an input file or a synthetic spec, not both".into())),
            (None, None) => return Err(CliError::Input("no data: pass --input FILE.tns or a synthetic spec".into())),
            _ => {}
        }
        if self.truth.is_some() && self.input.is_none() {
            return Err(CliError::Input("--truth only applies with --input".into()));
        }
        if self.ranks.is_empty() {
            return Err(CliError::Input("--rank is required".into()));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(CliError::Input(format!("lambda must be finite and >= 0, got {l}")));
            }
        }
        self.constraint_kind()?;
        self.outer_params().validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(())
    }
}
