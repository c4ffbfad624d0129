//! Experiment configuration: JSON schema, validation, and the resolved
//! form echoed into every report.

use serde::{Deserialize, Serialize};
use twistlab_core::{CircleMap, Complex64, FunctionInput, HaarSeries};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "family", rename_all = "snake_case")]
pub enum MapSpec {
    Linear,
    PerturbedDoubling { epsilon: f64 },
}

impl MapSpec {
    pub fn build(&self) -> Result<CircleMap, CliError> {
        match self {
            MapSpec::Linear => Ok(CircleMap::linear()),
            MapSpec::PerturbedDoubling { epsilon } => CircleMap::perturbed_doubling(*epsilon)
                .map_err(|e| CliError::Validation(format!("map: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaarCoeffSpec {
    pub level: usize,
    pub index: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    /// Finite trigonometric polynomial in `cos(2πjx)`, `sin(2πjx)`.
    Fourier {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    /// `x ↦ inf_m |x − m|`.
    TakagiTent,
    /// `x ↦ −cos(πx)/a`.
    WeierstrassRhs { a: f64 },
    /// Truncated lacunary cosine series (regularity test data).
    Weierstrass { a: f64, terms: usize },
    /// Explicit Haar coefficients.
    Haar {
        depth: usize,
        #[serde(default)]
        c0: f64,
        coeffs: Vec<HaarCoeffSpec>,
    },
}

impl DataSpec {
    pub fn build(&self) -> Result<FunctionInput, CliError> {
        match self {
            DataSpec::Fourier { constant, cos, sin } => Ok(FunctionInput::Fourier {
                constant: *constant,
                cos: cos.clone(),
                sin: sin.clone(),
            }),
            DataSpec::TakagiTent => Ok(FunctionInput::TakagiTent),
            DataSpec::WeierstrassRhs { a } => {
                if !(0.0 < *a && *a < 1.0) {
                    return Err(CliError::Validation(format!(
                        "weierstrass_rhs needs 0 < a < 1, got {a}"
                    )));
                }
                Ok(FunctionInput::WeierstrassRhs { a: *a })
            }
            DataSpec::Weierstrass { a, terms } => {
                if !(0.0 < *a && *a < 1.0) {
                    return Err(CliError::Validation(format!(
                        "weierstrass needs 0 < a < 1, got {a}"
                    )));
                }
                let (a, terms) = (*a, *terms);
                Ok(FunctionInput::pointwise(move |x| {
                    twistlab_core::haar::weierstrass_series(a, terms, x)
                }))
            }
            DataSpec::Haar { depth, c0, coeffs } => {
                let mut series = HaarSeries::zero(*depth);
                series.set_c0(Complex64::new(*c0, 0.0));
                for c in coeffs {
                    if c.level >= *depth || c.index >= (1usize << c.level) {
                        return Err(CliError::Validation(format!(
                            "haar coefficient ({}, {}) outside depth {depth}",
                            c.level, c.index
                        )));
                    }
                    *series.coeff_mut(c.level, c.index) = Complex64::new(c.re, c.im);
                }
                Ok(FunctionInput::HaarCoeffs(series))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum BetaSpec {
    Real(f64),
    Complex { re: f64, im: f64 },
}

impl BetaSpec {
    pub fn value(&self) -> Complex64 {
        match self {
            BetaSpec::Real(x) => Complex64::new(*x, 0.0),
            BetaSpec::Complex { re, im } => Complex64::new(*re, *im),
        }
    }
}

fn default_depth() -> usize {
    17
}
fn default_samples() -> u64 {
    100_000
}
fn default_seed() -> u64 {
    42
}
fn default_bins() -> usize {
    64
}
fn default_tol() -> f64 {
    1e-9
}
fn default_estimator_level() -> usize {
    12
}
fn default_kmax() -> usize {
    40
}
fn default_neumann() -> usize {
    60
}
fn default_method() -> String {
    "series".to_string()
}
fn default_s() -> f64 {
    0.39
}
fn default_flavor() -> String {
    "inf_inf".to_string()
}
fn default_observable() -> String {
    "direct".to_string()
}
fn default_pressure_step() -> f64 {
    1e-3
}
fn default_trace_samples() -> u64 {
    4
}

/// One experiment. Unknown keys are rejected; every field has a default
/// that is written back into the emitted report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    #[serde(default)]
    pub v: Option<DataSpec>,
    #[serde(default)]
    pub beta: Option<BetaSpec>,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_estimator_level")]
    pub estimator_level: usize,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_neumann")]
    pub neumann_terms: usize,
    /// Besov smoothness parameter for `analyze`/`fracderiv` norms.
    #[serde(default = "default_s")]
    pub s: f64,
    /// `inf_inf` or `one_one`.
    #[serde(default = "default_flavor")]
    pub flavor: String,
    /// `variance` observable: `direct` (use `v` itself) or `phi_v`.
    #[serde(default = "default_observable")]
    pub observable: String,
    /// Central-difference step for `spectrum`'s pressure check.
    #[serde(default = "default_pressure_step")]
    pub pressure_step: f64,
    /// How many martingale traces `clt` dumps.
    #[serde(default = "default_trace_samples")]
    pub trace_samples: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.depth == 0 || self.depth > twistlab_core::partition::MAX_DEPTH {
            return Err(CliError::Validation(format!(
                "depth must lie in 1..={}, got {}",
                twistlab_core::partition::MAX_DEPTH,
                self.depth
            )));
        }
        if !matches!(self.method.as_str(), "series" | "iteration") {
            return Err(CliError::Validation(format!(
                "method must be \"series\" or \"iteration\", got {:?}",
                self.method
            )));
        }
        if !matches!(self.flavor.as_str(), "inf_inf" | "one_one") {
            return Err(CliError::Validation(format!(
                "flavor must be \"inf_inf\" or \"one_one\", got {:?}",
                self.flavor
            )));
        }
        if !matches!(self.observable.as_str(), "direct" | "phi_v") {
            return Err(CliError::Validation(format!(
                "observable must be \"direct\" or \"phi_v\", got {:?}",
                self.observable
            )));
        }
        if !(self.tol > 0.0) {
            return Err(CliError::Validation("tol must be positive".to_string()));
        }
        Ok(())
    }

    pub fn method(&self) -> twistlab_core::SolveMethod {
        match self.method.as_str() {
            "iteration" => twistlab_core::SolveMethod::Iteration,
            _ => twistlab_core::SolveMethod::Series,
        }
    }

    pub fn flavor(&self) -> twistlab_core::BesovFlavor {
        match self.flavor.as_str() {
            "one_one" => twistlab_core::BesovFlavor::OneOne,
            _ => twistlab_core::BesovFlavor::InfInf,
        }
    }

    pub fn require_v(&self) -> Result<FunctionInput, CliError> {
        self.v
            .as_ref()
            .ok_or_else(|| CliError::Validation("this subcommand needs a \"v\" entry".into()))?
            .build()
    }

    pub fn require_beta(&self) -> Result<Complex64, CliError> {
        Ok(self
            .beta
            .as_ref()
            .ok_or_else(|| CliError::Validation("this subcommand needs \"beta\"".into()))?
            .value())
    }
}
