//! Experiment configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{build_tree, MarketError, ScenarioTree, TreeSpec};
use crate::utility::{MixingFunction, RatioKind, UtilityError, UtilityOnR, UtilityOnRPlus};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {found}, expected {SCHEMA_VERSION}")]
    Schema { found: u32 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("config has no `{0}` section")]
    MissingSection(&'static str),
    #[error("invalid claim: {0}")]
    Claim(String),
    #[error("unknown functional `{0}`")]
    Functional(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub market: TreeSpec,
    /// Claim B, used for prices and for D_T = exp(B).
    #[serde(default)]
    pub claim: ClaimSpec,
    /// Initial capital.
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub utility: Option<UtilitySpec>,
    #[serde(default)]
    pub delta_sweep: Option<DeltaSweepSpec>,
    #[serde(default)]
    pub p_sweep: Option<PSweepSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative gradient tolerance of the Newton solvers.
    #[serde(default = "default_solver_tol")]
    pub solver: f64,
    /// Residual tolerance of indifference prices.
    #[serde(default = "default_price_tol")]
    pub price: f64,
}

fn default_solver_tol() -> f64 {
    1e-12
}

fn default_price_tol() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: default_solver_tol(),
            price: default_price_tol(),
        }
    }
}

/// Terminal payoff specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Call {
        strike: f64,
        #[serde(default)]
        asset: usize,
    },
    Put {
        strike: f64,
        #[serde(default)]
        asset: usize,
    },
    /// Explicit value per leaf, in leaf order.
    Leaves {
        values: Vec<f64>,
    },
}

impl ClaimSpec {
    pub fn evaluate(&self, tree: &ScenarioTree) -> Result<Vec<f64>, ConfigError> {
        let asset_price = |asset: usize| -> Result<Vec<f64>, ConfigError> {
            if asset >= tree.assets() {
                return Err(ConfigError::Claim(format!("asset {asset} out of range")));
            }
            Ok(tree.leaves().map(|l| tree.node(l).price[asset]).collect())
        };
        let values = match self {
            ClaimSpec::Zero => vec![0.0; tree.leaf_count()],
            ClaimSpec::Constant { value } => vec![*value; tree.leaf_count()],
            ClaimSpec::Call { strike, asset } => asset_price(*asset)?
                .iter()
                .map(|s| (s - strike).max(0.0))
                .collect(),
            ClaimSpec::Put { strike, asset } => asset_price(*asset)?
                .iter()
                .map(|s| (strike - s).max(0.0))
                .collect(),
            ClaimSpec::Leaves { values } => {
                if values.len() != tree.leaf_count() {
                    return Err(ConfigError::Claim(format!(
                        "{} values for {} leaves",
                        values.len(),
                        tree.leaf_count()
                    )));
                }
                values.clone()
            }
        };
        if let Some(b) = values.iter().find(|b| !b.is_finite()) {
            return Err(ConfigError::Claim(format!("non-finite payoff {b}")));
        }
        Ok(values)
    }
}

/// Family of utilities on ℝ indexed by δ, with α_δ = 1 + alpha_slope·δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RFamilySpec {
    Exponential {
        #[serde(default)]
        alpha_slope: f64,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        alpha_slope: f64,
        #[serde(default)]
        anchor: Option<f64>,
    },
    ConstantShift {
        amplitude: f64,
        #[serde(default)]
        alpha_slope: f64,
        #[serde(default)]
        anchor: Option<f64>,
    },
}

impl RFamilySpec {
    pub fn alpha(&self, delta: f64) -> f64 {
        let slope = match *self {
            RFamilySpec::Exponential { alpha_slope }
            | RFamilySpec::Sine { alpha_slope, .. }
            | RFamilySpec::ConstantShift { alpha_slope, .. } => alpha_slope,
        };
        1.0 + slope * delta
    }

    pub fn member(&self, delta: f64) -> Result<UtilityOnR, UtilityError> {
        let alpha = self.alpha(delta);
        match *self {
            RFamilySpec::Exponential { .. } => UtilityOnR::exponential(alpha),
            RFamilySpec::Sine {
                amplitude,
                frequency,
                anchor,
                ..
            } => UtilityOnR::perturbed(
                delta,
                alpha,
                RatioKind::Sine {
                    amplitude,
                    frequency,
                },
                anchor,
            ),
            RFamilySpec::ConstantShift {
                amplitude, anchor, ..
            } => {
                UtilityOnR::perturbed(delta, alpha, RatioKind::ConstantShift { amplitude }, anchor)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndowmentScaling {
    /// ξ_δ = x0 + E.
    Fixed,
    /// ξ_δ = (x0 + E)/α_δ.
    InverseAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub family: RFamilySpec,
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSweepSpec {
    pub family: RFamilySpec,
    /// Strictly decreasing, non-negative.
    pub grid: Vec<f64>,
    /// Random endowment E added to x0.
    #[serde(default)]
    pub endowment: ClaimSpec,
    #[serde(default = "default_scaling")]
    pub endowment_scaling: EndowmentScaling,
    /// Columns to record; all when absent.
    #[serde(default)]
    pub functionals: Option<Vec<String>>,
}

fn default_scaling() -> EndowmentScaling {
    EndowmentScaling::Fixed
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PowerBaseSpec {
    Power {
        p0: f64,
    },
    LogSine {
        p0: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl PowerBaseSpec {
    pub fn p0(&self) -> f64 {
        match *self {
            PowerBaseSpec::Power { p0 } | PowerBaseSpec::LogSine { p0, .. } => p0,
        }
    }

    pub fn build(&self) -> Result<UtilityOnRPlus, UtilityError> {
        match *self {
            PowerBaseSpec::Power { p0 } => UtilityOnRPlus::power(p0),
            PowerBaseSpec::LogSine {
                p0,
                amplitude,
                frequency,
            } => UtilityOnRPlus::log_sine(p0, amplitude, frequency),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixingSpec {
    InverseLinear,
    InversePower { exponent: f64 },
}

impl From<MixingSpec> for MixingFunction {
    fn from(m: MixingSpec) -> Self {
        match m {
            MixingSpec::InverseLinear => MixingFunction::InverseLinear,
            MixingSpec::InversePower { exponent } => MixingFunction::InversePower { exponent },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PSweepSpec {
    pub base: PowerBaseSpec,
    #[serde(default = "default_mixing")]
    pub mixing: MixingSpec,
    /// Strictly decreasing, every p ≤ p0 < 0.
    pub grid: Vec<f64>,
    #[serde(default)]
    pub functionals: Option<Vec<String>>,
}

fn default_mixing() -> MixingSpec {
    MixingSpec::InverseLinear
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
            });
        }
        let tree = self.tree()?;
        self.claim.evaluate(&tree)?;
        if let Some(s) = &self.delta_sweep {
            check_decreasing(&s.grid)?;
            if s.grid.iter().any(|d| !(*d >= 0.0)) {
                return Err(ConfigError::Grid("δ values must be non-negative".into()));
            }
            for &d in &s.grid {
                s.family.member(d)?;
            }
            s.endowment.evaluate(&tree)?;
            check_functionals(&s.functionals, super::sweep::DELTA_FUNCTIONALS)?;
        }
        if let Some(s) = &self.p_sweep {
            check_decreasing(&s.grid)?;
            let p0 = s.base.p0();
            if s.grid.iter().any(|p| !(*p < 0.0 && *p <= p0)) {
                return Err(ConfigError::Grid(format!(
                    "p values must satisfy p ≤ p0 = {p0} < 0"
                )));
            }
            let base = s.base.build()?;
            let mix = MixingFunction::from(s.mixing);
            if !mix.has_bounded_rate() {
                return Err(ConfigError::Grid(
                    "mixing function must keep (1 − p)·f(p) bounded".into(),
                ));
            }
            for &p in &s.grid {
                UtilityOnRPlus::family_member(&base, p, &mix)?;
            }
            if !(self.x0 > 0.0) {
                return Err(ConfigError::Grid("p sweeps need x0 > 0".into()));
            }
            check_functionals(&s.functionals, super::sweep::P_FUNCTIONALS)?;
        }
        if let Some(u) = &self.utility {
            u.family.member(u.delta)?;
        }
        if !(self.tolerances.solver > 0.0 && self.tolerances.price > 0.0) {
            return Err(ConfigError::Grid("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn tree(&self) -> Result<ScenarioTree, ConfigError> {
        Ok(build_tree(&self.market)?)
    }
}

fn check_decreasing(grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(ConfigError::Grid("grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::Grid("grid has non-finite values".into()));
    }
    if grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(ConfigError::Grid("grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn check_functionals(requested: &Option<Vec<String>>, known: &[&str]) -> Result<(), ConfigError> {
    if let Some(list) = requested {
        if let Some(bad) = list.iter().find(|f| !known.contains(&f.as_str())) {
            return Err(ConfigError::Functional(bad.clone()));
        }
    }
    Ok(())
}
