//! Scenario configuration files (TOML).
//!
//! ```toml
//! name = "example1"
//! provenance = "where the scenario comes from"
//! seed = 1
//! outputs = ["report"]
//!
//! [[portfolio.assets]]
//! model = { kind = "discrete", values = [0.0, -200.0], probs = [0.9925, 0.0075] }
//!
//! [measure]
//! kind = "var"
//! alpha = 0.99
//!
//! [engine]
//! kind = "exact"
//! ```

use std::path::Path;

use capalloc::allocation::{BandForm, Regime};
use capalloc::estimators::RatioMode;
use capalloc::models::{AssetModel, BernoulliParetoAsset, PortfolioSpec, ShiftedLognormalAsset};
use capalloc::risk_measures::RiskMeasureId;
use capalloc::sweep::{default_band, unit_grid, validate_grid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Where the scenario's numbers come from.
    pub provenance: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub portfolio: PortfolioConfig,
    pub measure: RiskMeasureId,
    /// Required by `run`; sweep-only scenarios omit it.
    #[serde(default)]
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tables: Option<TablesConfig>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Report]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Output {
    /// Allocation report CSV and text.
    Report,
    /// MCMC step trace CSV.
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub assets: Vec<AssetEntry>,
}

/// `count` copies of one asset model, each with weight `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "unit")]
    pub weight: f64,
    pub model: ModelConfig,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

/// Asset models, including calibrated forms whose location is solved from
/// a target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    ShiftedLognormal { a: f64, mu: f64, sigma: f64 },
    CalibratedLognormal { mu: f64, sigma: f64, mean: f64 },
    BernoulliPareto { base: f64, p_loss: f64, gamma: f64, b: f64 },
    CalibratedPareto { base: f64, p_loss: f64, gamma: f64, mean: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Constant { value: f64 },
    Reflection { source: usize, down: f64, up: f64 },
}

impl ModelConfig {
    fn to_model(&self) -> capalloc::Result<AssetModel> {
        Ok(match self.clone() {
            Self::ShiftedLognormal { a, mu, sigma } => ShiftedLognormalAsset::new(a, mu, sigma)?.into(),
            Self::CalibratedLognormal { mu, sigma, mean } => ShiftedLognormalAsset::calibrated(mu, sigma, mean)?.into(),
            Self::BernoulliPareto { base, p_loss, gamma, b } => BernoulliParetoAsset::new(base, p_loss, gamma, b)?.into(),
            Self::CalibratedPareto { base, p_loss, gamma, mean } => {
                BernoulliParetoAsset::calibrated(base, p_loss, gamma, mean)?.into()
            }
            Self::Uniform { lo, hi } => AssetModel::Uniform { lo, hi },
            Self::Discrete { values, probs } => AssetModel::Discrete { values, probs },
            Self::Constant { value } => AssetModel::Constant { value },
            Self::Reflection { source, down, up } => AssetModel::Reflection { source, down, up },
        })
    }
}

impl PortfolioConfig {
    pub fn spec(&self) -> Result<PortfolioSpec, CliError> {
        let mut assets = Vec::new();
        let mut weights = Vec::new();
        for entry in &self.assets {
            let model = entry.model.to_model()?;
            for _ in 0..entry.count {
                assets.push(model.clone());
                weights.push(entry.weight);
            }
        }
        let spec = PortfolioSpec { assets, weights };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EngineConfig {
    /// Exact evaluation on the discrete joint law.
    Exact {
        /// Atoms replacing each uniform asset.
        #[serde(default = "default_uniform_points")]
        uniform_points: usize,
    },
    Mc {
        m: usize,
        /// Band half-width; about 16% of the tail count when absent.
        #[serde(default)]
        b: Option<usize>,
        #[serde(default)]
        form: BandForm,
        #[serde(default)]
        hit_band: Option<(f64, f64)>,
    },
    Is {
        m: usize,
        b_is: usize,
        /// One shift for every asset, or one per asset.
        shift: Shift,
        #[serde(default)]
        sigma_is: Option<Vec<f64>>,
        #[serde(default)]
        form: BandForm,
        #[serde(default)]
        hit_band: Option<(f64, f64)>,
    },
    Mcmc {
        m: usize,
        /// Level set `X = -var_level`; estimated by MC when absent.
        #[serde(default)]
        var_level: Option<f64>,
        #[serde(default)]
        thin: Option<usize>,
        #[serde(default = "default_rho")]
        rho_prop: f64,
        #[serde(default)]
        burn_in: Option<usize>,
        #[serde(default)]
        ratio_mode: RatioMode,
        #[serde(default = "one")]
        chains: usize,
        #[serde(default)]
        trace_steps: usize,
    },
}

fn default_uniform_points() -> usize {
    101
}

fn default_rho() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shift {
    Uniform(f64),
    PerAsset(Vec<f64>),
}

impl Shift {
    pub fn per_asset(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Uniform(s) => vec![*s; n],
            Self::PerAsset(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeName {
    Var,
    Es,
    Blend,
}

/// Two-asset sweep of `u X_1 + (1 - u) X_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit grid; `points` equally spaced values on `[0, 1]` otherwise.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub points: usize,
    pub m: usize,
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub form: BandForm,
    #[serde(default = "all_regimes")]
    pub regimes: Vec<RegimeName>,
}

fn default_points() -> usize {
    21
}

fn all_regimes() -> Vec<RegimeName> {
    vec![RegimeName::Var, RegimeName::Es, RegimeName::Blend]
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => unit_grid(self.points)?,
        };
        validate_grid(&grid)?;
        Ok(grid)
    }

    pub fn regimes(&self, alpha: f64) -> Vec<(RegimeName, Regime)> {
        let b = self.b.unwrap_or_else(|| default_band(alpha, self.m));
        self.regimes
            .iter()
            .map(|&r| {
                let regime = match r {
                    RegimeName::Var => Regime::Var { alpha, b, form: self.form },
                    RegimeName::Es => Regime::Es { alpha },
                    RegimeName::Blend => Regime::Blend { alpha },
                };
                (r, regime)
            })
            .collect()
    }
}

/// Single-period RORAC table over the portfolio's asset types and the
/// two-period renewal table built from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesConfig {
    pub m: usize,
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub form: BandForm,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config(format!("invalid scenario name {:?}", self.name)));
        }
        let spec = self.portfolio.spec()?;
        self.measure.validate()?;
        if let Some(s) = &self.sweep {
            s.grid()?;
            if spec.n_assets() != 2 {
                return Err(CliError::Config(format!("a sweep needs exactly 2 assets, got {}", spec.n_assets())));
            }
            if !matches!(self.measure, RiskMeasureId::VaR { .. } | RiskMeasureId::EsTail { .. }) {
                return Err(CliError::Config("sweeps take their level from a var or es-tail measure".into()));
            }
        }
        if self.tables.is_some() && spec.n_assets() < 2 {
            return Err(CliError::Config("tables need at least 2 asset types".into()));
        }
        if let Some(EngineConfig::Is { shift: Shift::PerAsset(v), .. }) = &self.engine {
            if v.len() != spec.n_assets() {
                return Err(CliError::Config(format!("{} shifts for {} assets", v.len(), spec.n_assets())));
            }
        }
        Ok(())
    }
}
