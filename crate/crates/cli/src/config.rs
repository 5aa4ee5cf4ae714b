//! Run configuration: a TOML file with `model`, `market`, `observation` and
//! `output` sections. Rates are raw decimals (`0.075`, not `7.5`). Unknown
//! keys are rejected.
//!
//! ```toml
//! [model]
//! sigma = 0.2
//! drift = -0.24767          # omitted or ignored when calibrate = true
//! calibrate = false         # choose the drift so that -psi(1) = r - delta
//! jump_rate = 0.5
//! jumps = "folded_normal"   # or { alpha = [..], generator = [[..], ..] }
//!
//! [market]
//! r = 0.075
//! delta = 0.07
//! m = 0.2
//! rho = 0.08162
//! kappa = 0.35
//! eta = 0.5
//! principal = 50.0
//! tax_threshold = "P*rho/delta"   # or a number; 0 switches tax rebates on everywhere
//!
//! [observation]
//! mode = "periodic"         # or "continuous"
//! lambda = 4.0              # required for periodic
//!
//! [output]
//! asset_value = 100.0
//! csv = "out.csv"           # optional; stdout when absent
//!
//! [output.sweep]            # optional default for the sweep command
//! variable = "lambda"       # lambda | jump_rate | V_B | P | V
//! grid = [1.0, 2.0, 4.0]
//! ```

use std::path::Path;

use levy_toft::optimizer::TaxThresholdRule;
use levy_toft::{LevyModel, MarketParams, Observation, PhaseType};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const REFERENCE: &str = include_str!("../configs/reference.toml");

pub const PROPORTIONAL_RULE: &str = "P*rho/delta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub market: MarketSection,
    pub observation: ObservationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    #[serde(default)]
    pub calibrate: bool,
    pub jump_rate: f64,
    pub jumps: JumpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JumpSpec {
    Preset(String),
    PhaseType { alpha: Vec<f64>, generator: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    pub delta: f64,
    pub m: f64,
    pub rho: f64,
    pub kappa: f64,
    pub eta: f64,
    pub principal: f64,
    pub tax_threshold: TaxThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaxThreshold {
    Value(f64),
    Rule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    Continuous,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub mode: ObservationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_asset_value")]
    pub asset_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { asset_value: default_asset_value(), csv: None, sweep: None }
    }
}

fn default_asset_value() -> f64 {
    100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "jump_rate")]
    JumpRate,
    /// Grid values are log-shifts `e` of the optimal barrier, `V_B = V_B* exp(e)`.
    #[serde(rename = "V_B")]
    Barrier,
    #[serde(rename = "P")]
    Principal,
    #[serde(rename = "V")]
    AssetValue,
}

impl SweepVariable {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "lambda" => Ok(Self::Lambda),
            "jump_rate" => Ok(Self::JumpRate),
            "V_B" => Ok(Self::Barrier),
            "P" => Ok(Self::Principal),
            "V" => Ok(Self::AssetValue),
            other => Err(CliError::Config(format!(
                "unknown sweep variable '{other}' (expected lambda, jump_rate, V_B, P or V)"
            ))),
        }
    }

    pub fn column(&self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::JumpRate => "jump_rate",
            Self::Barrier => "barrier_log_shift",
            Self::Principal => "principal",
            Self::AssetValue => "asset_value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn reference() -> Self {
        Self::parse(REFERENCE).expect("the bundled reference config parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn jumps(&self) -> Result<PhaseType, CliError> {
        match &self.model.jumps {
            JumpSpec::Preset(name) if name == "folded_normal" => Ok(PhaseType::folded_normal()),
            JumpSpec::Preset(name) => Err(CliError::Config(format!(
                "unknown phase-type preset '{name}' (expected folded_normal or explicit alpha/generator)"
            ))),
            JumpSpec::PhaseType { alpha, generator } => Ok(PhaseType::new(alpha.clone(), generator.clone())?),
        }
    }

    /// The model with the drift either taken from the file or calibrated.
    pub fn model(&self) -> Result<LevyModel, CliError> {
        let jumps = self.jumps()?;
        let m = &self.model;
        if m.calibrate {
            let raw = LevyModel::new(m.sigma, m.drift.unwrap_or(0.0), m.jump_rate, jumps)?;
            Ok(raw.calibrate_drift(self.market.r, self.market.delta)?)
        } else {
            let drift = m
                .drift
                .ok_or_else(|| CliError::Config("model.drift is required when calibrate = false".into()))?;
            Ok(LevyModel::new(m.sigma, drift, m.jump_rate, jumps)?)
        }
    }

    pub fn observation(&self) -> Result<Observation, CliError> {
        match (self.observation.mode, self.observation.lambda) {
            (ObservationMode::Continuous, _) => Ok(Observation::Continuous),
            (ObservationMode::Periodic, Some(lambda)) => Ok(Observation::Periodic { lambda }),
            (ObservationMode::Periodic, None) => {
                Err(CliError::Config("observation.lambda is required for periodic mode".into()))
            }
        }
    }

    /// How `V_T` follows the principal: `None` for an explicit positive value.
    pub fn threshold_rule(&self) -> Result<Option<TaxThresholdRule>, CliError> {
        match &self.market.tax_threshold {
            TaxThreshold::Rule(rule) if rule.replace(' ', "") == PROPORTIONAL_RULE => {
                Ok(Some(TaxThresholdRule::ProportionalToP))
            }
            TaxThreshold::Rule(rule) => Err(CliError::Config(format!(
                "unknown tax_threshold rule '{rule}' (expected a number or \"{PROPORTIONAL_RULE}\")"
            ))),
            TaxThreshold::Value(v) if *v == 0.0 => Ok(Some(TaxThresholdRule::Zero)),
            TaxThreshold::Value(_) => Ok(None),
        }
    }

    pub fn market(&self) -> Result<MarketParams, CliError> {
        let s = &self.market;
        let mut mkt = MarketParams {
            r: s.r,
            delta: s.delta,
            m: s.m,
            rho: s.rho,
            kappa: s.kappa,
            eta: s.eta,
            principal: s.principal,
            tax_threshold: 0.0,
            observation: self.observation()?,
        };
        mkt.tax_threshold = match (&s.tax_threshold, self.threshold_rule()?) {
            (TaxThreshold::Value(v), None) => *v,
            (_, Some(rule)) => rule.threshold(&mkt, s.principal),
            (TaxThreshold::Rule(_), None) => unreachable!("rules resolve or fail above"),
        };
        mkt.validate()?;
        Ok(mkt)
    }

    /// Market for debt level `principal`, with `V_T` following the configured rule.
    pub fn market_with_principal(&self, principal: f64) -> Result<MarketParams, CliError> {
        let mkt = self.market()?.with_principal(principal);
        Ok(match self.threshold_rule()? {
            Some(rule) => mkt.with_tax_threshold(rule.threshold(&mkt, principal)),
            None => mkt,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        self.market()?;
        let v = self.output.asset_value;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("output.asset_value must be > 0, got {v}")));
        }
        Ok(())
    }
}
