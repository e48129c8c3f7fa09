//! TOML experiment configuration and the bundled presets.
//!
//! Every section is optional; missing keys fall back to the defaults below.

use crate::alloc::{BudgetMode, Sense};
use crate::design::{BgdaSettings, DesignMethod, PsoSettings};
use crate::model::CodewordMapping;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Roc,
    FiLandscape,
    DesignQuantizer,
    Allocate,
    Sweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Roc => "roc",
            Scenario::FiLandscape => "fi-landscape",
            Scenario::DesignQuantizer => "design-quantizer",
            Scenario::Allocate => "allocate",
            Scenario::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub theta: f64,
    pub sigma_n2: f64,
    pub sigma_h2: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self { theta: 0.25, sigma_n2: 1.0, sigma_h2: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub quantized: usize,
    pub bits: u32,
    pub p_e: f64,
    pub full_precision: usize,
    pub l0: u32,
    /// Fixed thresholds for the `bits`-bit quantizer; optimized when absent.
    pub thresholds: Option<Vec<f64>>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { quantized: 80, bits: 3, p_e: 0.0, full_precision: 20, l0: 32, thresholds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocSection {
    pub pfa_grid: Vec<f64>,
    pub detectors: Vec<String>,
}

impl Default for RocSection {
    fn default() -> Self {
        Self {
            pfa_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            detectors: ["clairvoyant", "1b", "3b", "fp", "3b-fp", "r-3b-fp"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub bits: u32,
    pub p_e: f64,
    pub tau_max: f64,
    pub methods: Vec<DesignMethod>,
    pub mapping: CodewordMapping,
    pub pso: PsoSettings,
    pub bgda: BgdaSettings,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            bits: 2,
            p_e: 0.0,
            tau_max: 5.0,
            methods: vec![DesignMethod::Auto],
            mapping: CodewordMapping::NaturalBinary,
            pso: PsoSettings::default(),
            bgda: BgdaSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSection {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub tau2: f64,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self { min: -5.0, max: 5.0, points: 201, tau2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationSection {
    pub epsilons: Vec<f64>,
    pub freqs: Vec<f64>,
    pub m_total: u64,
    pub budget: u64,
    pub l0: u32,
    pub levels: u32,
    pub budget_mode: BudgetMode,
    pub sense: Sense,
    /// False-alarm rate at which detection probability is reported.
    pub pfa: f64,
}

impl Default for AllocationSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.0, 0.01, 0.1, 0.2],
            freqs: vec![0.6, 0.2, 0.1, 0.1],
            m_total: 100,
            budget: 500,
            l0: 32,
            levels: 3,
            budget_mode: BudgetMode::AtMost,
            sense: Sense::MaximizeFI,
            pfa: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCase {
    pub name: String,
    pub freqs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub m_min: u64,
    pub m_max: u64,
    pub m_step: u64,
    pub pfa: f64,
    pub senses: Vec<Sense>,
    pub cases: Vec<SweepCase>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            m_min: 20,
            m_max: 100,
            m_step: 10,
            pfa: 0.1,
            senses: vec![Sense::MaximizeFI, Sense::MinimizeFI],
            cases: vec![
                SweepCase { name: "C1".into(), freqs: vec![0.6, 0.2, 0.1, 0.1] },
                SweepCase { name: "C2".into(), freqs: vec![0.1, 0.1, 0.2, 0.6] },
            ],
        }
    }
}

impl SweepSection {
    pub fn m_values(&self) -> Vec<u64> {
        (self.m_min..=self.m_max).step_by(self.m_step.max(1) as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub signal: SignalSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub roc: RocSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub landscape: LandscapeSection,
    #[serde(default)]
    pub allocation: AllocationSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_trials() -> u64 {
    5000
}

/// Bundled presets as `(name, toml)`.
pub const PRESETS: [(&str, &str); 6] = [
    ("quantizer-2bit", include_str!("../presets/quantizer-2bit.toml")),
    ("landscape-2bit", include_str!("../presets/landscape-2bit.toml")),
    ("roc-clean", include_str!("../presets/roc-clean.toml")),
    ("roc-noisy", include_str!("../presets/roc-noisy.toml")),
    ("sweep-exact", include_str!("../presets/sweep-exact.toml")),
    ("allocate", include_str!("../presets/allocate.toml")),
];

impl ExperimentConfig {
    /// Defaults for a scenario, as if the file held only `scenario = ...`.
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            seed: 0,
            trials: default_trials(),
            signal: SignalSection::default(),
            network: NetworkSection::default(),
            roc: RocSection::default(),
            design: DesignSection::default(),
            landscape: LandscapeSection::default(),
            allocation: AllocationSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml_str(text))
            .unwrap_or_else(|| Err(ConfigError::UnknownPreset(name.to_string())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let s = &self.signal;
        if !(s.sigma_n2.is_finite() && s.sigma_n2 > 0.0) {
            return bad(format!("sigma_n2 must be positive, got {}", s.sigma_n2));
        }
        if !(s.sigma_h2.is_finite() && s.sigma_h2 >= 0.0) {
            return bad(format!("sigma_h2 must be non-negative, got {}", s.sigma_h2));
        }
        if !s.theta.is_finite() {
            return bad("theta must be finite".into());
        }
        let grid = &self.roc.pfa_grid;
        if grid.iter().any(|p| !(*p > 0.0 && *p < 1.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("pfa_grid must be strictly increasing inside (0, 1)".into());
        }
        if self.landscape.points == 0
            || self.landscape.min.partial_cmp(&self.landscape.max) != Some(std::cmp::Ordering::Less)
        {
            return bad("landscape needs min < max and at least one point".into());
        }
        if self.design.methods.is_empty() {
            return bad("design.methods must not be empty".into());
        }
        let a = &self.allocation;
        if a.levels == 0 {
            return bad("allocation.levels must be at least 1".into());
        }
        for p in [a.pfa, self.sweep.pfa] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("pfa {p} outside (0, 1)"));
            }
        }
        if self.scenario == Scenario::Sweep {
            let sw = &self.sweep;
            if sw.m_step == 0 || sw.m_min > sw.m_max {
                return bad("sweep needs m_step > 0 and m_min <= m_max".into());
            }
            if sw.cases.iter().any(|c| c.freqs.len() != a.epsilons.len()) {
                return bad("every sweep case needs one frequency per epsilon".into());
            }
        }
        Ok(())
    }
}
