//! TOML configuration: cost model, market, sampling, optimizer, oracles and
//! experiment plans. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use chainforge_core::chipcost::CostModel;
use chainforge_core::{MarketSpec, OptimizerConfig, Strategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::ExperimentPlan;
use crate::oracle::OracleConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config {path}: {}", .problems.join("; "))]
    Invalid {
        path: PathBuf,
        problems: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    /// Core counts of the chip market, one produced and one demanded good each.
    pub cores: Vec<u32>,
    /// Model interposers as an ordered good instead of a per-use cost.
    pub interposer_as_good: bool,
    /// Core count of the chips in the multi-ISA market.
    pub multi_isa_cores: u32,
    /// Explicit market used by plans with `base = "custom"`.
    pub custom: Option<MarketSpec>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            cores: vec![16, 8, 4],
            interposer_as_good: false,
            multi_isa_cores: 4,
            custom: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::LatinHypercube { n: 512 },
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub chipcost: CostModel,
    pub market: MarketConfig,
    pub sampling: SamplingConfig,
    pub optimizer: OptimizerConfig,
    pub oracle: OracleConfig,
    pub experiments: Vec<ExperimentPlan>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parse and validate `text`; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let problems = cfg.problems();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid {
                path: path.to_path_buf(),
                problems,
            })
        }
    }

    /// Every validation problem, each prefixed by its key path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.optimizer.validate() {
            out.push(format!("optimizer: {e}"));
        }
        if self.market.cores.is_empty() {
            out.push("market.cores: must not be empty".to_string());
        }
        for &c in &self.market.cores {
            if let Err(e) = self.chipcost.economics(c) {
                out.push(format!("chipcost: {c}-core chip: {e}"));
            }
        }
        if let Some(spec) = &self.market.custom {
            for v in spec.validate() {
                out.push(format!("market.custom.{v}"));
            }
        }
        match self.sampling.strategy {
            Strategy::MonteCarlo { n }
            | Strategy::StratifiedEquiProbable { n }
            | Strategy::LatinHypercube { n }
                if n == 0 =>
            {
                out.push("sampling.strategy.n: must be positive".to_string())
            }
            _ => {}
        }
        let mut names: Vec<&str> = Vec::new();
        for (i, plan) in self.experiments.iter().enumerate() {
            if names.contains(&plan.name.as_str()) {
                out.push(format!(
                    "experiments[{i}].name: duplicate name {}",
                    plan.name
                ));
            }
            names.push(&plan.name);
            for p in plan.problems() {
                out.push(format!("experiments[{i}] ({}).{p}", plan.name));
            }
        }
        out
    }

    pub fn experiment(&self, name: &str) -> Option<&ExperimentPlan> {
        self.experiments.iter().find(|p| p.name == name)
    }
}
