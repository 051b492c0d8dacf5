//! JSON sweep configuration.
//!
//! Every key is optional; omitted keys take the full default grid
//! (8 agents, early/mid/late, 11 x 11 bias levels, memory 1/3/5/inf,
//! mutation 0.02, 1000 replicates). Unknown keys are rejected.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{unit_levels, EngineError, HorizonMode, QualityMode, SweepGrid};
use crate::model::MemoryWindow;
use crate::schedule::{load_schedule, ConnectivityKind, ScheduleError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A memory level: a positive number of rounds or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MemoryLevel {
    Rounds(u32),
    Named(String),
}

impl MemoryLevel {
    fn window(&self) -> Result<MemoryWindow, ConfigError> {
        match self {
            MemoryLevel::Rounds(0) => Err(ConfigError::Invalid("memory levels must be at least 1".into())),
            MemoryLevel::Rounds(m) => Ok(MemoryWindow::Rounds(*m)),
            MemoryLevel::Named(s) => s.parse().map_err(ConfigError::Invalid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonSpec {
    /// One pass through the schedule.
    Complete,
    Fixed(u32),
    UntilConvergence(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum QualitySpec {
    RandomOwnerPerRun,
    /// 1-based agent id.
    FixedOwner(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub population_sizes: Vec<usize>,
    pub connectivity: Vec<ConnectivityKind>,
    pub coordination_bias_levels: Vec<f64>,
    pub content_bias_levels: Vec<f64>,
    pub memory_levels: Vec<MemoryLevel>,
    pub mutation_rate: f64,
    pub replicates: usize,
    pub master_seed: u64,
    pub horizon_mode: HorizonSpec,
    pub output_dir: PathBuf,
    pub quality_mode: QualitySpec,
    /// Schedule file used when `connectivity` contains `"custom"`.
    pub custom_schedule: Option<PathBuf>,
    /// Write per-run records (`runs.csv`) in addition to summaries.
    pub write_runs: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            population_sizes: vec![8],
            connectivity: vec![ConnectivityKind::Early, ConnectivityKind::Mid, ConnectivityKind::Late],
            coordination_bias_levels: unit_levels(),
            content_bias_levels: unit_levels(),
            memory_levels: vec![
                MemoryLevel::Rounds(1),
                MemoryLevel::Rounds(3),
                MemoryLevel::Rounds(5),
                MemoryLevel::Named("inf".into()),
            ],
            mutation_rate: 0.02,
            replicates: 1000,
            master_seed: 1,
            horizon_mode: HorizonSpec::Complete,
            output_dir: PathBuf::from("sweep_out"),
            quality_mode: QualitySpec::RandomOwnerPerRun,
            custom_schedule: None,
            write_runs: true,
        }
    }
}

fn check_unit(name: &str, values: &[f64]) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::Invalid(format!("{name} must not be empty")));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ConfigError::Invalid(format!("{name} value {v} outside [0,1]")));
    }
    Ok(())
}

impl CliConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let config: CliConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_sizes.is_empty() {
            return Err(ConfigError::Invalid("population_sizes must not be empty".into()));
        }
        if self.connectivity.is_empty() {
            return Err(ConfigError::Invalid("connectivity must not be empty".into()));
        }
        check_unit("coordination_bias_levels", &self.coordination_bias_levels)?;
        check_unit("content_bias_levels", &self.content_bias_levels)?;
        if self.memory_levels.is_empty() {
            return Err(ConfigError::Invalid("memory_levels must not be empty".into()));
        }
        for m in &self.memory_levels {
            m.window()?;
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(ConfigError::Invalid("mutation_rate must lie in [0,1]".into()));
        }
        if self.replicates == 0 {
            return Err(ConfigError::Invalid("replicates must be at least 1".into()));
        }
        if self.connectivity.contains(&ConnectivityKind::Custom) && self.custom_schedule.is_none() {
            return Err(ConfigError::Invalid("custom connectivity requires custom_schedule".into()));
        }
        match self.horizon_mode {
            HorizonSpec::Fixed(0) => Err(ConfigError::Invalid("fixed horizon must be at least 1 round".into())),
            _ => Ok(()),
        }
    }

    /// Resolves levels and schedules into a sweep grid.
    pub fn to_grid(&self) -> Result<SweepGrid, ConfigError> {
        self.validate()?;
        let custom_schedule = match &self.custom_schedule {
            Some(path) if self.connectivity.contains(&ConnectivityKind::Custom) => {
                Some(Arc::new(load_schedule(path)?.schedule))
            }
            _ => None,
        };
        let quality_mode = match self.quality_mode {
            QualitySpec::RandomOwnerPerRun => QualityMode::RandomOwnerPerRun,
            QualitySpec::FixedOwner(0) => return Err(ConfigError::Invalid("fixed_owner is 1-based".into())),
            QualitySpec::FixedOwner(a) => QualityMode::FixedOwner(a - 1),
        };
        let horizon = match self.horizon_mode {
            HorizonSpec::Complete => HorizonMode::Complete,
            HorizonSpec::Fixed(r) => HorizonMode::Fixed(r),
            HorizonSpec::UntilConvergence(max_rounds) => HorizonMode::UntilConvergence { max_rounds },
        };
        let grid = SweepGrid {
            population_sizes: self.population_sizes.clone(),
            connectivity: self.connectivity.clone(),
            coordination_levels: self.coordination_bias_levels.clone(),
            content_levels: self.content_bias_levels.clone(),
            memory_levels: self.memory_levels.iter().map(MemoryLevel::window).collect::<Result<_, _>>()?,
            mutation_rate: self.mutation_rate,
            replicates: self.replicates,
            quality_mode,
            horizon,
            custom_schedule,
        };
        grid.points()?;
        Ok(grid)
    }

    /// Identity of everything that affects sweep output (the output directory excluded).
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.output_dir = PathBuf::new();
        serde_json::to_string(&copy).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_grid() {
        let cfg = CliConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, CliConfig::default());
        assert_eq!(cfg.to_grid().unwrap().points().unwrap().len(), 1452);
    }

    #[test]
    fn full_document() {
        let cfg = CliConfig::from_json_str(
            r#"{
                "population_sizes": [16],
                "connectivity": ["early", "late"],
                "coordination_bias_levels": [0.5],
                "content_bias_levels": [0.0, 0.8],
                "memory_levels": [1, "inf"],
                "mutation_rate": 0.02,
                "replicates": 10,
                "master_seed": 99,
                "horizon_mode": {"until_convergence": 300},
                "output_dir": "out",
                "quality_mode": {"fixed_owner": 3},
                "write_runs": false
            }"#,
        )
        .unwrap();
        let grid = cfg.to_grid().unwrap();
        assert_eq!(grid.points().unwrap().len(), 8);
        assert_eq!(grid.quality_mode, QualityMode::FixedOwner(2));
        assert_eq!(grid.horizon, HorizonMode::UntilConvergence { max_rounds: 300 });
        assert_eq!(grid.memory_levels, vec![MemoryWindow::Rounds(1), MemoryWindow::Unbounded]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(CliConfig::from_json_str(r#"{"replicate": 3}"#), Err(ConfigError::Parse { .. })));
        assert!(matches!(
            CliConfig::from_json_str(r#"{"content_bias_levels": []}"#),
            Err(ConfigError::Invalid(m)) if m.contains("content_bias_levels")
        ));
        assert!(matches!(
            CliConfig::from_json_str(r#"{"coordination_bias_levels": [1.5]}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(CliConfig::from_json_str(r#"{"memory_levels": [0]}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(CliConfig::from_json_str(r#"{"memory_levels": ["forever"]}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(CliConfig::from_json_str(r#"{"replicates": 0}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(CliConfig::from_json_str(r#"{"connectivity": ["custom"]}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(CliConfig::from_json_str(r#"{"horizon_mode": {"fixed": 0}}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(CliConfig::from_json_str("[1,2]"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn fingerprint_ignores_output_dir() {
        let a = CliConfig::default();
        let b = CliConfig { output_dir: "elsewhere".into(), ..CliConfig::default() };
        let c = CliConfig { master_seed: 2, ..CliConfig::default() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
