//! File formats: the experiment config and persisted controller files.
//!
//! Both are TOML. Unknown keys are rejected, and parse errors carry the
//! line and column of the offending item.

use std::path::Path;

use doa_core::control::{ControllerConfig, LoopSettings, SearchBounds};
use doa_core::fuzzy::RuleBase;
use doa_core::pkpd::{PatientProfile, PdParams, Sex};
use doa_core::simloop::SimConfig;
use doa_core::tune::TuneAudit;
use doa_core::woa::WoaConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Built-in copy of `configs/experiment.toml`.
pub const DEFAULT_EXPERIMENT: &str = include_str!("../../../configs/experiment.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientEntry {
    pub id: u32,
    pub age: f64,
    pub weight: f64,
    pub height: f64,
    pub sex: Sex,
    /// Overrides the experiment-wide `[pd]` table for this patient.
    #[serde(default)]
    pub pd: Option<PdParams>,
}

/// Actuator settings; the sampling period always comes from `[sim]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSection {
    pub u_max: f64,
    pub memory_len: usize,
    pub anti_windup: bool,
}

impl Default for ActuatorSection {
    fn default() -> Self {
        let s = LoopSettings::default();
        Self {
            u_max: s.u_max,
            memory_len: s.memory_len,
            anti_windup: s.anti_windup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pd: PdParams,
    pub sim: SimConfig,
    pub woa: WoaConfig,
    #[serde(default)]
    pub controller: ActuatorSection,
    #[serde(default)]
    pub bounds: SearchBounds,
    #[serde(default)]
    pub rules: RuleBase,
    pub patients: Vec<PatientEntry>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::config(origin, e))?;
        cfg.validate().map_err(|m| CliError::config(origin, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        Self::parse(&text, path)
    }

    fn validate(&self) -> Result<(), String> {
        let section = |name: &str, r: doa_core::Result<()>| r.map_err(|e| format!("[{name}] {e}"));
        section("pd", self.pd.validate())?;
        section("sim", self.sim.validate())?;
        section("woa", self.woa.validate())?;
        section("bounds", self.bounds.validate())?;
        section("controller", self.loop_settings().validate())?;
        if self.patients.is_empty() {
            return Err("[[patients]] needs at least one entry".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in self.patient_profiles() {
            if !seen.insert(p.id) {
                return Err(format!("[[patients]] duplicate id {}", p.id));
            }
            p.validate().map_err(|e| format!("[[patients]] id {}: {e}", p.id))?;
        }
        Ok(())
    }

    pub fn patient_profiles(&self) -> Vec<PatientProfile> {
        self.patients
            .iter()
            .map(|p| PatientProfile {
                id: p.id,
                age: p.age,
                weight: p.weight,
                height: p.height,
                sex: p.sex,
                pd: p.pd.unwrap_or(self.pd),
            })
            .collect()
    }

    pub fn loop_settings(&self) -> LoopSettings {
        LoopSettings {
            u_max: self.controller.u_max,
            dt: self.sim.dt,
            memory_len: self.controller.memory_len,
            anti_windup: self.controller.anti_windup,
        }
    }
}

/// A persisted controller, optionally with the record of how it was tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub controller: ControllerConfig,
    #[serde(default)]
    pub audit: Option<TuneAudit>,
}

impl ControllerFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        let file: ControllerFile = toml::from_str(&text).map_err(|e| CliError::config(path, e))?;
        file.controller.validate().map_err(|e| CliError::config(path, e))?;
        Ok(file)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialize controller: {e}")))
    }
}
