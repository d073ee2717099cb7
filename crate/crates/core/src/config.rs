//! Scenario parameters and the JSON run configuration.
//!
//! The effective configuration is the embedded default document with a
//! user file merged over it key by key. Unknown keys are rejected so that a
//! typo never silently falls back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::Hyperparameters;
use crate::error::{Error, Result};

/// Physical and network parameters of the two-network scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// APs per grid side.
    pub grid_size: usize,
    pub ap_spacing_m: f64,
    pub active_aps: usize,
    /// PN receivers are dropped uniformly inside this radius around their AP.
    pub coverage_radius_m: f64,
    pub num_crs: usize,
    /// CR receivers are dropped uniformly inside this radius around their transmitter.
    pub cr_link_radius_m: f64,
    pub shadowing_sigma_db: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    /// Maximum tolerated relative throughput drop on a monitored PN link.
    pub underlay_limit: f64,
    pub pn_power_min_dbm: f64,
    pub pn_power_max_dbm: f64,
    /// PN power-control target; `None` means the lowest SINR of the top AMC mode.
    pub pn_target_sinr_db: Option<f64>,
    pub pn_convergence_db: f64,
    pub pn_max_iterations: usize,
    /// Re-run PN power control for every CR joint action instead of freezing it.
    pub pn_readapt_every_step: bool,
    pub cr_power_min_dbm: f64,
    pub cr_power_step_db: f64,
    /// Number of CR power levels, not counting OFF.
    pub cr_power_levels: usize,
    /// Optional CSV (mode,threshold_db,efficiency) replacing the embedded LTE table.
    pub amc_table_csv: Option<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            grid_size: 3,
            ap_spacing_m: 200.0,
            active_aps: 7,
            coverage_radius_m: 100.0,
            num_crs: 2,
            cr_link_radius_m: 50.0,
            shadowing_sigma_db: 6.0,
            bandwidth_hz: 180e3,
            noise_dbm: -130.0,
            underlay_limit: 0.05,
            pn_power_min_dbm: -30.0,
            pn_power_max_dbm: 20.0,
            pn_target_sinr_db: None,
            pn_convergence_db: 0.01,
            pn_max_iterations: 500,
            pn_readapt_every_step: false,
            cr_power_min_dbm: -10.0,
            cr_power_step_db: 2.5,
            cr_power_levels: 13,
            amc_table_csv: None,
        }
    }
}

impl Scenario {
    pub fn torus_width_m(&self) -> f64 {
        self.grid_size as f64 * self.ap_spacing_m
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, why: &str| Err(Error::Config(format!("scenario.{key}: {why}")));
        if self.grid_size == 0 {
            return fail("grid_size", "must be positive");
        }
        if !(self.ap_spacing_m > 0.0) {
            return fail("ap_spacing_m", "must be positive");
        }
        if self.active_aps == 0 || self.active_aps > self.grid_size * self.grid_size {
            return fail("active_aps", "must be between 1 and the number of APs");
        }
        if !(self.coverage_radius_m > 0.0) || self.coverage_radius_m > self.torus_width_m() / 2.0 {
            return fail("coverage_radius_m", "must be positive and at most half the torus width");
        }
        if self.num_crs == 0 {
            return fail("num_crs", "must be positive");
        }
        if !(self.cr_link_radius_m > 0.0) || self.cr_link_radius_m > self.torus_width_m() / 2.0 {
            return fail("cr_link_radius_m", "must be positive and at most half the torus width");
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return fail("shadowing_sigma_db", "must be non-negative");
        }
        if !(self.bandwidth_hz > 0.0) {
            return fail("bandwidth_hz", "must be positive");
        }
        if !(self.underlay_limit >= 0.0 && self.underlay_limit < 1.0) {
            return fail("underlay_limit", "must be in [0, 1)");
        }
        if !(self.pn_power_min_dbm <= self.pn_power_max_dbm) {
            return fail("pn_power_min_dbm", "must not exceed pn_power_max_dbm");
        }
        if !(self.pn_convergence_db > 0.0) {
            return fail("pn_convergence_db", "must be positive");
        }
        if !(self.cr_power_step_db > 0.0) {
            return fail("cr_power_step_db", "must be positive");
        }
        if self.cr_power_levels == 0 {
            return fail("cr_power_levels", "must be positive");
        }
        Ok(())
    }
}

/// Amount of per-step tracing a run emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    #[default]
    Off,
    /// Per-step Q-values of every agent (`qtrace.csv`).
    Q,
    /// Q-values plus per-step environment records (`steps.csv`).
    Full,
}

/// Full effective configuration of a CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Hyperparameters the presets start from before applying their overrides.
    pub hyper: Hyperparameters,
    pub preset: String,
    pub seed: u64,
    pub runs: usize,
    pub out: String,
    pub trace: TraceLevel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            hyper: Hyperparameters::default(),
            preset: "default".into(),
            seed: 1,
            runs: 100,
            out: "out".into(),
            trace: TraceLevel::Off,
        }
    }
}

impl RunConfig {
    pub fn default_json() -> String {
        serde_json::to_string_pretty(&RunConfig::default()).expect("default config serializes")
    }

    /// Merges `overrides` over the defaults. Every key in `overrides` must
    /// name an existing field.
    pub fn from_overrides(overrides: &Value) -> Result<Self> {
        let mut base = serde_json::to_value(RunConfig::default())?;
        merge(&mut base, overrides, "")?;
        let cfg: RunConfig = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
        Self::from_overrides(&value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.hyper.validate()
    }
}

fn merge(base: &mut Value, overrides: &Value, path: &str) -> Result<()> {
    match (base, overrides) {
        (Value::Object(base_map), Value::Object(over_map)) => {
            for (key, value) in over_map {
                let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                match base_map.get_mut(key) {
                    Some(slot) if slot.is_object() && value.is_object() => merge(slot, value, &full)?,
                    Some(slot) => *slot = value.clone(),
                    None => return Err(Error::Config(format!("unknown key `{full}`"))),
                }
            }
            Ok(())
        }
        (_, Value::Object(_)) => Err(Error::Config(format!("`{path}` is not an object"))),
        (slot, value) => {
            *slot = value.clone();
            Ok(())
        }
    }
}
