//! Run configuration shared by the CLI and the presets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{FitOptions, OneModeSetup, TwoModeSetup};
use crate::circuit::{self, CircuitError, CircuitParams, NormalModes};
use crate::eme::{EmeOptions, EmeVariant};
use crate::lindblad::{Tolerances, Truncation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("unknown preset `{0}`; expected fig2, fig4 or fig5")]
    UnknownPreset(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt_out: f64,
}

/// Drive specified by its linear cavity population and detuning below `ω_c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveTarget {
    pub nbar_c: f64,
    /// `(ω_c − ω_d)/χ_ac`.
    pub detuning_chi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    #[default]
    Eme,
    Kerr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweepSpec {
    pub nbar_grid: Vec<f64>,
    pub detuning_chi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningSweepSpec {
    pub nbar_c: f64,
    pub detunings_chi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneModeSweepSpec {
    pub setup: OneModeSetup,
    pub epsilons: Vec<f64>,
    pub nbar_grid: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub power: Option<PowerSweepSpec>,
    #[serde(default)]
    pub detuning: Option<DetuningSweepSpec>,
    #[serde(default)]
    pub one_mode: Option<OneModeSweepSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub circuit: CircuitParams,
    /// When set, `kappa_flat` is chosen so the cavity-like mode decays at this rate.
    #[serde(default)]
    pub kappa_c: Option<f64>,
    #[serde(default)]
    pub drive: Option<DriveTarget>,
    #[serde(default)]
    pub model: SimModel,
    #[serde(default)]
    pub eme: EmeOptions,
    pub truncation: Truncation,
    #[serde(default)]
    pub kerr_truncation: Option<Truncation>,
    pub time: TimeGrid,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

fn one() -> usize {
    1
}

fn default_output() -> String {
    "runs".to_string()
}

pub const PRESET_FIG2: &str = include_str!("../presets/fig2.json");
pub const PRESET_FIG4: &str = include_str!("../presets/fig4.json");
pub const PRESET_FIG5: &str = include_str!("../presets/fig5.json");

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "fig2" => Self::from_json(PRESET_FIG2),
            "fig4" => Self::from_json(PRESET_FIG4),
            "fig5" => Self::from_json(PRESET_FIG5),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.circuit.validate()?;
        let invalid = |field: &str, reason: &str| ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.to_string(),
        };
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, "must be positive and finite"))
            }
        };
        positive("time.t_end", self.time.t_end)?;
        positive("time.dt_out", self.time.dt_out)?;
        positive("tolerances.rtol", self.tolerances.rtol)?;
        positive("tolerances.atol", self.tolerances.atol)?;
        if let Some(k) = self.kappa_c {
            positive("kappa_c", k)?;
        }
        if let Some(d) = self.drive {
            if !(d.nbar_c.is_finite() && d.nbar_c >= 0.0) {
                return Err(invalid("drive.nbar_c", "must be non-negative and finite"));
            }
            positive("drive.detuning_chi", d.detuning_chi)?;
        }
        for (field, t) in [("truncation", Some(self.truncation)), ("kerr_truncation", self.kerr_truncation)] {
            if let Some(t) = t {
                if t.check(Truncation::DEFAULT_CAP).is_err() {
                    return Err(invalid(field, "dimensions must be positive with dim_q*dim_c <= 64"));
                }
            }
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if let Some(p) = &self.sweep.power {
            if p.nbar_grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(invalid("sweep.power.nbar_grid", "entries must be non-negative"));
            }
            positive("sweep.power.detuning_chi", p.detuning_chi)?;
        }
        if let Some(d) = &self.sweep.detuning {
            if d.detunings_chi.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(invalid("sweep.detuning.detunings_chi", "entries must be positive"));
            }
        }
        if let Some(o) = &self.sweep.one_mode {
            positive("sweep.one_mode.setup.omega_q", o.setup.omega_q)?;
            positive("sweep.one_mode.setup.q_factor", o.setup.q_factor)?;
            positive("sweep.one_mode.setup.drive_ratio", o.setup.drive_ratio)?;
            if o.setup.dim < 2 || o.setup.dim > Truncation::DEFAULT_CAP {
                return Err(invalid("sweep.one_mode.setup.dim", "must lie in [2, 64]"));
            }
            if o.epsilons.iter().any(|e| !(0.0..1.0).contains(e)) {
                return Err(invalid("sweep.one_mode.epsilons", "entries must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Circuit with `kappa_flat` resolved from `kappa_c` when given.
    pub fn resolved_circuit(&self) -> Result<(CircuitParams, NormalModes), ConfigError> {
        let nm = circuit::normal_modes(&self.circuit)?;
        let mut p = self.circuit;
        if let Some(kc) = self.kappa_c {
            p.kappa_flat = kc / nm.v.cc.powi(2);
        }
        Ok((p, nm))
    }

    pub fn two_mode_setup(&self) -> Result<TwoModeSetup, ConfigError> {
        let (circuit, _) = self.resolved_circuit()?;
        Ok(TwoModeSetup {
            circuit,
            eme_truncation: self.truncation,
            kerr_truncation: self.kerr_truncation.unwrap_or(self.truncation),
            t_end: self.time.t_end,
            dt_out: self.time.dt_out,
            tolerances: self.tolerances,
            fit: self.fit,
            bins: self.eme.bins,
            include_i4: self.eme.include_i4,
        })
    }

    pub fn variant(&self) -> EmeVariant {
        self.eme.variant
    }
}
