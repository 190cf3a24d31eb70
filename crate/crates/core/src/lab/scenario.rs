//! Scenario files: a versioned JSON envelope around a [`RunConfig`] plus the
//! diagnostics to record and the checks that decide the exit status.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{InitialData, RunConfig};
use crate::grid::GridSpec;
use crate::virial::Nonlinearity;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirialSettings {
    pub rho: f64,
    #[serde(default)]
    pub rho_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExteriorSettings {
    #[serde(default)]
    pub rho0: f64,
    #[serde(default = "half")]
    pub rate: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSettings {
    pub c: f64,
    pub big_r: f64,
    #[serde(default = "default_l")]
    pub big_l: f64,
}

fn default_l() -> f64 {
    32.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default)]
    pub modulation: bool,
    #[serde(default)]
    pub max_bubbles: Option<usize>,
    #[serde(default)]
    pub refine: Option<RefineSettings>,
    #[serde(default)]
    pub virial: Option<VirialSettings>,
    #[serde(default)]
    pub exterior_energy: Option<ExteriorSettings>,
    #[serde(default)]
    pub trapping: bool,
    /// Write a checkpoint every this many time units, besides the final one.
    #[serde(default)]
    pub checkpoint_every: Option<f64>,
}

/// Scenario-level expectations, evaluated after the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// Upper bound on d(t) over the whole run.
    #[serde(default)]
    pub max_d: Option<f64>,
    /// Upper bound on (‖u̇‖ + ‖∇u‖)(t_end) / (‖u̇‖ + ‖∇u‖)(0).
    #[serde(default)]
    pub final_decay_ratio: Option<f64>,
    /// Require the early β₁ trend to have the sign of ι₁ι₂ω².
    #[serde(default)]
    pub interaction_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub alpha: f64,
    pub t_end: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    pub grid: GridSpec,
    pub initial: InitialData,
    #[serde(default = "default_nl")]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub expect: Expectations,
    /// Relative to the scenario file; defaults to `runs/<name>` beside it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_cadence() -> f64 {
    0.1
}

fn default_nl() -> Nonlinearity {
    Nonlinearity::Focusing
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!(
                "name: {:?} is not a plain identifier",
                self.name
            )));
        }
        let d = &self.diagnostics;
        if (d.modulation || d.refine.is_some()) && self.grid.dim < 4 {
            return Err(Error::Config("diagnostics.modulation: needs grid.dim ≥ 4".into()));
        }
        if let Some(v) = &d.virial {
            if !(v.rho > 0.0) {
                return Err(Error::Config(format!(
                    "diagnostics.virial.rho: must be positive, got {}",
                    v.rho
                )));
            }
        }
        if let Some(e) = &d.checkpoint_every {
            if !(*e > 0.0) {
                return Err(Error::Config(
                    "diagnostics.checkpoint_every: must be positive".into(),
                ));
            }
        }
        if let Some(r) = &d.refine {
            if self.grid.dim < 6 {
                return Err(Error::Config("diagnostics.refine: needs grid.dim ≥ 6".into()));
            }
            if !(r.c > 0.0 && r.big_r > 1.0 && r.big_l > 0.0) {
                return Err(Error::Config(
                    "diagnostics.refine: need c > 0, big_r > 1, big_l > 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            alpha: self.alpha,
            dt: self.dt,
            t_end: self.t_end,
            grid: self.grid,
            initial: self.initial.clone(),
            cadence: self.cadence,
            nonlinearity: self.nonlinearity,
        }
    }

    pub fn output_dir(&self, config_path: &Path) -> PathBuf {
        let base = config_path.parent().unwrap_or(Path::new("."));
        match &self.output_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => base.join(p),
            None => base.join("runs").join(&self.name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1, "name": "w", "alpha": 1.0, "t_end": 1.0,
        "grid": {"dim": 6, "n": 400, "r_max": 200.0},
        "initial": {"kind": "multibubble", "iotas": [1], "lambdas": [1.0]}
    }"#;

    #[test]
    fn parses_minimal() {
        let sc = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(sc.cadence, 0.1);
        assert_eq!(
            sc.output_dir(Path::new("cfg/w.json")),
            PathBuf::from("cfg/runs/w")
        );
    }

    #[test]
    fn rejects_typos_and_versions() {
        let typo = MINIMAL.replace("\"t_end\"", "\"tend\"");
        assert!(Scenario::from_json(&typo).is_err());
        let extra = MINIMAL.replace("\"alpha\"", "\"colour\": 1, \"alpha\"");
        assert!(Scenario::from_json(&extra).is_err());
        let v2 = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(Scenario::from_json(&v2), Err(Error::Config(_))));
    }
}
