//! JSON run configuration and the shipped presets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{Oracle, Profile, Scheme, StudySetup};
use crate::error::{FtlError, Result};
use crate::ode::BoundaryMode;
use crate::transform::PLACEMENT_PANELS;
use crate::velocity::VelocityModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VelocitySpec {
    Linear { v_max: f64 },
    Quadratic { v_max: f64 },
}

impl VelocitySpec {
    pub fn build(&self) -> Result<VelocityModel<f64>> {
        match *self {
            VelocitySpec::Linear { v_max } => VelocityModel::linear(v_max),
            VelocitySpec::Quadratic { v_max } => VelocityModel::quadratic(v_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Rho0Spec {
    /// `(cos(pi z) + 1) / 2`.
    Cosine,
    Constant { value: f64 },
    /// `rho_l` left of `z0`, `rho_r` right of it.
    Riemann { rho_l: f64, rho_r: f64, z0: f64 },
}

impl Rho0Spec {
    pub fn profile(&self) -> Profile<f64> {
        match *self {
            Rho0Spec::Cosine => Arc::new(|z: f64| 0.5 * ((std::f64::consts::PI * z).cos() + 1.0)),
            Rho0Spec::Constant { value } => Arc::new(move |_| value),
            Rho0Spec::Riemann { rho_l, rho_r, z0 } => Arc::new(move |z| if z < z0 { rho_l } else { rho_r }),
        }
    }

    fn validate(&self) -> Result<()> {
        let vals = match *self {
            Rho0Spec::Cosine => vec![],
            Rho0Spec::Constant { value } => vec![value],
            Rho0Spec::Riemann { rho_l, rho_r, z0 } => {
                if !z0.is_finite() {
                    return Err(FtlError::InvalidArgument("rho0.z0 must be finite".into()));
                }
                vec![rho_l, rho_r]
            }
        };
        match vals.into_iter().find(|v| !(0.0..=1.0).contains(v)) {
            Some(v) => Err(FtlError::InvalidArgument(format!("rho0 value {v} outside [0, 1]"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundarySpec {
    /// Ring on the configured domain.
    Periodic,
    /// Open road with a leader of constant gap `m`.
    Leader { m: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Euler,
    Ode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OracleSpec {
    Godunov {
        cells: usize,
        #[serde(default = "default_cfl")]
        cfl: f64,
    },
    /// Closed-form solution of the Riemann problem in `rho0`.
    Riemann,
}

fn default_cfl() -> f64 {
    0.9
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::Godunov { cells: 8192, cfl: default_cfl() }
    }
}

fn default_domain() -> [f64; 2] {
    [-1.0, 1.0]
}

fn default_t_end() -> f64 {
    2.0
}

fn default_panels() -> usize {
    PLACEMENT_PANELS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub velocity: VelocitySpec,
    pub rho0: Rho0Spec,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    pub boundary: BoundarySpec,
    /// Vehicle count for `simulate` and `validate`.
    pub n: usize,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// `dt / ell`; defaults to `0.9 / L_v`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fixed ODE step; overrides `lambda` in ode mode.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub out: Option<String>,
    /// Record every `stride`-th step; automatic when absent.
    #[serde(default)]
    pub stride: Option<usize>,
    /// Times at which `simulate` writes the density; defaults to `[0, t_end]`.
    #[serde(default)]
    pub density_times: Option<Vec<f64>>,
    /// Refinement ladder for `converge`; defaults to `[n]`.
    #[serde(default)]
    pub ladder: Option<Vec<usize>>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default = "default_panels")]
    pub panels: usize,
}

pub const PRESET_NAMES: [&str; 4] = ["figure12", "riemann-rarefaction", "riemann-shock", "constant"];

const FIGURE12: &str = r#"{
  "velocity": {"kind": "linear", "v_max": 1.0},
  "rho0": {"kind": "cosine"},
  "domain": [-1.0, 1.0],
  "boundary": {"kind": "periodic"},
  "n": 20,
  "t_end": 2.0,
  "lambda": 1.0,
  "mode": "euler",
  "stride": 1,
  "density_times": [0.0, 2.0],
  "ladder": [40, 80, 160, 320, 640],
  "oracle": {"kind": "godunov", "cells": 8192, "cfl": 0.9}
}"#;

const RIEMANN_RAREFACTION: &str = r#"{
  "velocity": {"kind": "linear", "v_max": 1.0},
  "rho0": {"kind": "riemann", "rho_l": 1.0, "rho_r": 0.0, "z0": 0.0},
  "domain": [-1.0, 1.0],
  "boundary": {"kind": "leader", "m": 1000000.0},
  "n": 41,
  "t_end": 1.0,
  "lambda": 0.9,
  "mode": "euler",
  "ladder": [41, 81, 161, 321, 641],
  "oracle": {"kind": "riemann"}
}"#;

const RIEMANN_SHOCK: &str = r#"{
  "velocity": {"kind": "linear", "v_max": 1.0},
  "rho0": {"kind": "riemann", "rho_l": 0.2, "rho_r": 0.8, "z0": 0.0},
  "domain": [-1.0, 1.0],
  "boundary": {"kind": "leader", "m": 1.25},
  "n": 41,
  "t_end": 1.0,
  "lambda": 0.9,
  "mode": "euler",
  "ladder": [41, 81, 161, 321, 641],
  "oracle": {"kind": "godunov", "cells": 8192, "cfl": 0.9}
}"#;

const CONSTANT: &str = r#"{
  "velocity": {"kind": "linear", "v_max": 1.0},
  "rho0": {"kind": "constant", "value": 0.5},
  "domain": [-1.0, 1.0],
  "boundary": {"kind": "periodic"},
  "n": 20,
  "t_end": 2.0,
  "lambda": 0.9,
  "mode": "euler",
  "stride": 1,
  "ladder": [20, 40, 80],
  "oracle": {"kind": "godunov", "cells": 1024, "cfl": 0.9}
}"#;

/// Embedded JSON source of a named preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "figure12" => Some(FIGURE12),
        "riemann-rarefaction" => Some(RIEMANN_RAREFACTION),
        "riemann-shock" => Some(RIEMANN_SHOCK),
        "constant" => Some(CONSTANT),
        _ => None,
    }
}

/// Why a configuration was refused.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unknown preset {0:?} (known: figure12, riemann-rarefaction, riemann-shock, constant)")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl SimConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> std::result::Result<Self, ConfigError> {
        let src = preset_source(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Self::from_json(src)
    }

    pub fn model(&self) -> Result<VelocityModel<f64>> {
        self.velocity.build()
    }

    pub fn boundary_mode(&self) -> BoundaryMode<f64> {
        match self.boundary {
            BoundarySpec::Periodic => BoundaryMode::Periodic { a: self.domain[0], b: self.domain[1] },
            BoundarySpec::Leader { m } => BoundaryMode::Leader { m },
        }
    }

    /// Effective `dt / ell`.
    pub fn lambda(&self) -> Result<f64> {
        let lv = self.model()?.lipschitz_constant();
        Ok(self.lambda.unwrap_or(0.9 / lv))
    }

    /// Step for a run with vehicle length `ell`.
    pub fn step(&self, ell: f64) -> Result<f64> {
        match (self.mode, self.dt) {
            (Mode::Ode, Some(dt)) => Ok(dt),
            _ => Ok(self.lambda()? * ell),
        }
    }

    pub fn density_times(&self) -> Vec<f64> {
        self.density_times.clone().unwrap_or_else(|| vec![0.0, self.t_end])
    }

    pub fn ladder(&self) -> Vec<usize> {
        self.ladder.clone().unwrap_or_else(|| vec![self.n])
    }

    /// Referential and range checks. `cfl_guard = false` skips `lambda L_v <= 1`.
    pub fn validate(&self, cfl_guard: bool) -> std::result::Result<(), ConfigError> {
        let bad = |e: FtlError| ConfigError::Invalid(e.to_string());
        let model = self.model().map_err(bad)?;
        self.rho0.validate().map_err(bad)?;
        self.boundary_mode().validate().map_err(bad)?;
        let [a, b] = self.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ConfigError::Invalid(format!("domain [{a}, {b}] is empty")));
        }
        if self.n < 2 {
            return Err(ConfigError::Invalid("n must be at least 2".into()));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(ConfigError::Invalid("t_end must be positive".into()));
        }
        let lambda = self.lambda().map_err(bad)?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ConfigError::Invalid("lambda must be positive".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(ConfigError::Invalid("dt must be positive".into()));
            }
        }
        if cfl_guard && self.mode == Mode::Euler && lambda * model.lipschitz_constant() > 1.0 {
            return Err(ConfigError::Invalid(format!(
                "lambda * L_v = {} exceeds 1 in euler mode",
                lambda * model.lipschitz_constant()
            )));
        }
        if self.stride == Some(0) {
            return Err(ConfigError::Invalid("stride must be at least 1".into()));
        }
        if self.density_times().iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return Err(ConfigError::Invalid("density_times must lie in [0, t_end]".into()));
        }
        if self.panels == 0 {
            return Err(ConfigError::Invalid("panels must be positive".into()));
        }
        match self.oracle {
            OracleSpec::Godunov { cells, cfl } => {
                if cells == 0 || !(cfl > 0.0 && cfl <= 1.0) {
                    return Err(ConfigError::Invalid("oracle needs cells > 0 and cfl in (0, 1]".into()));
                }
            }
            OracleSpec::Riemann => {
                if !matches!(self.rho0, Rho0Spec::Riemann { .. }) || !matches!(self.velocity, VelocitySpec::Linear { .. }) {
                    return Err(ConfigError::Invalid("riemann oracle needs riemann rho0 and a linear velocity".into()));
                }
            }
        }
        Ok(())
    }

    pub fn study(&self) -> Result<StudySetup<f64>> {
        let lambda = self.lambda()?;
        let scheme = match self.mode {
            Mode::Euler => Scheme::Euler { lambda },
            Mode::Ode => Scheme::Ode { lambda },
        };
        let oracle = match (self.oracle, self.rho0) {
            (OracleSpec::Godunov { cells, cfl }, _) => Oracle::Godunov { cells, cfl },
            (OracleSpec::Riemann, Rho0Spec::Riemann { rho_l, rho_r, z0 }) => Oracle::Riemann { rho_l, rho_r, z0 },
            (OracleSpec::Riemann, _) => return Err(FtlError::InvalidArgument("riemann oracle needs riemann rho0".into())),
        };
        Ok(StudySetup {
            model: self.model()?,
            rho0: self.rho0.profile(),
            domain: (self.domain[0], self.domain[1]),
            boundary: self.boundary_mode(),
            t_end: self.t_end,
            ladder: self.ladder(),
            scheme,
            oracle,
            panels: self.panels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let cfg = SimConfig::preset(name).unwrap();
            cfg.validate(true).unwrap();
            cfg.study().unwrap();
        }
        assert!(matches!(SimConfig::preset("nope"), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "{\n  \"velocity\": {\"kind\": \"cubic\", \"v_max\": 1.0}\n}";
        match SimConfig::from_json(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cfl_is_checked_in_euler_mode_only() {
        let mut cfg = SimConfig::preset("constant").unwrap();
        cfg.lambda = Some(1.5);
        assert!(cfg.validate(true).is_err());
        assert!(cfg.validate(false).is_ok());
        cfg.mode = Mode::Ode;
        assert!(cfg.validate(true).is_ok());
    }

    #[test]
    fn default_lambda_uses_lipschitz_constant() {
        let mut cfg = SimConfig::preset("constant").unwrap();
        cfg.lambda = None;
        cfg.velocity = VelocitySpec::Quadratic { v_max: 1.0 };
        assert!((cfg.lambda().unwrap() - 0.9 * 27.0 / 8.0).abs() < 1e-12);
    }
}
