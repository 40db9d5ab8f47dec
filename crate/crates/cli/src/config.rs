//! Experiment configuration files.
//!
//! A config is a single JSON object. Unknown keys are rejected. Which optional keys are
//! required depends on `kind`; [`ExperimentConfig::validate`] names the first one missing.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vecadvect::fields::Recipe;
use vecadvect::Grid;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Duality,
    DualityRelation,
    Serrin,
    Fk2d,
    Fk3d,
    FkSurface,
    Martingale,
    OnePointLaw,
    So3Check,
    Scaling,
    Solve,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Duality => "duality",
            Kind::DualityRelation => "duality-relation",
            Kind::Serrin => "serrin",
            Kind::Fk2d => "fk2d",
            Kind::Fk3d => "fk3d",
            Kind::FkSurface => "fk-surface",
            Kind::Martingale => "martingale",
            Kind::OnePointLaw => "one-point-law",
            Kind::So3Check => "so3-check",
            Kind::Scaling => "scaling",
            Kind::Solve => "solve",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub sizes: Vec<usize>,
    /// Box side lengths, `2 pi` each when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_len: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let lens = self.box_len.clone().unwrap_or_else(|| vec![TAU; self.sizes.len()]);
        Ok(Grid::new(&self.sizes, &lens)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityMode {
    /// The recipe evaluated at `t = 0` for all times.
    #[default]
    Frozen,
    /// The recipe's own time dependence.
    Analytic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowChoice {
    #[default]
    Identity,
    /// Drift-free flow rotated by the stream function of the velocity.
    Brownian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub points: usize,
}

/// Thresholds for the pass/fail checks; each kind has defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Relative floor in Monte Carlo comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// PDE step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// SDE step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_dt: Option<f64>,
    /// Length of the stochastic flow, ending at `t_final`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Recipe>,
    #[serde(default)]
    pub velocity_mode: VelocityMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<Recipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<Recipe>,
    #[serde(default)]
    pub flow: FlowChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_dts: Option<Vec<f64>>,
    /// Number of random pairs or panel members.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Refinement factor of the grid used for PDE references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
    #[serde(default)]
    pub complex_check: bool,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub save_fields: bool,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn yes() -> bool {
    true
}

fn missing(kind: Kind, field: &str) -> CliError {
    CliError::Config(format!("missing field `{field}` required for {} experiments", kind.name()))
}

/// `Some` value or a config error naming the field.
pub fn need<T: Clone>(kind: Kind, field: &str, v: &Option<T>) -> Result<T> {
    v.clone().ok_or_else(|| missing(kind, field))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn required(&self) -> Vec<(&'static str, bool)> {
        let grid = ("grid", self.grid.is_some());
        let nu = ("nu", self.nu.is_some());
        let t = ("t_final", self.t_final.is_some());
        let dt = ("dt", self.dt.is_some());
        let flow_dt = ("flow_dt", self.flow_dt.is_some());
        let s = ("s", self.s.is_some());
        let n = ("n_paths", self.n_paths.is_some());
        let seed = ("seed", self.seed.is_some());
        let v = ("velocity", self.velocity.is_some());
        let f0 = ("f0", self.f0.is_some());
        let g0 = ("g0", self.g0.is_some());
        let contour = ("contour", self.contour.is_some());
        let brownian = self.flow == FlowChoice::Brownian;
        let pair_given = self.f0.is_some() && self.g0.is_some();
        match self.kind {
            Kind::Duality => vec![grid, nu, t, dt, v, f0, g0],
            Kind::DualityRelation if pair_given => vec![grid, nu, t, dt, v],
            Kind::DualityRelation => vec![grid, nu, t, dt, v, seed],
            Kind::Serrin => vec![grid, nu, t, dt, seed],
            Kind::Fk2d | Kind::Fk3d => vec![grid, nu, t, s, flow_dt, n, seed, v, f0],
            Kind::FkSurface => vec![grid, nu, t, s, flow_dt, n, seed, v, g0],
            Kind::Martingale => vec![grid, nu, t, s, flow_dt, n, seed, v, f0, contour],
            Kind::OnePointLaw if brownian => vec![nu, t, flow_dt, n, seed, grid, v],
            Kind::OnePointLaw => vec![nu, t, flow_dt, n, seed],
            Kind::So3Check => vec![seed],
            Kind::Scaling | Kind::Solve => vec![grid, nu, t, dt, v, f0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((field, _)) = self.required().into_iter().find(|(_, ok)| !ok) {
            return Err(missing(self.kind, field));
        }
        let positive = [("nu", self.nu), ("t_final", self.t_final), ("dt", self.dt), ("flow_dt", self.flow_dt), ("lambda", self.lambda)];
        for (name, v) in positive {
            if let Some(x) = v {
                if !(x.is_finite() && x > 0.0) {
                    return Err(CliError::Config(format!("`{name}` must be positive and finite, got {x}")));
                }
            }
        }
        if let (Some(s), Some(t)) = (self.s, self.t_final) {
            if !(0.0..=t).contains(&s) {
                return Err(CliError::Config(format!("`s` must lie in [0, t_final], got {s}")));
            }
        }
        if let Some(g) = &self.grid {
            g.build().map_err(|e| CliError::Config(format!("`grid`: {e}")))?;
            let d = g.sizes.len();
            let want = match self.kind {
                Kind::DualityRelation | Kind::Serrin | Kind::Fk3d | Kind::FkSurface => Some(3),
                Kind::Fk2d | Kind::Martingale | Kind::OnePointLaw => Some(2),
                _ => None,
            };
            if let Some(w) = want {
                if d != w {
                    return Err(CliError::Config(format!("{} experiments need a {w}D grid, got {d}D", self.kind.name())));
                }
            }
        }
        if self.n_paths == Some(0) {
            return Err(CliError::Config("`n_paths` must be positive".into()));
        }
        if self.kind == Kind::Fk3d && self.flow != FlowChoice::Identity {
            return Err(CliError::Config("fk3d experiments support only the identity flow".into()));
        }
        if self.complex_check && self.flow != FlowChoice::Brownian {
            return Err(CliError::Config("`complex_check` needs `flow: \"brownian\"`".into()));
        }
        Ok(())
    }
}
