//! The acceptance battery as a list of named experiment configs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output;

/// Built-in battery, also shipped as `configs/suite.json`.
pub const DEFAULT_SUITE: &str = include_str!("../configs/suite.json");

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub name: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub experiments: Vec<SuiteEntry>,
}

#[derive(Clone, Debug)]
pub struct SuiteRow {
    pub name: String,
    pub kind: &'static str,
    pub passed: bool,
    pub failed_checks: Vec<String>,
    pub error: Option<String>,
    pub wall_s: f64,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: SuiteConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if s.experiments.is_empty() {
            return Err(CliError::Config("suite has no experiments".into()));
        }
        for e in &s.experiments {
            if e.name.is_empty() || e.name.contains(['/', '\\']) || e.name.starts_with('.') {
                return Err(CliError::Config(format!("invalid experiment name `{}`", e.name)));
            }
            e.config.validate().map_err(|err| CliError::Config(format!("{}: {err}", e.name)))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Override every experiment's seed, offset by its position so runs stay independent.
    pub fn reseed(&mut self, seed: u64) {
        for (i, e) in self.experiments.iter_mut().enumerate() {
            e.config.seed = Some(seed.wrapping_add(i as u64));
        }
    }
}

pub fn summary_csv(rows: &[SuiteRow]) -> String {
    let mut s = String::from("name,kind,passed,failed_checks,error,wall_time_s\n");
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
        let _ = writeln!(s, "{},{},{},{},{err},{:.3}", r.name, r.kind, r.passed, r.failed_checks.join(" "), r.wall_s);
    }
    s
}

/// Run every experiment into `out/<name>/` and write `out/summary.csv`.
/// Guard trips inside an experiment count as failures rather than aborting the battery.
pub fn run(suite: &SuiteConfig, out: &Path) -> Result<Vec<SuiteRow>> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut rows = Vec::new();
    for e in &suite.experiments {
        let start = std::time::Instant::now();
        let row = match output::run_to_dir(&e.config, &out.join(&e.name)) {
            Ok(r) => SuiteRow {
                name: e.name.clone(),
                kind: e.config.kind.name(),
                passed: r.passed,
                failed_checks: r.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect(),
                error: None,
                wall_s: r.wall_s,
            },
            Err(err @ (CliError::Io { .. } | CliError::Core(vecadvect::Error::Io(_)))) => return Err(err),
            Err(err) => SuiteRow {
                name: e.name.clone(),
                kind: e.config.kind.name(),
                passed: false,
                failed_checks: Vec::new(),
                error: Some(err.to_string()),
                wall_s: start.elapsed().as_secs_f64(),
            },
        };
        eprintln!("{} {}", if row.passed { "PASS" } else { "FAIL" }, row.name);
        rows.push(row);
    }
    output::write(&out.join("summary.csv"), summary_csv(&rows))?;
    Ok(rows)
}
