//! Artifact layout of one experiment run:
//!
//! ```text
//! manifest.json          resolved config, tool version, threads, wall time
//! result.json            checks and results (no timing, identical across same-seed reruns)
//! result.csv             one row per check
//! <table>.csv            experiment tables
//! plot_<name>.svg, .csv plots with their data
//! <field>.vaf, .json     saved fields and their metadata
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use vecadvect::fields::io;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiments::{self, Check, Outcome, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub wall_s: f64,
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    write(path, s)
}

fn table_csv(t: &Table) -> String {
    let mut s = t.header.join(",");
    s.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn checks_csv(checks: &[Check]) -> String {
    let mut s = String::from("check,value,threshold,bound,pass\n");
    for c in checks {
        let bound = if c.upper { "max" } else { "min" };
        let _ = writeln!(s, "{},{},{},{bound},{}", c.name, c.value, c.threshold, c.pass);
    }
    s
}

fn manifest(cfg: &ExperimentConfig, wall_s: f64, passed: Option<bool>, error: Option<String>) -> Value {
    json!({
        "tool": "vecadvect",
        "version": VERSION,
        "kind": cfg.kind.name(),
        "config": cfg,
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall_s,
        "passed": passed,
        "error": error,
    })
}

fn write_outcome(dir: &Path, cfg: &ExperimentConfig, out: &Outcome) -> Result<()> {
    write_json(
        &dir.join("result.json"),
        &json!({
            "kind": cfg.kind.name(),
            "seed": cfg.seed,
            "passed": out.passed(),
            "checks": out.checks,
            "results": out.results,
        }),
    )?;
    write(&dir.join("result.csv"), checks_csv(&out.checks))?;
    for t in &out.tables {
        write(&dir.join(format!("{}.csv", t.name)), table_csv(t))?;
    }
    if cfg.plots {
        for (name, p) in &out.plots {
            write(&dir.join(format!("plot_{name}.svg")), p.render())?;
            write(&dir.join(format!("plot_{name}.csv")), p.to_csv())?;
        }
    }
    for f in &out.fields {
        let path = dir.join(format!("{}.vaf", f.name));
        io::save_vector(&path, &f.field).map_err(CliError::from)?;
        write_json(&dir.join(format!("{}.json", f.name)), &f.meta)?;
    }
    Ok(())
}

/// Run one experiment and write its artifacts into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let start = Instant::now();
    let outcome = experiments::run(cfg);
    let wall_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(out) => {
            write_outcome(dir, cfg, &out)?;
            write_json(&dir.join("manifest.json"), &manifest(cfg, wall_s, Some(out.passed()), None))?;
            Ok(RunSummary { dir: dir.to_path_buf(), passed: out.passed(), checks: out.checks, wall_s })
        }
        Err(e) => {
            write_json(&dir.join("manifest.json"), &manifest(cfg, wall_s, None, Some(e.to_string())))?;
            Err(e)
        }
    }
}
