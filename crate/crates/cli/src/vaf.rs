//! `inspect` and `convert` for field files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vecadvect::fields;
use vecadvect::fields::io::{self, RawField};
use vecadvect::{Grid, ScalarField, VectorField};

use crate::error::{CliError, Result};

/// JSON mirror of a VAF1 file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonField {
    sizes: Vec<usize>,
    box_len: Vec<f64>,
    comps: Vec<Vec<f64>>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn read_any(path: &Path) -> Result<RawField> {
    if is_json(path) {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let j: JsonField = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let grid = Grid::new(&j.sizes, &j.box_len)?;
        let raw = RawField { grid, comps: j.comps };
        // validates shape and finiteness
        io::decode(&io::encode(&raw))?;
        Ok(raw)
    } else {
        let buf = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(io::decode(&buf)?)
    }
}

pub fn write_any(path: &Path, f: &RawField) -> Result<()> {
    if is_json(path) {
        let j = JsonField { sizes: f.grid.sizes().to_vec(), box_len: f.grid.box_len().to_vec(), comps: f.comps.clone() };
        let mut s = serde_json::to_string(&j).expect("finite values serialize");
        s.push('\n');
        crate::output::write(path, s)
    } else {
        Ok(io::write(path, f)?)
    }
}

pub fn convert(input: &Path, output: &Path) -> Result<()> {
    write_any(output, &read_any(input)?)
}

pub fn inspect(path: &Path) -> Result<String> {
    let raw = read_any(path)?;
    let g = raw.grid.clone();
    let mut s = String::new();
    let _ = writeln!(s, "file: {}", path.display());
    let _ = writeln!(s, "dim: {}", g.dim());
    let _ = writeln!(s, "sizes: {:?}", g.sizes());
    let _ = writeln!(s, "box: {:?}", g.box_len());
    let _ = writeln!(s, "components: {}", raw.comps.len());
    for (k, c) in raw.comps.iter().enumerate() {
        let min = c.iter().copied().fold(f64::INFINITY, f64::min);
        let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = (c.iter().map(|x| x * x).sum::<f64>() * g.cell_volume()).sqrt();
        let _ = writeln!(s, "component {k}: min {min:.6e} max {max:.6e} norm {norm:.6e}");
    }
    if raw.comps.len() == g.dim() {
        let f = VectorField::new(g.clone(), raw.comps)?;
        let div = fields::divergence(&f);
        let div_norm = (div.data().iter().map(|x| x * x).sum::<f64>() * g.cell_volume()).sqrt();
        let _ = writeln!(s, "norm: {:.6e}", fields::norm_h(&f));
        let _ = writeln!(s, "divergence: norm {div_norm:.6e} max {:.6e}", div.max_abs());
    } else if raw.comps.len() == 1 {
        let f = ScalarField::new(g, raw.comps.into_iter().next().expect("one component"))?;
        let _ = writeln!(s, "max: {:.6e}", f.max_abs());
    }
    Ok(s)
}
