use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Grid, VectorField};
use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

fn one_i() -> i32 {
    1
}

/// Analytic divergence-free fields, all `2*pi`-periodic in every coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Recipe {
    /// Decaying Navier–Stokes solution `exp(-2 nu t) (-cos x sin y, sin x cos y)`,
    /// z-independent with zero third component in 3D.
    #[serde(rename = "taylor_green_2d")]
    TaylorGreen2d {
        nu: f64,
    },
    /// `(A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)`.
    AbcFlow {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `P(amplitude) cos(mode . x + phase)` with the amplitude projected orthogonal to the mode.
    SingleMode {
        mode: Vec<i32>,
        amplitude: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `(A sin(m y), 0[, 0])`.
    Shear {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one_i")]
        mode: i32,
    },
    Zero {},
    /// Zero-mean solenoidal field with Gaussian coefficients on `1 <= |m|_inf <= kmax`,
    /// scaled to root-mean-square `amplitude`.
    Random {
        seed: u64,
        kmax: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

const NAMES: [&str; 6] = ["taylor_green_2d", "abc_flow", "single_mode", "shear", "zero", "random"];

impl Recipe {
    /// Parse a JSON recipe object, reporting unknown names distinctly from bad parameters.
    pub fn from_value(v: &serde_json::Value) -> Result<Recipe> {
        let name = v.get("name").and_then(|n| n.as_str()).ok_or_else(|| Error::InvalidArgument("recipe needs a string `name`".into()))?;
        if !NAMES.contains(&name) {
            return Err(Error::UnknownRecipe(name.to_string()));
        }
        let r: Recipe = serde_json::from_value(v.clone())?;
        let known = serde_json::to_value(&r)?;
        if let (Some(given), Some(known)) = (v.as_object(), known.as_object()) {
            if let Some(k) = given.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::InvalidArgument(format!("unknown field `{k}` in recipe `{name}`")));
            }
        }
        Ok(r)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Recipe::TaylorGreen2d { .. } => NAMES[0],
            Recipe::AbcFlow { .. } => NAMES[1],
            Recipe::SingleMode { .. } => NAMES[2],
            Recipe::Shear { .. } => NAMES[3],
            Recipe::Zero {} => NAMES[4],
            Recipe::Random { .. } => NAMES[5],
        }
    }

    /// Scalar time profile; every recipe is `time_factor(t) * profile(x)`.
    pub fn time_factor(&self, t: f64) -> f64 {
        match self {
            Recipe::TaylorGreen2d { nu } => (-2.0 * nu * t).exp(),
            _ => 1.0,
        }
    }

    /// Samples of the recipe at time `t`, evaluated at `space_scale * x`.
    pub fn evaluate(&self, grid: &Grid, t: f64, space_scale: f64) -> Result<VectorField> {
        let d = grid.dim();
        let amp = self.time_factor(t);
        let s = space_scale;
        let f = match self {
            Recipe::TaylorGreen2d { .. } => VectorField::from_fn(grid, |x| {
                let (x0, x1) = (s * x[0], s * x[1]);
                [-amp * x0.cos() * x1.sin(), amp * x0.sin() * x1.cos(), 0.0]
            }),
            Recipe::AbcFlow { a, b, c } => {
                if d != 3 {
                    return Err(Error::Dimension { expected: 3, got: d });
                }
                let (a, b, c) = (*a, *b, *c);
                VectorField::from_fn(grid, |x| {
                    let (x0, x1, x2) = (s * x[0], s * x[1], s * x[2]);
                    [a * x2.sin() + c * x1.cos(), b * x0.sin() + a * x2.cos(), c * x1.sin() + b * x0.cos()]
                })
            }
            Recipe::SingleMode { mode, amplitude, phase } => {
                if mode.len() != d || amplitude.len() != d {
                    return Err(Error::InvalidArgument(format!("single_mode needs {d} mode and amplitude entries")));
                }
                let m: Vec<f64> = mode.iter().map(|&k| k as f64).collect();
                let amp_p = project_orthogonal(amplitude, &m);
                let phase = *phase;
                VectorField::from_fn(grid, |x| {
                    let arg: f64 = (0..d).map(|a| m[a] * s * x[a]).sum::<f64>() + phase;
                    let c = arg.cos();
                    let mut out = [0.0; 3];
                    for a in 0..d {
                        out[a] = amp_p[a] * c;
                    }
                    out
                })
            }
            Recipe::Shear { amplitude, mode } => {
                let (a, m) = (*amplitude, *mode as f64);
                VectorField::from_fn(grid, |x| [a * (m * s * x[1]).sin(), 0.0, 0.0])
            }
            Recipe::Zero {} => VectorField::zeros(grid),
            Recipe::Random { seed, kmax, amplitude } => random_field(grid, *seed, *kmax, *amplitude, s),
        };
        Ok(f)
    }
}

fn project_orthogonal(a: &[f64], m: &[f64]) -> Vec<f64> {
    let m2: f64 = m.iter().map(|x| x * x).sum();
    if m2 == 0.0 {
        return a.to_vec();
    }
    let dot: f64 = a.iter().zip(m).map(|(x, y)| x * y).sum();
    a.iter().zip(m).map(|(x, y)| x - dot / m2 * y).collect()
}

fn random_field(grid: &Grid, seed: u64, kmax: u32, amplitude: f64, s: f64) -> VectorField {
    let d = grid.dim();
    let k = kmax as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut mean_sq = 0.0;
    let range: Vec<i32> = (-k..=k).collect();
    let mut modes: Vec<Vec<i32>> = vec![vec![]];
    for _ in 0..d {
        modes = modes.into_iter().flat_map(|p| range.iter().map(move |&r| [p.clone(), vec![r]].concat())).collect();
    }
    for m in modes {
        let first = m.iter().find(|&&x| x != 0);
        if first.is_none_or(|&x| x < 0) {
            continue;
        }
        let mf: Vec<f64> = m.iter().map(|&x| x as f64).collect();
        let m2: f64 = mf.iter().map(|x| x * x).sum();
        let w = 1.0 / (1.0 + m2);
        let mut draw = || -> Vec<f64> {
            let raw: Vec<f64> = (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    w * z
                })
                .collect();
            project_orthogonal(&raw, &mf)
        };
        let a = draw();
        let b = draw();
        mean_sq += 0.5 * (a.iter().map(|x| x * x).sum::<f64>() + b.iter().map(|x| x * x).sum::<f64>());
        terms.push((mf, a, b));
    }
    let scale = if mean_sq > 0.0 { amplitude / mean_sq.sqrt() } else { 0.0 };
    VectorField::from_fn(grid, |x| {
        let mut out = [0.0; 3];
        for (m, a, b) in &terms {
            let arg: f64 = (0..d).map(|i| m[i] * s * x[i]).sum();
            let (sn, cs) = arg.sin_cos();
            for i in 0..d {
                out[i] += scale * (a[i] * cs + b[i] * sn);
            }
        }
        out
    })
}

/// Samples of `recipe` at time `t` on `grid`.
pub fn analytic_field(recipe: &Recipe, grid: &Grid, t: f64) -> Result<VectorField> {
    recipe.evaluate(grid, t, 1.0)
}
