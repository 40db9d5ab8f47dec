//! Periodic-torus fields, spectral vector calculus and analytic recipes.

mod fft;
mod grid;
pub mod io;
mod ops;
mod recipes;
mod series;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) use fft::{ctx, SpectralCtx};
pub use grid::Grid;
pub use ops::*;
pub use recipes::{analytic_field, Recipe};
pub use series::{evaluate_at, FourierSeries};

fn check_finite(data: &[f64]) -> Result<()> {
    if let Some(x) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample {x}")));
    }
    Ok(())
}

/// Real scalar samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!("{} samples for a grid of {}", data.len(), grid.len())));
        }
        check_finite(&data)?;
        Ok(ScalarField { grid, data })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ScalarField { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        ScalarField { grid: grid.clone(), data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn scale(&self, s: f64) -> Self {
        ScalarField { grid: self.grid.clone(), data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ScalarField { grid: self.grid.clone(), data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { grid: self.grid.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

/// Real vector samples on a grid, one array per component.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::Dimension { expected: grid.dim(), got: comps.len() });
        }
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::InvalidArgument(format!("component with {} samples for a grid of {}", c.len(), grid.len())));
            }
            check_finite(c)?;
        }
        Ok(VectorField { grid, comps })
    }

    pub(crate) fn from_parts(grid: Grid, comps: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(comps.len(), grid.dim());
        VectorField { grid, comps }
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField { grid: grid.clone(), comps: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let d = grid.dim();
        let mut comps = vec![Vec::with_capacity(grid.len()); d];
        for i in 0..grid.len() {
            let v = f(grid.position(i));
            for a in 0..d {
                comps[a].push(v[a]);
            }
        }
        VectorField { grid: grid.clone(), comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn into_comps(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Vector sample at a flat index, zero padded to three entries.
    pub fn at(&self, flat: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.comps.iter().enumerate() {
            v[a] = c[flat];
        }
        v
    }

    pub fn scale(&self, s: f64) -> Self {
        let comps = self.comps.iter().map(|c| c.iter().map(|x| x * s).collect()).collect();
        VectorField { grid: self.grid.clone(), comps }
    }

    /// `a*self + b*other`.
    pub fn lincomb(&self, a: f64, other: &VectorField, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let comps = self.comps.iter().zip(&other.comps).map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()).collect();
        Ok(VectorField { grid: self.grid.clone(), comps })
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest pointwise Euclidean length.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Lift a 2D field to a z-independent 3D field with zero third component.
    pub fn embed_3d(&self, nz: usize, lz: f64) -> Result<Self> {
        if self.dim() != 2 {
            return Err(Error::Dimension { expected: 2, got: self.dim() });
        }
        let s = self.grid.sizes();
        let b = self.grid.box_len();
        let g3 = Grid::new(&[s[0], s[1], nz], &[b[0], b[1], lz])?;
        let mut comps = vec![Vec::with_capacity(g3.len()); 3];
        for i in 0..self.grid.len() {
            for _ in 0..nz {
                comps[0].push(self.comps[0][i]);
                comps[1].push(self.comps[1][i]);
                comps[2].push(0.0);
            }
        }
        Ok(VectorField { grid: g3, comps })
    }
}

/// Fourier coefficients of a vector field, normalized so a constant maps to its value.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comps(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    pub(crate) fn from_parts(grid: Grid, comps: Vec<Vec<Complex64>>) -> Self {
        SpectralField { grid, comps }
    }

    pub fn coefficient(&self, comp: usize, idx: &[usize]) -> Complex64 {
        self.comps[comp][self.grid.flatten(idx)]
    }

    /// Largest `|c(k) - conj(c(-k))|` over all modes and components.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let mut worst: f64 = 0.0;
        for flat in 0..g.len() {
            let idx = g.unflatten(flat);
            let mut neg = [0usize; 3];
            for a in 0..d {
                neg[a] = (g.sizes()[a] - idx[a]) % g.sizes()[a];
            }
            let j = g.flatten(&neg[..d]);
            for c in &self.comps {
                worst = worst.max((c[flat] - c[j].conj()).norm());
            }
        }
        worst
    }

    pub fn inverse(&self) -> VectorField {
        let cx = ctx(&self.grid);
        let comps = self.comps.iter().map(|c| cx.inverse_real(c)).collect();
        VectorField { grid: self.grid.clone(), comps }
    }
}
