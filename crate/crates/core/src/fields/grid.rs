use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform periodic grid on the box `[0, L_0) x ... x [0, L_{d-1})`.
///
/// Samples are stored row-major with axis 0 slowest. Sample `i_a` on axis
/// `a` sits at `x_a = i_a * L_a / N_a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    sizes: Vec<usize>,
    #[serde(rename = "box")]
    box_len: Vec<f64>,
}

impl Grid {
    pub fn new(sizes: &[usize], box_len: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&sizes.len()) {
            return Err(Error::InvalidGrid(format!("dimension {} not in {{2,3}}", sizes.len())));
        }
        if box_len.len() != sizes.len() {
            return Err(Error::InvalidGrid(format!("{} sizes but {} box lengths", sizes.len(), box_len.len())));
        }
        for &n in sizes {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("size {n} must be even and >= 8")));
            }
        }
        for &l in box_len {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("box length {l} must be positive")));
            }
        }
        Ok(Grid { sizes: sizes.to_vec(), box_len: box_len.to_vec() })
    }

    /// Grid of `n` points per axis on the `2*pi`-periodic box.
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Grid::new(&vec![n; dim], &vec![2.0 * PI; dim])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn box_len(&self) -> &[f64] {
        &self.box_len
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strides(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        let d = self.dim();
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.sizes[a + 1];
        }
        s
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_len[axis] / self.sizes[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.box_len.iter().product()
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.sizes[a];
            flat /= self.sizes[a];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in 0..self.dim() {
            flat = flat * self.sizes[a] + idx[a];
        }
        flat
    }

    /// Physical position of a flat sample index.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = idx[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Fundamental wavenumber `2*pi/L` of an axis.
    pub fn kfactor(&self, axis: usize) -> f64 {
        2.0 * PI / self.box_len[axis]
    }

    /// Signed integer mode of FFT index `m`; the Nyquist index maps to `+N/2`.
    pub fn signed_mode(&self, axis: usize, m: usize) -> i64 {
        let n = self.sizes[axis];
        if m <= n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        }
    }

    pub fn is_nyquist(&self, axis: usize, m: usize) -> bool {
        m == self.sizes[axis] / 2
    }

    /// Wavenumber used for spectral differentiation (zero at Nyquist).
    pub fn deriv_wavenumber(&self, axis: usize, m: usize) -> f64 {
        if self.is_nyquist(axis, m) {
            0.0
        } else {
            self.signed_mode(axis, m) as f64 * self.kfactor(axis)
        }
    }

    /// Largest resolved angular wavenumber over all axes.
    pub fn k_max(&self) -> f64 {
        (0..self.dim()).map(|a| self.kfactor(a) * (self.sizes[a] / 2) as f64).fold(0.0, f64::max)
    }

    /// Same sample counts on a box scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let b: Vec<f64> = self.box_len.iter().map(|l| l * factor).collect();
        Grid::new(&self.sizes, &b)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?}/{:?} vs {:?}/{:?}", self.sizes, self.box_len, other.sizes, other.box_len)))
        }
    }

    pub(crate) fn cache_key(&self) -> Vec<u64> {
        self.sizes.iter().map(|&n| n as u64).chain(self.box_len.iter().map(|l| l.to_bits())).collect()
    }
}
