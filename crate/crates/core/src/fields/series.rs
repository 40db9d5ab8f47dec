//! Off-grid evaluation by direct Fourier-mode summation.

use num_complex::Complex64;
use std::cell::RefCell;

use super::{ctx, Grid, ScalarField, VectorField};

thread_local! {
    static TABLES: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

/// Sparse real Fourier series of a sampled field.
///
/// Conjugate mode pairs are folded into one term with weight 2, modes whose
/// coefficients fall below the drop tolerance are skipped, and Nyquist
/// factors use `cos(N/2 * theta)` so the series stays real off the grid.
#[derive(Clone, Debug)]
pub struct FourierSeries {
    dim: usize,
    ncomp: usize,
    box_len: [f64; 3],
    kfac: [f64; 3],
    half: [usize; 3],
    modes: Vec<[i32; 3]>,
    nyq: Vec<bool>,
    kd: Vec<[f64; 3]>,
    coef: Vec<Complex64>,
}

impl FourierSeries {
    /// Series from coefficient arrays on `grid` (normalized forward transform).
    pub(crate) fn from_coefficients(grid: &Grid, comps: &[Vec<Complex64>], rel_tol: f64) -> Self {
        let d = grid.dim();
        let ncomp = comps.len();
        let cmax = comps.iter().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
        let drop = rel_tol * cmax;
        let mut box_len = [1.0; 3];
        let mut kfac = [0.0; 3];
        for a in 0..d {
            box_len[a] = grid.box_len()[a];
            kfac[a] = grid.kfactor(a);
        }
        let mut s = FourierSeries {
            dim: d,
            ncomp,
            box_len,
            kfac,
            half: [0; 3],
            modes: Vec::new(),
            nyq: Vec::new(),
            kd: Vec::new(),
            coef: Vec::new(),
        };
        for flat in 0..grid.len() {
            if comps.iter().all(|c| c[flat].norm() <= drop) {
                continue;
            }
            let idx = grid.unflatten(flat);
            let mut partner = [0usize; 3];
            for a in 0..d {
                let n = grid.sizes()[a];
                partner[a] = (n - idx[a]) % n;
            }
            let pflat = grid.flatten(&partner[..d]);
            if pflat < flat {
                continue;
            }
            let weight = if pflat == flat { 1.0 } else { 2.0 };
            let mut m = [0i32; 3];
            let mut kd = [0.0; 3];
            let mut nyq = false;
            for a in 0..d {
                m[a] = grid.signed_mode(a, idx[a]) as i32;
                kd[a] = grid.deriv_wavenumber(a, idx[a]);
                nyq |= grid.is_nyquist(a, idx[a]);
                s.half[a] = s.half[a].max(m[a].unsigned_abs() as usize);
            }
            s.modes.push(m);
            s.kd.push(kd);
            s.nyq.push(nyq);
            for c in comps {
                s.coef.push(c[flat] * weight);
            }
        }
        s
    }

    pub fn from_vector(f: &VectorField) -> Self {
        Self::from_vector_tol(f, 1e-15)
    }

    pub fn from_vector_tol(f: &VectorField, rel_tol: f64) -> Self {
        let cx = ctx(f.grid());
        let c: Vec<Vec<Complex64>> = f.comps().iter().map(|x| cx.forward_real(x)).collect();
        Self::from_coefficients(f.grid(), &c, rel_tol)
    }

    pub fn from_scalar(f: &ScalarField) -> Self {
        let cx = ctx(f.grid());
        Self::from_coefficients(f.grid(), &[cx.forward_real(f.data())], 1e-15)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Fill `t` with `exp(i m k_a x_a)` for `|m| <= half[a]`, axis blocks back to back.
    fn tables(&self, x: &[f64], t: &mut Vec<Complex64>) -> [usize; 3] {
        let mut off = [0usize; 3];
        let mut total = 0;
        for a in 0..self.dim {
            off[a] = total + self.half[a];
            total += 2 * self.half[a] + 1;
        }
        t.resize(total, Complex64::new(0.0, 0.0));
        for a in 0..self.dim {
            let h = self.half[a];
            let c = off[a];
            let xa = x[a].rem_euclid(self.box_len[a]);
            let e1 = Complex64::from_polar(1.0, self.kfac[a] * xa);
            t[c] = Complex64::new(1.0, 0.0);
            for m in 1..=h {
                let z = t[c + m - 1] * e1;
                t[c + m] = z;
                t[c - m] = z.conj();
            }
        }
        off
    }

    #[inline]
    fn basis(&self, j: usize, t: &[Complex64], off: &[usize; 3]) -> Complex64 {
        let m = &self.modes[j];
        let mut e = Complex64::new(1.0, 0.0);
        if self.nyq[j] {
            for a in 0..self.dim {
                let z = t[(off[a] as i64 + m[a] as i64) as usize];
                e *= if m[a] != 0 && self.kd[j][a] == 0.0 { Complex64::new(z.re, 0.0) } else { z };
            }
        } else {
            for a in 0..self.dim {
                e *= t[(off[a] as i64 + m[a] as i64) as usize];
            }
        }
        e
    }

    /// Values of all components at `x`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        TABLES.with(|cell| {
            let t = &mut *cell.borrow_mut();
            let off = self.tables(x, t);
            out[..self.ncomp].iter_mut().for_each(|v| *v = 0.0);
            for j in 0..self.modes.len() {
                let e = self.basis(j, t, &off);
                for c in 0..self.ncomp {
                    let z = self.coef[j * self.ncomp + c];
                    out[c] += z.re * e.re - z.im * e.im;
                }
            }
        })
    }

    /// Values and gradients; `grad[c][a]` is the derivative of component `c` along axis `a`.
    pub fn eval_grad(&self, x: &[f64], val: &mut [f64], grad: &mut [[f64; 3]]) {
        TABLES.with(|cell| {
            let t = &mut *cell.borrow_mut();
            let off = self.tables(x, t);
            val[..self.ncomp].iter_mut().for_each(|v| *v = 0.0);
            grad[..self.ncomp].iter_mut().for_each(|g| *g = [0.0; 3]);
            for j in 0..self.modes.len() {
                let e = self.basis(j, t, &off);
                let kd = &self.kd[j];
                for c in 0..self.ncomp {
                    let z = self.coef[j * self.ncomp + c] * e;
                    val[c] += z.re;
                    for a in 0..self.dim {
                        grad[c][a] -= kd[a] * z.im;
                    }
                }
            }
        })
    }

    pub fn eval_many(&self, points: &[[f64; 3]]) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|p| {
                let mut v = vec![0.0; self.ncomp];
                self.eval(p, &mut v);
                v
            })
            .collect()
    }
}

/// Truncated Fourier-series values of `f` at arbitrary points (wrapped into the box).
pub fn evaluate_at(f: &VectorField, points: &[[f64; 3]]) -> Vec<Vec<f64>> {
    FourierSeries::from_vector(f).eval_many(points)
}
