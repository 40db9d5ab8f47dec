//! Cached multi-dimensional complex FFTs and wavenumber tables.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::grid::Grid;

pub(crate) struct SpectralCtx {
    pub grid: Grid,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    /// Differentiation wavevector per flat index.
    pub k: Vec<[f64; 3]>,
    pub k2: Vec<f64>,
    /// 2/3-rule mask per flat index.
    pub keep: Vec<bool>,
}

type Cache = Mutex<HashMap<Vec<u64>, Arc<SpectralCtx>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn ctx(grid: &Grid) -> Arc<SpectralCtx> {
    let key = grid.cache_key();
    let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
    map.entry(key).or_insert_with(|| Arc::new(SpectralCtx::build(grid))).clone()
}

impl SpectralCtx {
    fn build(grid: &Grid) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let d = grid.dim();
        let fwd = (0..d).map(|a| planner.plan_fft_forward(grid.sizes()[a])).collect();
        let inv = (0..d).map(|a| planner.plan_fft_inverse(grid.sizes()[a])).collect();
        let n = grid.len();
        let mut k = Vec::with_capacity(n);
        let mut k2 = Vec::with_capacity(n);
        let mut keep = Vec::with_capacity(n);
        for flat in 0..n {
            let idx = grid.unflatten(flat);
            let mut kv = [0.0; 3];
            let mut ok = true;
            for a in 0..d {
                kv[a] = grid.deriv_wavenumber(a, idx[a]);
                let m = grid.signed_mode(a, idx[a]).unsigned_abs() as usize;
                if 3 * m > grid.sizes()[a] {
                    ok = false;
                }
            }
            k2.push(kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]);
            k.push(kv);
            keep.push(ok);
        }
        SpectralCtx { grid: grid.clone(), fwd, inv, k, k2, keep }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let n = self.grid.len();
        assert_eq!(data.len(), n);
        let strides = self.grid.strides();
        let d = self.grid.dim();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for a in 0..d {
            let len = self.grid.sizes()[a];
            let plan = &plans[a];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            let stride = strides[a];
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = n / (len * stride);
            for o in 0..outer {
                for j in 0..stride {
                    let base = o * len * stride + j;
                    let line = (o * stride + j) * len;
                    for i in 0..len {
                        buf[line + i] = data[base + i * stride];
                    }
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for o in 0..outer {
                for j in 0..stride {
                    let base = o * len * stride + j;
                    let line = (o * stride + j) * len;
                    for i in 0..len {
                        data[base + i * stride] = buf[line + i];
                    }
                }
            }
        }
    }

    /// Forward transform normalized so a constant `c` maps to a zero mode `c`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
        let s = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    pub fn inverse_real(&self, coef: &[Complex64]) -> Vec<f64> {
        let mut c = coef.to_vec();
        self.inverse(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }

    pub fn dealias(&self, coef: &mut [Complex64]) {
        for (z, &k) in coef.iter_mut().zip(&self.keep) {
            if !k {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Helmholtz projection `I - k k^T / |k|^2` applied in place to `dim` coefficient arrays.
    pub fn project(&self, comps: &mut [Vec<Complex64>]) {
        let d = comps.len();
        for i in 0..self.grid.len() {
            let k2 = self.k2[i];
            if k2 == 0.0 {
                continue;
            }
            let k = &self.k[i];
            let mut dot = Complex64::new(0.0, 0.0);
            for a in 0..d {
                dot += comps[a][i] * k[a];
            }
            let s = dot / k2;
            for a in 0..d {
                comps[a][i] -= s * k[a];
            }
        }
    }
}
