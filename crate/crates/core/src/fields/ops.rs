use num_complex::Complex64;

use super::{ctx, Grid, ScalarField, SpectralCtx, SpectralField, VectorField};
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Either half of a curl: the scalar rot in 2D, the vector curl in 3D.
#[derive(Clone, Debug, PartialEq)]
pub enum Curl {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl Curl {
    pub fn into_vector(self) -> Option<VectorField> {
        match self {
            Curl::Vector(v) => Some(v),
            Curl::Scalar(_) => None,
        }
    }

    pub fn into_scalar(self) -> Option<ScalarField> {
        match self {
            Curl::Scalar(s) => Some(s),
            Curl::Vector(_) => None,
        }
    }
}

pub(crate) fn spectral_comps(f: &VectorField) -> Vec<Vec<Complex64>> {
    let cx = ctx(f.grid());
    f.comps().iter().map(|c| cx.forward_real(c)).collect()
}

/// Multiply by `i k_axis`.
pub(crate) fn dhat(cx: &SpectralCtx, c: &[Complex64], axis: usize) -> Vec<Complex64> {
    c.iter().zip(&cx.k).map(|(z, k)| z * I * k[axis]).collect()
}

/// Spectral curl of 3D coefficients.
pub(crate) fn curl_hat(cx: &SpectralCtx, c: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = cx.grid.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; 3];
    for i in 0..n {
        let k = &cx.k[i];
        let (x, y, z) = (c[0][i], c[1][i], c[2][i]);
        out[0][i] = I * (k[1] * z - k[2] * y);
        out[1][i] = I * (k[2] * x - k[0] * z);
        out[2][i] = I * (k[0] * y - k[1] * x);
    }
    out
}

/// Spectral 2D rot `d1 f2 - d2 f1`.
pub(crate) fn rot_hat(cx: &SpectralCtx, c: &[Vec<Complex64>]) -> Vec<Complex64> {
    (0..cx.grid.len())
        .map(|i| {
            let k = &cx.k[i];
            I * (k[0] * c[1][i] - k[1] * c[0][i])
        })
        .collect()
}

pub(crate) fn max_div_hat(cx: &SpectralCtx, c: &[Vec<Complex64>]) -> f64 {
    let mut div: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); cx.grid.len()];
    for (a, comp) in c.iter().enumerate() {
        for i in 0..div.len() {
            div[i] += I * cx.k[i][a] * comp[i];
        }
    }
    cx.inverse_real(&div).iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn inverse_comps(cx: &SpectralCtx, c: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    c.iter().map(|x| cx.inverse_real(x)).collect()
}

pub fn transform_forward(f: &VectorField) -> SpectralField {
    SpectralField::from_parts(f.grid().clone(), spectral_comps(f))
}

pub fn transform_inverse(s: &SpectralField) -> VectorField {
    s.inverse()
}

/// Fourier coefficients of a scalar field.
pub fn scalar_forward(f: &ScalarField) -> Vec<Complex64> {
    ctx(f.grid()).forward_real(f.data())
}

pub fn helmholtz_project(f: &VectorField) -> VectorField {
    let cx = ctx(f.grid());
    let mut c = spectral_comps(f);
    cx.project(&mut c);
    VectorField::from_parts(f.grid().clone(), inverse_comps(&cx, &c))
}

/// Zero every mode outside the 2/3 band.
pub fn dealias(f: &VectorField) -> VectorField {
    let cx = ctx(f.grid());
    let mut c = spectral_comps(f);
    c.iter_mut().for_each(|x| cx.dealias(x));
    VectorField::from_parts(f.grid().clone(), inverse_comps(&cx, &c))
}

pub fn divergence(f: &VectorField) -> ScalarField {
    let cx = ctx(f.grid());
    let c = spectral_comps(f);
    let mut div = vec![Complex64::new(0.0, 0.0); f.grid().len()];
    for (a, comp) in c.iter().enumerate() {
        for i in 0..div.len() {
            div[i] += I * cx.k[i][a] * comp[i];
        }
    }
    ScalarField::new(f.grid().clone(), cx.inverse_real(&div)).expect("finite divergence")
}

/// Max-norm of the spectral divergence.
pub fn max_divergence(f: &VectorField) -> f64 {
    let cx = ctx(f.grid());
    max_div_hat(&cx, &spectral_comps(f))
}

pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let cx = ctx(f.grid());
    let c = cx.forward_real(f.data());
    ScalarField::new(f.grid().clone(), cx.inverse_real(&dhat(&cx, &c, axis))).expect("finite")
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let cx = ctx(f.grid());
    let c = cx.forward_real(f.data());
    let comps = (0..f.grid().dim()).map(|a| cx.inverse_real(&dhat(&cx, &c, a))).collect();
    VectorField::from_parts(f.grid().clone(), comps)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let cx = ctx(f.grid());
    let c = cx.forward_real(f.data());
    let l: Vec<Complex64> = c.iter().zip(&cx.k2).map(|(z, k2)| -z * k2).collect();
    ScalarField::new(f.grid().clone(), cx.inverse_real(&l)).expect("finite")
}

pub fn vector_laplacian(f: &VectorField) -> VectorField {
    let cx = ctx(f.grid());
    let comps = spectral_comps(f)
        .iter()
        .map(|c| {
            let l: Vec<Complex64> = c.iter().zip(&cx.k2).map(|(z, k2)| -z * k2).collect();
            cx.inverse_real(&l)
        })
        .collect();
    VectorField::from_parts(f.grid().clone(), comps)
}

/// Heat semigroup `exp(nu t Laplacian)` applied per mode.
pub fn heat(f: &VectorField, nu: f64, t: f64) -> VectorField {
    let cx = ctx(f.grid());
    let comps = spectral_comps(f)
        .iter()
        .map(|c| {
            let h: Vec<Complex64> = c.iter().zip(&cx.k2).map(|(z, k2)| z * (-nu * k2 * t).exp()).collect();
            cx.inverse_real(&h)
        })
        .collect();
    VectorField::from_parts(f.grid().clone(), comps)
}

/// Vector curl in 3D, scalar rot `d1 f2 - d2 f1` in 2D.
pub fn curl(f: &VectorField) -> Curl {
    let cx = ctx(f.grid());
    let c = spectral_comps(f);
    if f.dim() == 3 {
        let comps = inverse_comps(&cx, &curl_hat(&cx, &c));
        Curl::Vector(VectorField::from_parts(f.grid().clone(), comps))
    } else {
        let r = cx.inverse_real(&rot_hat(&cx, &c));
        Curl::Scalar(ScalarField::new(f.grid().clone(), r).expect("finite"))
    }
}

pub fn curl3(f: &VectorField) -> Result<VectorField> {
    if f.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: f.dim() });
    }
    Ok(curl(f).into_vector().expect("3D curl"))
}

pub fn rot2(f: &VectorField) -> Result<ScalarField> {
    if f.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: f.dim() });
    }
    Ok(curl(f).into_scalar().expect("2D rot"))
}

fn mean_tolerance(f: &VectorField) -> f64 {
    1e-12 * (1.0 + f.max_abs())
}

/// Zero-mean divergence-free `g` with `curl g = f`.
pub fn curl_inverse(f: &VectorField) -> Result<VectorField> {
    if f.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: f.dim() });
    }
    let cx = ctx(f.grid());
    let c = spectral_comps(f);
    let mean = c.iter().map(|x| x[0].norm()).fold(0.0, f64::max);
    if mean > mean_tolerance(f) {
        return Err(Error::NonZeroMean(mean));
    }
    let div = max_div_hat(&cx, &c);
    if div > 1e-8 {
        return Err(Error::NotDivergenceFree(div));
    }
    let mut g = curl_hat(&cx, &c);
    for comp in g.iter_mut() {
        for (z, &k2) in comp.iter_mut().zip(&cx.k2) {
            *z = if k2 == 0.0 { Complex64::new(0.0, 0.0) } else { *z / k2 };
        }
    }
    Ok(VectorField::from_parts(f.grid().clone(), inverse_comps(&cx, &g)))
}

/// `(-d2 phi, d1 phi)`.
pub fn perp_grad(phi: &ScalarField) -> Result<VectorField> {
    if phi.grid().dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: phi.grid().dim() });
    }
    let cx = ctx(phi.grid());
    let c = cx.forward_real(phi.data());
    let v1: Vec<f64> = cx.inverse_real(&dhat(&cx, &c, 1)).iter().map(|x| -x).collect();
    let v2 = cx.inverse_real(&dhat(&cx, &c, 0));
    Ok(VectorField::from_parts(phi.grid().clone(), vec![v1, v2]))
}

/// Stream function `phi` with `perp_grad(phi) = f` for a zero-mean divergence-free 2D field.
pub fn stream_function(f: &VectorField) -> Result<ScalarField> {
    if f.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: f.dim() });
    }
    let cx = ctx(f.grid());
    let c = spectral_comps(f);
    let w = rot_hat(&cx, &c);
    let phi: Vec<Complex64> = w.iter().zip(&cx.k2).map(|(z, &k2)| if k2 == 0.0 { Complex64::new(0.0, 0.0) } else { -z / k2 }).collect();
    ScalarField::new(f.grid().clone(), cx.inverse_real(&phi))
}

/// Uniform quadrature of `sum_k f^k g^k` over the box.
pub fn inner_product_h(f: &VectorField, g: &VectorField) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    let s: f64 = f.comps().iter().zip(g.comps()).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum();
    Ok(s * f.grid().cell_volume())
}

pub fn norm_h(f: &VectorField) -> f64 {
    inner_product_h(f, f).expect("same grid").sqrt()
}

/// Parseval form of the H inner product, `|box| * sum Re(f_k conj(g_k))`.
pub fn inner_product_spectral(f: &SpectralField, g: &SpectralField) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    let s: f64 = f.comps().iter().zip(g.comps()).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum::<f64>()).sum();
    Ok(s * f.grid().volume())
}

fn check_order(k: i32) -> Result<()> {
    if (-1..=2).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("norm order {k} not in -1..=2")))
    }
}

fn weighted_norm(f: &VectorField, weight: impl Fn(f64) -> f64) -> f64 {
    let cx = ctx(f.grid());
    let c = spectral_comps(f);
    let mut s = 0.0;
    for comp in &c {
        for (z, &k2) in comp.iter().zip(&cx.k2) {
            s += weight(k2) * z.norm_sqr();
        }
    }
    (s * f.grid().volume()).sqrt()
}

/// Inhomogeneous norm with Fourier weight `(1 + |k|^2)^k`.
pub fn sobolev_norm(f: &VectorField, k: i32) -> Result<f64> {
    check_order(k)?;
    Ok(weighted_norm(f, |k2| (1.0 + k2).powi(k)))
}

/// Homogeneous norm with Fourier weight `|k|^(2k)`; order -1 requires zero mean.
pub fn homogeneous_norm(f: &VectorField, k: i32) -> Result<f64> {
    check_order(k)?;
    if k < 0 {
        let c = spectral_comps(f);
        let mean = c.iter().map(|x| x[0].norm()).fold(0.0, f64::max);
        if mean > mean_tolerance(f) {
            return Err(Error::NonZeroMean(mean));
        }
    }
    Ok(weighted_norm(f, |k2| {
        if k == 0 {
            1.0
        } else if k2 == 0.0 {
            0.0
        } else {
            k2.powi(k)
        }
    }))
}

/// Pointwise cross product of two 3D fields.
pub fn cross(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    a.grid().check_same(b.grid())?;
    if a.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: a.dim() });
    }
    let n = a.grid().len();
    let (x, y) = (a.comps(), b.comps());
    let mut out = vec![vec![0.0; n]; 3];
    for i in 0..n {
        out[0][i] = x[1][i] * y[2][i] - x[2][i] * y[1][i];
        out[1][i] = x[2][i] * y[0][i] - x[0][i] * y[2][i];
        out[2][i] = x[0][i] * y[1][i] - x[1][i] * y[0][i];
    }
    Ok(VectorField::from_parts(a.grid().clone(), out))
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Grid of the same samples on a box scaled by `factor` (helper for scaling maps).
pub fn rebox(f: &VectorField, factor: f64, value_scale: f64) -> Result<VectorField> {
    let g: Grid = f.grid().scaled(factor)?;
    Ok(VectorField::from_parts(g, f.scale(value_scale).into_comps()))
}
