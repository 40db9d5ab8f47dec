//! so(3)/SO(3) calculus: hat map, exponential, closed-form BCH, the
//! rotation-field correction term and residuals of the 3D representation system.

use nalgebra::{Matrix3, Vector3};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{self, FourierSeries, Grid, ScalarField, VectorField};

/// Below this angle every `sin|a|/|a|`-type coefficient uses its Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-6;

pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Inverse of [`hat`]; rejects matrices that are not antisymmetric to `1e-12`.
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let defect = (m + m.transpose()).abs().max();
    if defect > 1e-12 * (1.0 + m.abs().max()) {
        return Err(Error::NotAntisymmetric(defect));
    }
    Ok(Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5)
}

/// `sin t / t`.
fn sinc(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
    } else {
        t.sin() / t
    }
}

/// `(1 - cos t) / t^2`.
fn cosc(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0
    } else {
        let s = (0.5 * t).sin();
        2.0 * s * s / (t * t)
    }
}

/// `(t - sin t) / t^3`.
fn sinc3(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
    } else {
        t_minus_sin(t) / (t * t * t)
    }
}

/// `t - sin t` without cancellation for small `t`.
fn t_minus_sin(t: f64) -> f64 {
    if t < 0.5 {
        let t2 = t * t;
        let mut term = t * t2 / 6.0;
        let mut sum = term;
        for k in 1..10 {
            let n = (2 * k + 3) as f64;
            term *= -t2 / ((n - 1.0) * n);
            sum += term;
        }
        sum
    } else {
        t - t.sin()
    }
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Largest deviation of `R^T R` from `I` and of `det R` from 1.
    pub fn defect(&self) -> f64 {
        let o = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        o.max((self.0.determinant() - 1.0).abs())
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.0 * x
    }
}

/// Rodrigues formula `I + sin|a|/|a| a^ + (1 - cos|a|)/|a|^2 a^2`.
pub fn exp_so3(a: &Vector3<f64>) -> Rotation {
    let t = a.norm();
    let h = hat(a);
    Rotation(Matrix3::identity() + h * sinc(t) + h * h * cosc(t))
}

/// Principal logarithm, `|result| <= pi`.
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let m = r.0;
    let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let w = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5;
    let s = w.norm();
    let t = s.atan2(c);
    if c > -0.99 {
        return w / sinc(t);
    }
    // near pi the antisymmetric part is tiny; read the axis off the symmetric part
    let b = (m + m.transpose()) * 0.5 - Matrix3::identity() * c;
    let col = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).expect("three columns");
    let mut axis = b.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * t
}

/// Result of [`bch`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bch {
    pub value: Vector3<f64>,
    /// Set when rounding pushed the arcsine argument outside `[-1, 1]`.
    pub clamped: bool,
}

/// Closed-form `log(exp(u^) exp(v^))` as `alpha u + beta v + gamma (u x v)`.
///
/// Requires `|u|, |v| < pi - 1e-6`.
pub fn bch(u: &Vector3<f64>, v: &Vector3<f64>) -> Result<Bch> {
    let bound = std::f64::consts::PI - 1e-6;
    let (th, ph) = (u.norm(), v.norm());
    if th >= bound || ph >= bound {
        return Err(Error::Branch(format!("|u| = {th}, |v| = {ph} must stay below pi - 1e-6")));
    }
    let uv = u.dot(v);
    let (s_t, s_p) = (sinc(th), sinc(ph));
    // sin^2(t/2)/t^2
    let (h_t, h_p) = (cosc(th) / 2.0, cosc(ph) / 2.0);
    let (c_t, c_p) = ((0.5 * th).cos(), (0.5 * ph).cos());
    // a1/theta, b1/phi, c1/(theta phi)
    let a1 = s_t * c_p * c_p - s_p * h_t * uv;
    let b1 = s_p * c_t * c_t - s_t * h_p * uv;
    let c1 = 0.5 * s_t * s_p - 2.0 * h_t * h_p * uv;
    let sv = u * a1 + v * b1 + u.cross(v) * c1;
    let mut d = sv.norm();
    let clamped = d > 1.0;
    if clamped {
        d = 1.0;
    }
    // cos of the composed angle from the scalar quaternion part
    let q0 = c_t * c_p - (0.5 * th).sin() * (0.5 * ph).sin() * if th > 0.0 && ph > 0.0 { uv / (th * ph) } else { 0.0 };
    let cos_psi = 2.0 * q0 * q0 - 1.0;
    let asin = d.asin();
    let psi = if cos_psi >= 0.0 { asin } else { std::f64::consts::PI - asin };
    let f = if d < 1e-300 {
        1.0
    } else if d < SMALL_ANGLE && cos_psi >= 0.0 {
        1.0 + d * d / 6.0
    } else {
        psi / d
    };
    Ok(Bch { value: sv * f, clamped })
}

/// Commutator `[A, B] = AB - BA`.
pub fn commutator(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
    a * b - b * a
}

type VecFn = dyn Fn(&[f64; 3]) -> Vector3<f64> + Send + Sync;
type JacFn = dyn Fn(&[f64; 3]) -> Matrix3<f64> + Send + Sync;

/// A smooth axis-angle field `x -> a(x)`, with `sigma(x) = exp(a(x)^)`.
#[derive(Clone)]
pub enum RotationField {
    Constant(Vector3<f64>),
    /// Value and Jacobian `J[(i, k)] = d a_i / d x_k`.
    Analytic {
        value: Arc<VecFn>,
        jacobian: Arc<JacFn>,
    },
    /// Three-component band-limited samples, evaluated spectrally.
    Sampled(Arc<FourierSeries>),
}

impl fmt::Debug for RotationField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationField::Constant(a) => write!(f, "Constant({a:?})"),
            RotationField::Analytic { .. } => write!(f, "Analytic"),
            RotationField::Sampled(s) => write!(f, "Sampled({} modes)", s.n_modes()),
        }
    }
}

impl RotationField {
    pub fn analytic(
        value: impl Fn(&[f64; 3]) -> Vector3<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64; 3]) -> Matrix3<f64> + Send + Sync + 'static,
    ) -> Self {
        RotationField::Analytic { value: Arc::new(value), jacobian: Arc::new(jacobian) }
    }

    /// Samples with three components (any grid dimension).
    pub fn sampled(a: &VectorField) -> Result<Self> {
        if a.dim() != 3 {
            return Err(Error::Dimension { expected: 3, got: a.dim() });
        }
        Ok(RotationField::Sampled(Arc::new(FourierSeries::from_vector(a))))
    }

    /// `a(x)` and its Jacobian.
    pub fn eval(&self, x: &[f64; 3]) -> (Vector3<f64>, Matrix3<f64>) {
        match self {
            RotationField::Constant(a) => (*a, Matrix3::zeros()),
            RotationField::Analytic { value, jacobian } => (value(x), jacobian(x)),
            RotationField::Sampled(s) => {
                let mut v = [0.0; 3];
                let mut g = [[0.0; 3]; 3];
                s.eval_grad(x, &mut v, &mut g);
                (Vector3::from(v), Matrix3::from_fn(|i, k| g[i][k]))
            }
        }
    }

    pub fn sigma(&self, x: &[f64; 3]) -> Rotation {
        exp_so3(&self.eval(x).0)
    }
}

/// Axis form of `sigma^T d sigma` for `sigma = exp(a^)` given `a` and a directional derivative `da`.
pub fn correction_vector(a: &Vector3<f64>, da: &Vector3<f64>) -> Vector3<f64> {
    let t = a.norm();
    if t < SMALL_ANGLE {
        let axd = a.cross(da);
        return da - axd * cosc(t) + a.cross(&axd) * sinc3(t);
    }
    let b = a / t;
    let dt = b.dot(da);
    let db = (da - b * dt) / t;
    let s = (0.5 * t).sin();
    let cos_m1 = -2.0 * s * s;
    b.cross(&db) * cos_m1 + db * (-t_minus_sin(t)) + da
}

/// Axis form of `d sigma sigma^T`, the generator of the rotation's variation in the fixed frame.
pub fn left_correction_vector(a: &Vector3<f64>, da: &Vector3<f64>) -> Vector3<f64> {
    correction_vector(&(-a), da)
}

/// `sigma^T d_k sigma` at `x`, antisymmetric by construction.
pub fn correction_term(field: &RotationField, x: &[f64; 3], k: usize) -> Matrix3<f64> {
    let (a, j) = field.eval(x);
    hat(&correction_vector(&a, &j.column(k).into_owned()))
}

fn scalar_grad(f: &ScalarField) -> VectorField {
    fields::gradient(f)
}

/// Pointwise residual of the 3D representation system
/// `(cos phi - 1)(w, b x d_k b) + sin phi (w, d_k b) + (w, b) d_k phi + d_k psi - (v x w)^k / nu`
/// with `w = curl F`.
pub fn representation_residual(
    b: &VectorField,
    phi: &ScalarField,
    psi: &ScalarField,
    v: &VectorField,
    f: &VectorField,
    nu: f64,
) -> Result<VectorField> {
    let g = f.grid();
    if g.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: g.dim() });
    }
    for other in [b.grid(), phi.grid(), psi.grid(), v.grid()] {
        g.check_same(other)?;
    }
    let unit = (0..g.len())
        .map(|p| {
            let x = b.at(p);
            (fields::dot3(x, x).sqrt() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if unit > 1e-10 {
        return Err(Error::NotUnit(unit));
    }
    let w = fields::curl3(f)?;
    let vxw = fields::cross(v, &w)?;
    // db[i] = grad of component i
    let db: Vec<VectorField> = (0..3).map(|i| scalar_grad(&ScalarField::new(g.clone(), b.comp(i).to_vec()).expect("finite"))).collect();
    let dphi = scalar_grad(phi);
    let dpsi = scalar_grad(psi);
    let mut out = vec![vec![0.0; g.len()]; 3];
    for p in 0..g.len() {
        let bp = b.at(p);
        let wp = w.at(p);
        let (c, s) = (phi.data()[p].cos(), phi.data()[p].sin());
        for k in 0..3 {
            let dbk = [db[0].comp(k)[p], db[1].comp(k)[p], db[2].comp(k)[p]];
            out[k][p] = (c - 1.0) * fields::dot3(wp, fields::cross3(bp, dbk))
                + s * fields::dot3(wp, dbk)
                + fields::dot3(wp, bp) * dphi.comp(k)[p]
                + dpsi.comp(k)[p]
                - vxw.comp(k)[p] / nu;
        }
    }
    VectorField::new(g.clone(), out)
}

/// Matrix one-form `A = sum_k A_k dx_k` with `A_k = hat(alpha_k)`, stored as the
/// three covector fields `a_i = sum_k (alpha_k)_i dx_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionOneForm {
    /// `a[i].comp(k) = (alpha_k)_i`.
    pub a: [VectorField; 3],
}

impl ConnectionOneForm {
    pub fn zeros(grid: &Grid) -> Self {
        ConnectionOneForm { a: std::array::from_fn(|_| VectorField::zeros(grid)) }
    }

    /// From per-point axis vectors `alpha[p][k]` of `A_k`.
    pub fn from_axes(grid: &Grid, alpha: &[[Vector3<f64>; 3]]) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::Dimension { expected: 3, got: grid.dim() });
        }
        let a = std::array::from_fn(|i| {
            let comps = (0..3).map(|k| alpha.iter().map(|al| al[k][i]).collect()).collect();
            VectorField::new(grid.clone(), comps).expect("finite connection")
        });
        Ok(ConnectionOneForm { a })
    }

    /// `A_k = sigma^T d_k sigma` sampled on `grid`.
    pub fn from_rotation_field(field: &RotationField, grid: &Grid) -> Result<Self> {
        let alpha: Vec<[Vector3<f64>; 3]> = (0..grid.len())
            .map(|p| {
                let x = grid.position(p);
                let (a, j) = field.eval(&x);
                std::array::from_fn(|k| correction_vector(&a, &j.column(k).into_owned()))
            })
            .collect();
        Self::from_axes(grid, &alpha)
    }

    /// Matrix `A_k` at a flat index.
    pub fn matrix(&self, p: usize, k: usize) -> Matrix3<f64> {
        hat(&Vector3::new(self.a[0].comp(k)[p], self.a[1].comp(k)[p], self.a[2].comp(k)[p]))
    }
}

/// Residuals `da1 - a3^a2`, `da2 - a1^a3`, `da3 - a2^a1` as 2-form fields with
/// components ordered `(23, 31, 12)`.
pub fn flat_connection_residual(conn: &ConnectionOneForm) -> Result<[VectorField; 3]> {
    let d: Vec<VectorField> = conn.a.iter().map(fields::curl3).collect::<Result<_>>()?;
    let wedge = |p: &VectorField, q: &VectorField| fields::cross(p, q);
    let a = &conn.a;
    Ok([d[0].sub(&wedge(&a[2], &a[1])?)?, d[1].sub(&wedge(&a[0], &a[2])?)?, d[2].sub(&wedge(&a[1], &a[0])?)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_angle_helpers_match_direct_forms() {
        for t in [1e-3, 0.1, 0.49, 0.51, 2.0] {
            assert!((t_minus_sin(t) - (t - t.sin())).abs() < 1e-15 * (1.0 + t));
        }
        let t = 2e-6;
        assert!((sinc(t) - t.sin() / t).abs() < 1e-15);
        assert!((cosc(SMALL_ANGLE * 0.999) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hat_vee_basics() {
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        assert_eq!(hat(&Vector3::z()) * Vector3::x(), Vector3::y());
        let a = Vector3::new(0.3, -1.2, 2.5);
        assert_eq!(vee(&hat(&a)).unwrap(), a);
        assert!(vee(&Matrix3::identity()).is_err());
    }
}
