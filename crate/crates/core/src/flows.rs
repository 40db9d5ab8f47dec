//! Stochastic flows of diffeomorphisms, their gradients, contour transport and circulation.
//!
//! Every flow has the form `dX = b(t, X) dt + sqrt(2 nu) sigma(X) dW` with `sigma(x)` a rotation,
//! integrated with Euler–Maruyama in the Itô sense. All points of one path share the same Wiener
//! increments, so a path is a random map of the whole domain and its gradient is the exact
//! Jacobian of the discrete map.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::fields::{self, FourierSeries, ScalarField, VectorField};
use crate::pde::{self, SolverConfig, TimeDependentVelocity, VelocitySampler};
use crate::rng::PathRng;
use crate::so3::{self, RotationField};
use crate::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Paths whose gradient determinant leaves `[DET_MIN, DET_MAX]` are flagged and excluded.
pub const DET_MIN: f64 = 1e-6;
pub const DET_MAX: f64 = 1e6;
/// Largest tolerated fraction of flagged paths.
pub const FLAG_BUDGET: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowScheme {
    #[default]
    EulerMaruyama,
}

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The rotation `sigma(x)` applied to the Wiener increments.
#[derive(Clone)]
pub enum RotationKind {
    /// `sigma = I`, drift `v`.
    Identity,
    /// 2D, angle `psi(rot v)`, drift `v`.
    Rot2DSameLaw { vorticity: Arc<FourierSeries>, psi: ScalarMap, dpsi: ScalarMap },
    /// 2D, angle `scale * phi` with `v = perp_grad(phi)`, no drift.
    Rot2DBrownian { stream: Arc<FourierSeries>, scale: f64 },
    /// 3D rotation about the third axis by `angle(x)`, drift `v`.
    Rot3DBlock { angle: Arc<FourierSeries> },
    /// 3D, `sigma = exp(a^)`, drift `v`.
    Rot3DExp(RotationField),
}

impl fmt::Debug for RotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationKind::Rot2DBrownian { scale, .. } => write!(f, "Rot2DBrownian(scale = {scale})"),
            RotationKind::Rot3DExp(a) => write!(f, "Rot3DExp({a:?})"),
            other => f.write_str(other.name()),
        }
    }
}

fn scalar_series(f: &ScalarField) -> Arc<FourierSeries> {
    Arc::new(FourierSeries::from_scalar(f))
}

impl RotationKind {
    /// Angle `psi(rot v)`; `dpsi` is the derivative of `psi`.
    pub fn same_law(
        v: &VectorField,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dpsi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let w = fields::rot2(v)?;
        Ok(RotationKind::Rot2DSameLaw { vorticity: scalar_series(&w), psi: Arc::new(psi), dpsi: Arc::new(dpsi) })
    }

    /// Drift-free rotated Brownian flow for `v = perp_grad(phi)`, angle `-phi / (2 nu)`.
    pub fn brownian(phi: &ScalarField, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument("rotated Brownian flow needs nu > 0".into()));
        }
        Self::brownian_with_scale(phi, -0.5 / nu)
    }

    /// Rotated Brownian flow with angle `scale * phi`.
    pub fn brownian_with_scale(phi: &ScalarField, scale: f64) -> Result<Self> {
        if phi.grid().dim() != 2 {
            return Err(Error::Dimension { expected: 2, got: phi.grid().dim() });
        }
        Ok(RotationKind::Rot2DBrownian { stream: scalar_series(phi), scale })
    }

    pub fn block(angle: &ScalarField) -> Result<Self> {
        if angle.grid().dim() != 3 {
            return Err(Error::Dimension { expected: 3, got: angle.grid().dim() });
        }
        Ok(RotationKind::Rot3DBlock { angle: scalar_series(angle) })
    }

    pub fn exp(field: RotationField) -> Self {
        RotationKind::Rot3DExp(field)
    }

    pub fn name(&self) -> &'static str {
        match self {
            RotationKind::Identity => "Identity",
            RotationKind::Rot2DSameLaw { .. } => "Rot2DSameLaw",
            RotationKind::Rot2DBrownian { .. } => "Rot2DBrownian",
            RotationKind::Rot3DBlock { .. } => "Rot3DBlock",
            RotationKind::Rot3DExp(_) => "Rot3DExp",
        }
    }

    /// Dimension the rotation lives in, if it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            RotationKind::Identity => None,
            RotationKind::Rot2DSameLaw { .. } | RotationKind::Rot2DBrownian { .. } => Some(2),
            RotationKind::Rot3DBlock { .. } | RotationKind::Rot3DExp(_) => Some(3),
        }
    }

    pub fn is_drift_free(&self) -> bool {
        matches!(self, RotationKind::Rot2DBrownian { .. })
    }

    /// Velocity `perp_grad(phi)` carried by a rotated Brownian flow at `x`.
    pub fn brownian_velocity(&self, x: &Vec3) -> Option<Vec3> {
        match self {
            RotationKind::Rot2DBrownian { stream, .. } => {
                let (mut p, mut g) = ([0.0], [[0.0; 3]]);
                stream.eval_grad(x, &mut p, &mut g);
                Some([-g[0][1], g[0][0], 0.0])
            }
            _ => None,
        }
    }

    /// `sigma(x)` and the generators `w_k(x) = vee(d_k sigma sigma^T)`, so that
    /// `d_k sigma = w_k^ sigma`.
    pub fn frame(&self, x: &Vec3) -> (Mat3, [Vec3; 3]) {
        let planar = |theta: f64, grad: Vec3| {
            let (s, c) = theta.sin_cos();
            let w = [[0.0, 0.0, grad[0]], [0.0, 0.0, grad[1]], [0.0, 0.0, grad[2]]];
            ([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], w)
        };
        let angle = |series: &FourierSeries, scale: f64| {
            let (mut p, mut g) = ([0.0], [[0.0; 3]]);
            series.eval_grad(x, &mut p, &mut g);
            planar(scale * p[0], [scale * g[0][0], scale * g[0][1], scale * g[0][2]])
        };
        match self {
            RotationKind::Identity => (IDENTITY, [[0.0; 3]; 3]),
            RotationKind::Rot2DSameLaw { vorticity, psi, dpsi } => {
                let (mut w, mut g) = ([0.0], [[0.0; 3]]);
                vorticity.eval_grad(x, &mut w, &mut g);
                let d = dpsi(w[0]);
                planar(psi(w[0]), [d * g[0][0], d * g[0][1], d * g[0][2]])
            }
            RotationKind::Rot2DBrownian { stream, scale } => angle(stream, *scale),
            RotationKind::Rot3DBlock { angle: a } => angle(a, 1.0),
            RotationKind::Rot3DExp(field) => {
                let (a, jac) = field.eval(x);
                let r = so3::exp_so3(&a);
                let m = r.matrix();
                let sigma = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
                let w = std::array::from_fn(|k| {
                    let c: Vector3<f64> = jac.column(k).into_owned();
                    let v = so3::left_correction_vector(&a, &c);
                    [v[0], v[1], v[2]]
                });
                (sigma, w)
            }
        }
    }
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Gradient noise matrix of the rotated Brownian flow,
/// `K = [[-v2 dX2, v1 dX2], [v2 dX1, -v1 dX1]]`.
pub fn k_matrix(v: &Vec3, dx: &Vec3) -> Mat3 {
    [[-v[1] * dx[1], v[0] * dx[1], 0.0], [v[1] * dx[0], -v[0] * dx[0], 0.0], [0.0; 3]]
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub nu: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: FlowScheme,
    pub rotation: RotationKind,
    /// Each step sums `2^level` finer increments (coupling across step sizes).
    pub level: u32,
    /// Common random numbers: every grid node reuses the same path streams.
    pub crn: bool,
}

impl FlowConfig {
    pub fn new(nu: f64, dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let c =
            FlowConfig { nu, dt, n_paths, seed, scheme: FlowScheme::EulerMaruyama, rotation: RotationKind::Identity, level: 0, crn: false };
        c.validate()?;
        Ok(c)
    }

    pub fn with_rotation(mut self, rotation: RotationKind) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be finite and >= 0, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if self.level > 16 {
            return Err(Error::InvalidArgument("coupling level above 16".into()));
        }
        Ok(())
    }

    /// Same paths at twice the step, for step-size bias estimates.
    pub fn coarsened(&self) -> Self {
        FlowConfig { dt: 2.0 * self.dt, level: self.level + 1, ..self.clone() }
    }
}

/// A configured flow: drift sampler plus rotation.
#[derive(Clone, Debug)]
pub struct Flow {
    cfg: FlowConfig,
    dim: usize,
    drift: Option<VelocitySampler>,
    velocity: Option<TimeDependentVelocity>,
    k_max: f64,
    noise: f64,
}

impl Flow {
    /// Flow with drift `v` (ignored by drift-free rotations, which only use its grid dimension).
    pub fn new(v: &TimeDependentVelocity, cfg: &FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = v.grid().dim();
        if let Some(d) = cfg.rotation.dim() {
            if d != dim {
                return Err(Error::Dimension { expected: d, got: dim });
            }
        }
        let drift_free = cfg.rotation.is_drift_free();
        Ok(Flow {
            cfg: cfg.clone(),
            dim,
            drift: (!drift_free).then(|| v.sampler()),
            velocity: (!drift_free).then(|| v.clone()),
            k_max: v.grid().k_max(),
            noise: (2.0 * cfg.nu).sqrt(),
        })
    }

    /// Drift-free flow, for rotated Brownian flows.
    pub fn drift_free(dim: usize, cfg: &FlowConfig) -> Result<Self> {
        cfg.validate()?;
        if !cfg.rotation.is_drift_free() && !matches!(cfg.rotation, RotationKind::Identity) {
            return Err(Error::InvalidArgument(format!("{} flow needs a drift velocity", cfg.rotation.name())));
        }
        if let Some(d) = cfg.rotation.dim() {
            if d != dim {
                return Err(Error::Dimension { expected: d, got: dim });
            }
        }
        Ok(Flow { cfg: cfg.clone(), dim, drift: None, velocity: None, k_max: 0.0, noise: (2.0 * cfg.nu).sqrt() })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Uniform steps covering `[t0, t1]`, after the drift CFL guard.
    pub fn schedule(&self, t0: f64, t1: f64) -> Result<(usize, f64)> {
        let (n, h) = pde::step_count(t1 - t0, self.cfg.dt);
        if let Some(v) = &self.velocity {
            let c = h * v.max_speed(t0, t1) * self.k_max;
            if c > 1.0 {
                return Err(Error::Cfl(c));
            }
        }
        Ok((n, h))
    }

    /// Realized noise `xi = sqrt(2 nu) sigma(x) dw` and, if asked, the gradient noise
    /// matrix `N` with columns `w_l x xi`.
    pub fn noise(&self, x: &Vec3, dw: &Vec3, want_grad: bool) -> (Vec3, Mat3) {
        let mut xi = [0.0; 3];
        let mut n = [[0.0; 3]; 3];
        if let RotationKind::Identity = self.cfg.rotation {
            for a in 0..self.dim {
                xi[a] = self.noise * dw[a];
            }
            return (xi, n);
        }
        let (sigma, w) = self.cfg.rotation.frame(x);
        for (a, xa) in xi.iter_mut().enumerate().take(self.dim) {
            *xa = self.noise * (0..self.dim).map(|b| sigma[a][b] * dw[b]).sum::<f64>();
        }
        if want_grad {
            if let RotationKind::Rot2DBrownian { scale, .. } = self.cfg.rotation {
                let v = self.cfg.rotation.brownian_velocity(x).expect("Brownian");
                let k = k_matrix(&v, &xi);
                for a in 0..2 {
                    for b in 0..2 {
                        n[a][b] = scale * k[a][b];
                    }
                }
            } else {
                for l in 0..self.dim {
                    let c = fields::cross3(w[l], xi);
                    for a in 0..self.dim {
                        n[a][l] = c[a];
                    }
                }
            }
        }
        (xi, n)
    }

    /// One Euler–Maruyama step of a point and, optionally, its gradient.
    pub fn step_point(&self, t: f64, h: f64, dw: &Vec3, x: &mut Vec3, j: Option<&mut Mat3>) {
        let mut v = [0.0; 3];
        let mut gv = [[0.0; 3]; 3];
        if let Some(d) = &self.drift {
            d.eval_grad(t, x, &mut v, &mut gv);
        }
        let (xi, n) = self.noise(x, dw, j.is_some());
        for a in 0..self.dim {
            x[a] += v[a] * h + xi[a];
        }
        if let Some(j) = j {
            let mut m = [[0.0; 3]; 3];
            for a in 0..self.dim {
                for b in 0..self.dim {
                    m[a][b] = gv[a][b] * h + n[a][b];
                }
            }
            let old = *j;
            for a in 0..self.dim {
                for b in 0..self.dim {
                    j[a][b] += (0..self.dim).map(|c| m[a][c] * old[c][b]).sum::<f64>();
                }
            }
        }
    }

    /// Advance every point of one path by `n` steps of size `h` from `t0`.
    /// Returns `false` once the path is flagged.
    pub fn advance_path(&self, rng: &mut PathRng, t0: f64, h: f64, n: usize, pos: &mut [Vec3], mut grads: Option<&mut [Mat3]>) -> bool {
        let mut dw = [0.0; 3];
        for step in 0..n {
            let t = t0 + step as f64 * h;
            rng.increment(&mut dw[..self.dim], h, self.cfg.level);
            match grads.as_deref_mut() {
                Some(g) => {
                    for (x, j) in pos.iter_mut().zip(g.iter_mut()) {
                        self.step_point(t, h, &dw, x, Some(j));
                    }
                    if !g.iter().all(|j| det_ok(&det(j, self.dim))) {
                        return false;
                    }
                }
                None => {
                    for x in pos.iter_mut() {
                        self.step_point(t, h, &dw, x, None);
                    }
                    if !pos.iter().all(|x| x.iter().all(|c| c.is_finite())) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Determinant of the leading `dim x dim` block.
pub fn det(j: &Mat3, dim: usize) -> f64 {
    match dim {
        1 => j[0][0],
        2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
        _ => {
            j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
        }
    }
}

fn det_ok(d: &f64) -> bool {
    d.is_finite() && (DET_MIN..=DET_MAX).contains(d)
}

/// Identity in the leading block, zero elsewhere.
pub fn identity(dim: usize) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j && i < dim { 1.0 } else { 0.0 }))
}

/// Positions (unwrapped) and gradients of `n_points` points along `n_paths` paths.
#[derive(Clone, Debug)]
pub struct FlowEnsemble {
    dim: usize,
    n_paths: usize,
    n_points: usize,
    positions: Vec<Vec3>,
    gradients: Option<Vec<Mat3>>,
    flagged: Vec<bool>,
    rngs: Vec<PathRng>,
    time: f64,
}

impl FlowEnsemble {
    /// Every path starts at `points` at time `t0`, with stream `(seed, node, path)`.
    pub fn new(points: &[Vec3], dim: usize, n_paths: usize, seed: u64, node: u64, t0: f64, track: bool) -> Self {
        let positions = (0..n_paths).flat_map(|_| points.iter().copied()).collect::<Vec<_>>();
        let gradients = track.then(|| vec![identity(dim); positions.len()]);
        FlowEnsemble {
            dim,
            n_paths,
            n_points: points.len(),
            positions,
            gradients,
            flagged: vec![false; n_paths],
            rngs: (0..n_paths as u64).map(|p| PathRng::new(seed, node, p)).collect(),
            time: t0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self, path: usize) -> &[Vec3] {
        &self.positions[path * self.n_points..(path + 1) * self.n_points]
    }

    pub fn gradients(&self, path: usize) -> Option<&[Mat3]> {
        self.gradients.as_ref().map(|g| &g[path * self.n_points..(path + 1) * self.n_points])
    }

    pub fn is_flagged(&self, path: usize) -> bool {
        self.flagged[path]
    }

    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    /// Error if more than 1% of paths are flagged.
    pub fn check_budget(&self) -> Result<()> {
        let f = self.n_flagged();
        if f as f64 > FLAG_BUDGET * self.n_paths as f64 {
            return Err(Error::FlaggedPaths { flagged: f, total: self.n_paths });
        }
        Ok(())
    }

    /// `n` steps of size `h`, positions and gradients from the same increments, paths in parallel.
    pub fn step_ensemble(&mut self, flow: &Flow, h: f64, n: usize) {
        let np = self.n_points;
        let t0 = self.time;
        let pos = self.positions.par_chunks_mut(np);
        let meta = self.rngs.par_iter_mut().zip(self.flagged.par_iter_mut());
        match &mut self.gradients {
            Some(g) => pos.zip(g.par_chunks_mut(np)).zip(meta).for_each(|((p, g), (rng, flag))| {
                if !*flag {
                    *flag = !flow.advance_path(rng, t0, h, n, p, Some(g));
                }
            }),
            None => pos.zip(meta).for_each(|(p, (rng, flag))| {
                if !*flag {
                    *flag = !flow.advance_path(rng, t0, h, n, p, None);
                }
            }),
        }
        self.time = t0 + n as f64 * h;
    }

    /// Advance to `t1` with uniform steps no larger than the configured `dt`.
    pub fn advance_to(&mut self, flow: &Flow, t1: f64) -> Result<()> {
        if t1 < self.time {
            return Err(Error::InvalidArgument(format!("cannot advance from {} back to {t1}", self.time)));
        }
        if t1 == self.time {
            return Ok(());
        }
        let (n, h) = flow.schedule(self.time, t1)?;
        self.step_ensemble(flow, h, n);
        self.time = t1;
        self.check_budget()
    }
}

/// Closed polygonal loop; the last point connects back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    dim: usize,
    points: Vec<Vec3>,
}

pub const MIN_CONTOUR_POINTS: usize = 16;

impl Contour {
    pub fn new(points: Vec<Vec3>, dim: usize) -> Result<Self> {
        if points.len() < MIN_CONTOUR_POINTS {
            return Err(Error::InvalidArgument(format!("contour needs at least {MIN_CONTOUR_POINTS} points, got {}", points.len())));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("contour dimension {dim}")));
        }
        let m = points.len();
        for i in 0..m {
            if points[i] == points[(i + 1) % m] {
                return Err(Error::InvalidArgument(format!("contour points {i} and {} coincide", (i + 1) % m)));
            }
        }
        Ok(Contour { dim, points })
    }

    /// Circle of radius `r` in the plane of the first two axes, uniformly parametrized.
    pub fn circle(center: Vec3, r: f64, m: usize, dim: usize) -> Result<Self> {
        let pts = (0..m)
            .map(|i| {
                let th = TAU * i as f64 / m as f64;
                [center[0] + r * th.cos(), center[1] + r * th.sin(), center[2]]
            })
            .collect();
        Contour::new(pts, dim)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `dx/dtheta` at `theta_i = 2 pi i / M`, by spectral differentiation of the closed curve.
    pub fn tangents(&self) -> Vec<Vec3> {
        spectral_tangents(&self.points, self.dim)
    }
}

/// Spectral derivative of a closed, uniformly parametrized curve.
pub fn spectral_tangents(points: &[Vec3], dim: usize) -> Vec<Vec3> {
    let m = points.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut out = vec![[0.0; 3]; m];
    for a in 0..dim {
        let mut buf: Vec<Complex64> = points.iter().map(|p| Complex64::new(p[a], 0.0)).collect();
        fwd.process(&mut buf);
        for (i, z) in buf.iter_mut().enumerate() {
            let k = if 2 * i < m {
                i as f64
            } else if 2 * i == m {
                0.0
            } else {
                i as f64 - m as f64
            };
            *z *= Complex64::new(0.0, k / m as f64);
        }
        inv.process(&mut buf);
        for (o, z) in out.iter_mut().zip(&buf) {
            o[a] = z.re;
        }
    }
    out
}

/// Midpoint rule `sum_i F((x_i + x_{i+1})/2) . (x_{i+1} - x_i)` around the closed cycle.
pub fn circulation(points: &[Vec3], f: &VectorField) -> f64 {
    let series = FourierSeries::from_vector(f);
    circulation_series(points, &series, f.dim())
}

fn circulation_series(points: &[Vec3], series: &FourierSeries, dim: usize) -> f64 {
    let m = points.len();
    let mut val = [0.0; 3];
    let mut s = 0.0;
    for i in 0..m {
        let (p, q) = (points[i], points[(i + 1) % m]);
        let mid: Vec3 = std::array::from_fn(|a| 0.5 * (p[a] + q[a]));
        series.eval(&mid, &mut val);
        s += (0..dim).map(|a| val[a] * (q[a] - p[a])).sum::<f64>();
    }
    s
}

/// `∮_{X(Γ)} F . dx` pulled back to `Γ`: `(2π/M) sum_i sum_j (J_i^T F(X_i))_j t_i^j`.
pub fn pullback_circulation(tangents: &[Vec3], positions: &[Vec3], grads: &[Mat3], f: &FourierSeries, dim: usize) -> f64 {
    let m = tangents.len();
    let mut val = [0.0; 3];
    let mut s = 0.0;
    for i in 0..m {
        f.eval(&positions[i], &mut val);
        for j in 0..dim {
            let q: f64 = (0..dim).map(|k| val[k] * grads[i][k][j]).sum();
            s += q * tangents[i][j];
        }
    }
    s * TAU / m as f64
}

/// Ensemble of transported copies of `Γ` over `[s, t]`, with gradients.
pub fn transport_contour(gamma: &Contour, v: &TimeDependentVelocity, cfg: &FlowConfig, s: f64, t: f64) -> Result<FlowEnsemble> {
    if s > t {
        return Err(Error::InvalidArgument(format!("transport needs s <= t, got s = {s}, t = {t}")));
    }
    let flow = Flow::new(v, cfg)?;
    if gamma.dim() != flow.dim() {
        return Err(Error::Dimension { expected: flow.dim(), got: gamma.dim() });
    }
    let mut e = FlowEnsemble::new(gamma.points(), gamma.dim(), cfg.n_paths, cfg.seed, 0, s, true);
    e.advance_to(&flow, t)?;
    Ok(e)
}

/// Itô correction rate of the circulation, `2 nu ∮ sum_k (curl F, w_k) dx_k` with
/// `w_k = vee(d_k sigma sigma^T)`; in 2D `curl F = rot F e_3` and `w_k = d_k theta e_3`.
pub fn correction_term_integrand(gamma: &Contour, f: &VectorField, rotation: &RotationKind, nu: f64) -> Result<f64> {
    let dim = f.dim();
    if gamma.dim() != dim {
        return Err(Error::Dimension { expected: dim, got: gamma.dim() });
    }
    if let Some(d) = rotation.dim() {
        if d != dim {
            return Err(Error::Dimension { expected: d, got: dim });
        }
    }
    let series = FourierSeries::from_vector(f);
    let tangents = gamma.tangents();
    let m = gamma.len();
    let mut val = [0.0; 3];
    let mut g = [[0.0; 3]; 3];
    let mut s = 0.0;
    for (x, t) in gamma.points().iter().zip(&tangents) {
        series.eval_grad(x, &mut val, &mut g);
        let curl = [g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]];
        let (_, w) = rotation.frame(x);
        for k in 0..dim {
            s += fields::dot3(curl, w[k]) * t[k];
        }
    }
    Ok(2.0 * nu * s * TAU / m as f64)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleCheckpoint {
    /// Flow time `t` in `[T - s, T]`; the PDE field is taken at `T - t`.
    pub time: f64,
    pub mean: f64,
    pub se: f64,
    pub deviation: f64,
    pub bias_allowance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub flow: String,
    pub baseline: f64,
    pub checkpoints: Vec<MartingaleCheckpoint>,
    pub n_paths: usize,
    pub flagged: usize,
    pub passed: bool,
}

/// Circulation samples `M_s(t_k)` per path at `t_k = T - s + k s / K`, `k = 1..=K`.
fn circulation_samples(
    gamma: &Contour,
    snaps: &[FourierSeries],
    flow: &Flow,
    t_final: f64,
    s: f64,
    k: usize,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let cfg = flow.config();
    let dim = gamma.dim();
    let tangents = gamma.tangents();
    let t0 = t_final - s;
    let (n, _) = pde::step_count(s, cfg.dt);
    let n = n.div_ceil(k) * k;
    let h = s / n as f64;
    let per = n / k;
    if let Some(v) = &flow.velocity {
        let c = h * v.max_speed(t0, t_final) * flow.k_max;
        if c > 1.0 {
            return Err(Error::Cfl(c));
        }
    }
    let rows: Vec<Option<Vec<f64>>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, 0, p);
            let mut pos = gamma.points().to_vec();
            let mut grads = vec![identity(dim); pos.len()];
            let mut out = Vec::with_capacity(k);
            for c in 0..k {
                let ta = t0 + (c * per) as f64 * h;
                if !flow.advance_path(&mut rng, ta, h, per, &mut pos, Some(&mut grads)) {
                    return None;
                }
                out.push(pullback_circulation(&tangents, &pos, &grads, &snaps[k - 1 - c], dim));
            }
            Some(out)
        })
        .collect();
    let flagged = rows.iter().filter(|r| r.is_none()).count();
    if flagged as f64 > FLAG_BUDGET * cfg.n_paths as f64 {
        return Err(Error::FlaggedPaths { flagged, total: cfg.n_paths });
    }
    let cols = (0..k).map(|c| rows.iter().flatten().map(|r| r[c]).collect()).collect();
    Ok((cols, flagged))
}

/// Martingale check of the circulation `M_s(t) = ∮_{X_{T-s}(t; Γ)} F(T - t) . dx` for `t` in `[T - s, T]`.
///
/// `v` is the flow velocity on the absolute clock; `F` solves the F-equation with `v(T - .)`
/// from `F0`. Each checkpoint passes if `|E M(t) - M(T - s)| <= 3 SE + allowance`, the allowance being
/// the change of `E M(t)` when the same paths are run at twice the step.
#[allow(clippy::too_many_arguments)]
pub fn martingale_test(
    gamma: &Contour,
    f0: &VectorField,
    v: &TimeDependentVelocity,
    t_final: f64,
    s: f64,
    cfg: &FlowConfig,
    pde_cfg: &SolverConfig,
    n_checkpoints: usize,
) -> Result<MartingaleReport> {
    if !(0.0 < s && s <= t_final) || n_checkpoints == 0 {
        return Err(Error::InvalidArgument("martingale test needs 0 < s <= T and at least one checkpoint".into()));
    }
    if (pde_cfg.nu - cfg.nu).abs() > 1e-12 * cfg.nu.max(1.0) {
        return Err(Error::InvalidArgument(format!("flow nu {} differs from solver nu {}", cfg.nu, pde_cfg.nu)));
    }
    let flow = if cfg.rotation.is_drift_free() { Flow::drift_free(f0.dim(), cfg)? } else { Flow::new(v, cfg)? };
    let v_pde = match &cfg.rotation {
        RotationKind::Rot2DBrownian { .. } => {
            let w = cfg.rotation.clone();
            let field = VectorField::from_fn(f0.grid(), |x| w.brownian_velocity(&x).expect("Brownian"));
            TimeDependentVelocity::frozen(field)?
        }
        _ => v.reversed_clock(t_final),
    };
    let (pc, stride) = crate::duality::aligned_config(s, pde_cfg, n_checkpoints);
    let traj = pde::solve_f_with(f0, &v_pde, &pde::ForcingSpec::none(), s, &pc, pde::Record::Every(stride))?;
    // snaps[i] is F at PDE time i s / K
    let snaps: Vec<FourierSeries> = traj.snapshots.iter().map(FourierSeries::from_vector).collect();
    let dim = f0.dim();
    let tangents = gamma.tangents();
    let ident = vec![identity(dim); gamma.len()];
    let baseline = pullback_circulation(&tangents, gamma.points(), &ident, &snaps[n_checkpoints], dim);

    let (fine, flagged) = circulation_samples(gamma, &snaps[..n_checkpoints], &flow, t_final, s, n_checkpoints)?;
    let coarse_flow = Flow { cfg: cfg.coarsened(), ..flow.clone() };
    let (coarse, _) = circulation_samples(gamma, &snaps[..n_checkpoints], &coarse_flow, t_final, s, n_checkpoints)?;

    let checkpoints: Vec<MartingaleCheckpoint> = (0..n_checkpoints)
        .map(|c| {
            let (mean, se) = mean_se(&fine[c]);
            let (cm, _) = mean_se(&coarse[c]);
            let deviation = (mean - baseline).abs();
            let bias_allowance = (mean - cm).abs();
            MartingaleCheckpoint {
                time: t_final - s + s * (c + 1) as f64 / n_checkpoints as f64,
                mean,
                se,
                deviation,
                bias_allowance,
                pass: deviation <= 3.0 * se + bias_allowance,
            }
        })
        .collect();
    Ok(MartingaleReport {
        flow: cfg.rotation.name().into(),
        baseline,
        passed: checkpoints.iter().all(|c| c.pass),
        checkpoints,
        n_paths: cfg.n_paths,
        flagged,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OnePointReport {
    pub n_paths: usize,
    pub t: f64,
    pub mean: [f64; 2],
    pub mean_se: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub cov_se: [[f64; 2]; 2],
    pub expected_var: f64,
    pub kurtosis: [f64; 2],
    pub kurtosis_se: [f64; 2],
    pub passed: bool,
}

/// Law of `X_T - x0` for a drift-free 2D flow: mean zero, covariance `2 nu T I`, Gaussian fourth moments.
pub fn one_point_law_test(x0: Vec3, t: f64, cfg: &FlowConfig) -> Result<OnePointReport> {
    if !matches!(cfg.rotation, RotationKind::Rot2DBrownian { .. } | RotationKind::Identity) {
        return Err(Error::InvalidArgument("one-point law test needs a drift-free 2D flow".into()));
    }
    let flow = Flow::drift_free(2, cfg)?;
    let (n, h) = flow.schedule(0.0, t)?;
    let d: Vec<[f64; 2]> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, 0, p);
            let mut x = [x0];
            flow.advance_path(&mut rng, 0.0, h, n, &mut x, None);
            [x[0][0] - x0[0], x[0][1] - x0[1]]
        })
        .collect();
    let m = d.len() as f64;
    let mut mean = [0.0; 2];
    let mut mean_se_v = [0.0; 2];
    for a in 0..2 {
        let col: Vec<f64> = d.iter().map(|z| z[a]).collect();
        let (mu, se) = mean_se(&col);
        mean[a] = mu;
        mean_se_v[a] = se;
    }
    let mut cov = [[0.0; 2]; 2];
    let mut cov_se = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let prods: Vec<f64> = d.iter().map(|z| (z[a] - mean[a]) * (z[b] - mean[b])).collect();
            let (c, se) = mean_se(&prods);
            cov[a][b] = c * m / (m - 1.0);
            cov_se[a][b] = se;
        }
    }
    let mut kurt = [0.0; 2];
    let mut kurt_se = [0.0; 2];
    for a in 0..2 {
        let mom = |p: i32| d.iter().map(|z| (z[a] - mean[a]).powi(p)).sum::<f64>() / m;
        let (m2, m4, m6, m8) = (mom(2), mom(4), mom(6), mom(8));
        kurt[a] = m4 / (m2 * m2);
        // delta method for m4 / m2^2
        let var = (m8 - m4 * m4) / m2.powi(4) - 4.0 * m4 * (m6 - m4 * m2) / m2.powi(5) + 4.0 * m4 * m4 * (m4 - m2 * m2) / m2.powi(6);
        kurt_se[a] = (var.max(0.0) / m).sqrt();
    }
    let expected = 2.0 * cfg.nu * t;
    let mut passed = true;
    for a in 0..2 {
        passed &= mean[a].abs() <= 3.0 * mean_se_v[a];
        passed &= (kurt[a] - 3.0).abs() <= 3.0 * kurt_se[a];
        for b in 0..2 {
            let want = if a == b { expected } else { 0.0 };
            passed &= (cov[a][b] - want).abs() <= 3.0 * cov_se[a][b];
        }
    }
    Ok(OnePointReport {
        n_paths: cfg.n_paths,
        t,
        mean,
        mean_se: mean_se_v,
        cov,
        cov_se,
        expected_var: expected,
        kurtosis: kurt,
        kurtosis_se: kurt_se,
        passed,
    })
}
