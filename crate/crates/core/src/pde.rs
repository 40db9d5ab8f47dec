//! Pseudo-spectral solvers for the F- and G-equations.
//!
//! ```text
//! F-equation:  dF/dt = nu Lap F - P(v(t) x curl F) + f(t)
//! G-equation:  dG/dt = nu Lap G + curl(v(T-t) x G) + f(t)
//! ```
//!
//! Both are advanced with an integrating-factor RK4 (or Euler) scheme in
//! Fourier space, so diffusion is exact per mode.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{self, ctx, curl_hat, dhat, FourierSeries, Grid, Recipe, SpectralCtx, VectorField};

type Coef = Vec<Vec<Complex64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "IFRK4")]
    Ifrk4,
    #[serde(rename = "IFEuler")]
    IfEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_scheme() -> Scheme {
    Scheme::Ifrk4
}

fn default_true() -> bool {
    true
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64) -> Result<Self> {
        let c = SolverConfig { nu, dt, scheme: Scheme::Ifrk4, dealias: true };
        c.validate()?;
        Ok(c)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu = {} must be positive", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt = {} must be positive", self.dt)));
        }
        Ok(())
    }
}

/// Where the samples of a velocity come from.
#[derive(Clone, Debug, PartialEq)]
pub enum VelocitySource {
    Frozen(VectorField),
    /// Samples at `t0 + i*dt`, linearly interpolated and held constant outside the span.
    Sampled {
        t0: f64,
        dt: f64,
        fields: Vec<VectorField>,
    },
    /// Recipe evaluated at `space_scale * x` on `grid`.
    Analytic {
        recipe: Recipe,
        grid: Grid,
        space_scale: f64,
    },
}

/// A velocity `v(t) = amp * source(tscale * t + tshift)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDependentVelocity {
    source: VelocitySource,
    amp: f64,
    tscale: f64,
    tshift: f64,
}

const DIV_TOL: f64 = 1e-10;

fn check_solenoidal(f: &VectorField) -> Result<()> {
    let d = fields::max_divergence(f);
    if d > DIV_TOL * (1.0 + f.max_abs()) {
        return Err(Error::NotDivergenceFree(d));
    }
    Ok(())
}

impl TimeDependentVelocity {
    fn wrap(source: VelocitySource) -> Self {
        TimeDependentVelocity { source, amp: 1.0, tscale: 1.0, tshift: 0.0 }
    }

    pub fn frozen(v: VectorField) -> Result<Self> {
        check_solenoidal(&v)?;
        Ok(Self::wrap(VelocitySource::Frozen(v)))
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::wrap(VelocitySource::Frozen(VectorField::zeros(grid)))
    }

    pub fn sampled(t0: f64, dt: f64, fields: Vec<VectorField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidArgument("sampled velocity needs at least one sample".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("sample spacing must be positive".into()));
        }
        for f in &fields {
            f.grid().check_same(fields[0].grid())?;
            check_solenoidal(f)?;
        }
        Ok(Self::wrap(VelocitySource::Sampled { t0, dt, fields }))
    }

    pub fn analytic(recipe: Recipe, grid: &Grid) -> Result<Self> {
        let v = recipe.evaluate(grid, 0.0, 1.0)?;
        check_solenoidal(&v)?;
        Ok(Self::wrap(VelocitySource::Analytic { recipe, grid: grid.clone(), space_scale: 1.0 }))
    }

    pub fn source(&self) -> &VelocitySource {
        &self.source
    }

    pub fn grid(&self) -> &Grid {
        match &self.source {
            VelocitySource::Frozen(f) => f.grid(),
            VelocitySource::Sampled { fields, .. } => fields[0].grid(),
            VelocitySource::Analytic { grid, .. } => grid,
        }
    }

    pub fn is_frozen(&self) -> bool {
        match &self.source {
            VelocitySource::Frozen(_) => true,
            VelocitySource::Sampled { fields, .. } => fields.len() == 1,
            VelocitySource::Analytic { .. } => false,
        }
    }

    /// Sample spacing in the velocity's own clock, if sampled.
    pub fn sample_interval(&self) -> Option<f64> {
        match &self.source {
            VelocitySource::Sampled { dt, .. } => Some(dt / self.tscale.abs()),
            _ => None,
        }
    }

    fn source_at(&self, s: f64) -> Cow<'_, VectorField> {
        match &self.source {
            VelocitySource::Frozen(f) => Cow::Borrowed(f),
            VelocitySource::Sampled { t0, dt, fields } => {
                let n = fields.len();
                let x = (s - t0) / dt;
                if n == 1 || x <= 0.0 {
                    return Cow::Borrowed(&fields[0]);
                }
                if x >= (n - 1) as f64 {
                    return Cow::Borrowed(&fields[n - 1]);
                }
                let i = x.floor() as usize;
                let w = x - i as f64;
                if w == 0.0 {
                    return Cow::Borrowed(&fields[i]);
                }
                Cow::Owned(fields[i].lincomb(1.0 - w, &fields[i + 1], w).expect("same grid"))
            }
            VelocitySource::Analytic { recipe, grid, space_scale } => {
                Cow::Owned(recipe.evaluate(grid, s, *space_scale).expect("validated recipe"))
            }
        }
    }

    /// Samples of `v(t)` on the velocity grid.
    pub fn at(&self, t: f64) -> Cow<'_, VectorField> {
        let f = self.source_at(self.tscale * t + self.tshift);
        if self.amp == 1.0 {
            f
        } else {
            Cow::Owned(f.scale(self.amp))
        }
    }

    /// Upper bound of `max |v(t,x)|` over `t` in `[a, b]`.
    pub fn max_speed(&self, a: f64, b: f64) -> f64 {
        let m = match &self.source {
            VelocitySource::Frozen(f) => f.max_norm(),
            VelocitySource::Sampled { fields, .. } => fields.iter().map(|f| f.max_norm()).fold(0.0, f64::max),
            VelocitySource::Analytic { recipe, grid, space_scale } => {
                let (sa, sb) = (self.tscale * a + self.tshift, self.tscale * b + self.tshift);
                let base = recipe.evaluate(grid, 0.0, *space_scale).expect("validated recipe").max_norm();
                base * recipe.time_factor(sa).max(recipe.time_factor(sb))
            }
        };
        m * self.amp.abs()
    }

    /// `(S_T v)(t) = -v(T - t)`.
    ///
    /// Sampled sequences are reversed and negated sample by sample, so
    /// reversing twice restores them bit for bit.
    pub fn time_reverse(&self, t_final: f64) -> Self {
        match &self.source {
            VelocitySource::Frozen(f) => TimeDependentVelocity { source: VelocitySource::Frozen(f.scale(-1.0)), ..self.clone() },
            VelocitySource::Sampled { t0, dt, fields } if self.tscale == 1.0 && self.tshift == 0.0 => {
                let n = fields.len();
                let end = t0 + (n - 1) as f64 * dt;
                let rev = fields.iter().rev().map(|f| f.scale(-1.0)).collect();
                TimeDependentVelocity { source: VelocitySource::Sampled { t0: t_final - end, dt: *dt, fields: rev }, ..self.clone() }
            }
            _ => TimeDependentVelocity {
                source: self.source.clone(),
                amp: -self.amp,
                tscale: -self.tscale,
                tshift: self.tscale * t_final + self.tshift,
            },
        }
    }

    /// `t -> v(T - t)`: the clock of the F-equation when the flow runs forward on `[0, T]`.
    pub fn reversed_clock(&self, t_final: f64) -> Self {
        let r = self.time_reverse(t_final);
        TimeDependentVelocity { amp: -r.amp, ..r }
    }

    /// `t -> v(t + offset)`.
    pub fn shifted(&self, offset: f64) -> Self {
        TimeDependentVelocity { tshift: self.tshift + self.tscale * offset, ..self.clone() }
    }

    /// `(Psi_lambda v)(t, x) = lambda v(lambda^2 t, lambda x)` on the box scaled by `1/lambda`.
    pub fn scale(&self, lambda: f64) -> Result<Self> {
        check_power_of_two(lambda)?;
        let source = match &self.source {
            VelocitySource::Frozen(f) => VelocitySource::Frozen(scale_field(f, lambda)?),
            VelocitySource::Sampled { t0, dt, fields } => {
                VelocitySource::Sampled { t0: *t0, dt: *dt, fields: fields.iter().map(|f| scale_field(f, lambda)).collect::<Result<_>>()? }
            }
            VelocitySource::Analytic { recipe, grid, space_scale } => {
                VelocitySource::Analytic { recipe: recipe.clone(), grid: grid.scaled(1.0 / lambda)?, space_scale: space_scale * lambda }
            }
        };
        Ok(TimeDependentVelocity { source, amp: self.amp, tscale: self.tscale * lambda * lambda, tshift: self.tshift })
    }

    /// Off-grid evaluator for particle methods.
    pub fn sampler(&self) -> VelocitySampler {
        let series = |f: &VectorField| FourierSeries::from_vector_tol(f, 1e-13);
        let kind = match &self.source {
            VelocitySource::Frozen(f) => SamplerKind::Frozen(series(f)),
            VelocitySource::Sampled { t0, dt, fields } => {
                SamplerKind::Sampled { t0: *t0, dt: *dt, series: fields.iter().map(series).collect() }
            }
            VelocitySource::Analytic { recipe, grid, space_scale } => SamplerKind::Analytic {
                recipe: recipe.clone(),
                series: series(&recipe.evaluate(grid, 0.0, *space_scale).expect("validated recipe")),
            },
        };
        VelocitySampler { kind, amp: self.amp, tscale: self.tscale, tshift: self.tshift }
    }
}

fn check_power_of_two(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() && lambda.log2().fract() == 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("scaling factor {lambda} is not a power of two, so the rescaled box is not commensurate")))
    }
}

fn scale_field(f: &VectorField, lambda: f64) -> Result<VectorField> {
    fields::rebox(f, 1.0 / lambda, lambda)
}

/// `(Psi_lambda F)(x) = lambda F(lambda x)`: same samples times `lambda` on a box scaled by `1/lambda`.
pub fn scaling_transform(f: &VectorField, lambda: f64) -> Result<VectorField> {
    check_power_of_two(lambda)?;
    scale_field(f, lambda)
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Frozen(FourierSeries),
    Sampled { t0: f64, dt: f64, series: Vec<FourierSeries> },
    Analytic { recipe: Recipe, series: FourierSeries },
}

/// Off-grid value and gradient of a time-dependent velocity.
#[derive(Clone, Debug)]
pub struct VelocitySampler {
    kind: SamplerKind,
    amp: f64,
    tscale: f64,
    tshift: f64,
}

impl VelocitySampler {
    /// `v(t, x)` and `grad[i][j] = d v^i / d x_j`.
    pub fn eval_grad(&self, t: f64, x: &[f64], val: &mut [f64; 3], grad: &mut [[f64; 3]; 3]) {
        let s = self.tscale * t + self.tshift;
        match &self.kind {
            SamplerKind::Frozen(series) => series.eval_grad(x, val, grad),
            SamplerKind::Analytic { recipe, series } => {
                series.eval_grad(x, val, grad);
                let f = recipe.time_factor(s);
                scale_vg(val, grad, f);
            }
            SamplerKind::Sampled { t0, dt, series } => {
                let n = series.len();
                let xs = (s - t0) / dt;
                if n == 1 || xs <= 0.0 {
                    series[0].eval_grad(x, val, grad);
                } else if xs >= (n - 1) as f64 {
                    series[n - 1].eval_grad(x, val, grad);
                } else {
                    let i = xs.floor() as usize;
                    let w = xs - i as f64;
                    series[i].eval_grad(x, val, grad);
                    if w != 0.0 {
                        let (mut v2, mut g2) = ([0.0; 3], [[0.0; 3]; 3]);
                        series[i + 1].eval_grad(x, &mut v2, &mut g2);
                        for a in 0..3 {
                            val[a] = (1.0 - w) * val[a] + w * v2[a];
                            for b in 0..3 {
                                grad[a][b] = (1.0 - w) * grad[a][b] + w * g2[a][b];
                            }
                        }
                    }
                }
            }
        }
        if self.amp != 1.0 {
            scale_vg(val, grad, self.amp);
        }
    }
}

fn scale_vg(val: &mut [f64; 3], grad: &mut [[f64; 3]; 3], f: f64) {
    for a in 0..3 {
        val[a] *= f;
        for b in 0..3 {
            grad[a][b] *= f;
        }
    }
}

/// Optional forcing term `f(t)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForcingSpec(pub Option<TimeDependentVelocity>);

impl ForcingSpec {
    pub fn none() -> Self {
        ForcingSpec(None)
    }
}

/// Snapshots of a solution at uniformly spaced times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<VectorField>,
    pub nu: f64,
    pub dt: f64,
    pub scheme: Scheme,
}

#[derive(Serialize)]
struct TrajectoryManifest<'a> {
    times: &'a [f64],
    nu: f64,
    dt: f64,
    scheme: Scheme,
    files: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> &VectorField {
        self.snapshots.last().expect("non-empty trajectory")
    }

    pub fn first(&self) -> &VectorField {
        &self.snapshots[0]
    }

    /// Linear interpolation in time between snapshots.
    pub fn at(&self, t: f64) -> Cow<'_, VectorField> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return Cow::Borrowed(&self.snapshots[0]);
        }
        if t >= self.times[n - 1] {
            return Cow::Borrowed(&self.snapshots[n - 1]);
        }
        let h = (self.times[n - 1] - self.times[0]) / (n - 1) as f64;
        let x = (t - self.times[0]) / h;
        let i = (x.floor() as usize).min(n - 2);
        let w = x - i as f64;
        if w.abs() < 1e-9 {
            return Cow::Borrowed(&self.snapshots[i]);
        }
        if (1.0 - w).abs() < 1e-9 {
            return Cow::Borrowed(&self.snapshots[i + 1]);
        }
        Cow::Owned(self.snapshots[i].lincomb(1.0 - w, &self.snapshots[i + 1], w).expect("same grid"))
    }

    /// Largest spectral divergence over all snapshots.
    pub fn max_divergence(&self) -> f64 {
        self.snapshots.iter().map(fields::max_divergence).fold(0.0, f64::max)
    }

    /// Write `snap_XXXXX.vaf` files and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, s) in self.snapshots.iter().enumerate() {
            let name = format!("snap_{i:05}.vaf");
            fields::io::save_vector(dir.join(&name), s)?;
            files.push(name);
        }
        let m = TrajectoryManifest { times: &self.times, nu: self.nu, dt: self.dt, scheme: self.scheme, files };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}

/// Which snapshots to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    /// Every `n`-th step plus the final state.
    Every(usize),
    FinalOnly,
}

/// Number of steps and the adjusted step landing exactly on `t_final`.
pub fn step_count(t_final: f64, dt: f64) -> (usize, f64) {
    if t_final <= 0.0 {
        return (0, dt);
    }
    let n = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, t_final / n as f64)
}

fn check_cfl(v: &TimeDependentVelocity, t_final: f64, h: f64) -> Result<()> {
    let c = h * v.max_speed(0.0, t_final) * v.grid().k_max();
    if c > 1.0 {
        return Err(Error::Cfl(c));
    }
    Ok(())
}

fn to_phys(cx: &SpectralCtx, c: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    c.iter().map(|x| cx.inverse_real(x)).collect()
}

fn to_hat(cx: &SpectralCtx, p: &[Vec<f64>]) -> Coef {
    p.iter().map(|x| cx.forward_real(x)).collect()
}

/// Pointwise `sum_j v^j grad F^j - (v . grad) F` from spectral `F`.
fn gradient_form(cx: &SpectralCtx, v: &VectorField, fh: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    let d = v.dim();
    let n = cx.grid.len();
    // der[i][j] = d_j F^i
    let der: Vec<Vec<Vec<f64>>> = (0..d).map(|i| (0..d).map(|j| cx.inverse_real(&dhat(cx, &fh[i], j))).collect()).collect();
    let mut out = vec![vec![0.0; n]; d];
    for (i, oi) in out.iter_mut().enumerate() {
        for p in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                s += v.comp(j)[p] * (der[j][i][p] - der[i][j][p]);
            }
            oi[p] = s;
        }
    }
    out
}

/// Spectral `B(v, F) = P(v x curl F)`, dealiased when requested.
fn b_hat(cx: &SpectralCtx, v: &VectorField, fh: &[Vec<Complex64>], dealias: bool) -> Coef {
    let n = cx.grid.len();
    let prod = if v.dim() == 3 {
        let w = to_phys(cx, &curl_hat(cx, fh));
        let (a, b) = (v.comps(), &w);
        let mut out = vec![vec![0.0; n]; 3];
        for p in 0..n {
            out[0][p] = a[1][p] * b[2][p] - a[2][p] * b[1][p];
            out[1][p] = a[2][p] * b[0][p] - a[0][p] * b[2][p];
            out[2][p] = a[0][p] * b[1][p] - a[1][p] * b[0][p];
        }
        out
    } else {
        gradient_form(cx, v, fh)
    };
    let mut h = to_hat(cx, &prod);
    if dealias {
        h.iter_mut().for_each(|c| cx.dealias(c));
    }
    cx.project(&mut h);
    h
}

/// Spectral `curl(v x G)`; in 2D through the scalar `s = v1 G2 - v2 G1`, `curl(s e3) = (d2 s, -d1 s)`.
fn c_hat(cx: &SpectralCtx, v: &VectorField, gh: &[Vec<Complex64>], dealias: bool) -> Coef {
    let n = cx.grid.len();
    let g = to_phys(cx, gh);
    let a = v.comps();
    if v.dim() == 3 {
        let mut out = vec![vec![0.0; n]; 3];
        for p in 0..n {
            out[0][p] = a[1][p] * g[2][p] - a[2][p] * g[1][p];
            out[1][p] = a[2][p] * g[0][p] - a[0][p] * g[2][p];
            out[2][p] = a[0][p] * g[1][p] - a[1][p] * g[0][p];
        }
        let mut h = to_hat(cx, &out);
        if dealias {
            h.iter_mut().for_each(|c| cx.dealias(c));
        }
        curl_hat(cx, &h)
    } else {
        let s: Vec<f64> = (0..n).map(|p| a[0][p] * g[1][p] - a[1][p] * g[0][p]).collect();
        let mut sh = cx.forward_real(&s);
        if dealias {
            cx.dealias(&mut sh);
        }
        let d1 = dhat(cx, &sh, 0);
        let d2 = dhat(cx, &sh, 1);
        vec![d2, d1.into_iter().map(|z| -z).collect()]
    }
}

/// `B(v, F) = P(v x curl F)` on physical fields (3D cross form, 2D gradient form).
pub fn nonlinearity_b(v: &VectorField, f: &VectorField) -> Result<VectorField> {
    v.grid().check_same(f.grid())?;
    let cx = ctx(f.grid());
    let h = b_hat(&cx, v, &fields::spectral_comps(f), false);
    Ok(VectorField::from_parts(f.grid().clone(), to_phys(&cx, &h)))
}

/// `P(sum_j v^j grad F^j - (v . grad) F)` in any dimension.
pub fn nonlinearity_b_gradient_form(v: &VectorField, f: &VectorField) -> Result<VectorField> {
    v.grid().check_same(f.grid())?;
    let cx = ctx(f.grid());
    let p = gradient_form(&cx, v, &fields::spectral_comps(f));
    let mut h = to_hat(&cx, &p);
    cx.project(&mut h);
    Ok(VectorField::from_parts(f.grid().clone(), to_phys(&cx, &h)))
}

/// `curl(v x G)` on physical fields.
pub fn curl_cross(v: &VectorField, g: &VectorField) -> Result<VectorField> {
    v.grid().check_same(g.grid())?;
    let cx = ctx(g.grid());
    let h = c_hat(&cx, v, &fields::spectral_comps(g), false);
    Ok(VectorField::from_parts(g.grid().clone(), to_phys(&cx, &h)))
}

/// `P((G . grad) v - (v . grad) G)`, equal to `curl(v x G)` for solenoidal `v`, `G`.
pub fn curl_cross_identity_form(v: &VectorField, g: &VectorField) -> Result<VectorField> {
    v.grid().check_same(g.grid())?;
    let cx = ctx(g.grid());
    let d = v.dim();
    let n = cx.grid.len();
    let vh = fields::spectral_comps(v);
    let gh = fields::spectral_comps(g);
    let mut out = vec![vec![0.0; n]; d];
    for i in 0..d {
        for j in 0..d {
            let dv = cx.inverse_real(&dhat(&cx, &vh[i], j));
            let dg = cx.inverse_real(&dhat(&cx, &gh[i], j));
            for p in 0..n {
                out[i][p] += g.comp(j)[p] * dv[p] - v.comp(j)[p] * dg[p];
            }
        }
    }
    let mut h = to_hat(&cx, &out);
    cx.project(&mut h);
    Ok(VectorField::from_parts(g.grid().clone(), to_phys(&cx, &h)))
}

#[derive(Clone, Copy, PartialEq)]
enum Equation {
    F,
    G { t_final: f64 },
}

struct Integrator<'a> {
    cx: std::sync::Arc<SpectralCtx>,
    v: &'a TimeDependentVelocity,
    f: &'a ForcingSpec,
    cfg: &'a SolverConfig,
    eq: Equation,
}

impl Integrator<'_> {
    fn rhs(&self, t: f64, u: &[Vec<Complex64>]) -> Coef {
        let mut r = match self.eq {
            Equation::F => {
                let v = self.v.at(t);
                let mut b = b_hat(&self.cx, &v, u, self.cfg.dealias);
                b.iter_mut().flatten().for_each(|z| *z = -*z);
                b
            }
            Equation::G { t_final } => {
                let v = self.v.at(t_final - t);
                c_hat(&self.cx, &v, u, self.cfg.dealias)
            }
        };
        if let Some(force) = &self.f.0 {
            let fh = fields::spectral_comps(&force.at(t));
            for (rc, fc) in r.iter_mut().zip(&fh) {
                for (a, b) in rc.iter_mut().zip(fc) {
                    *a += b;
                }
            }
        }
        r
    }

    fn step(&self, t: f64, h: f64, u: &mut Coef) {
        let e_half: Vec<f64> = self.cx.k2.iter().map(|k2| (-self.cfg.nu * k2 * h / 2.0).exp()).collect();
        match self.cfg.scheme {
            Scheme::IfEuler => {
                let k1 = self.rhs(t, u);
                for (uc, kc) in u.iter_mut().zip(&k1) {
                    for p in 0..uc.len() {
                        let e = e_half[p] * e_half[p];
                        uc[p] = e * (uc[p] + h * kc[p]);
                    }
                }
            }
            Scheme::Ifrk4 => {
                let comb = |a: &Coef, s: f64, k: &Coef, ea: bool, ek: bool| -> Coef {
                    a.iter()
                        .zip(k)
                        .map(|(ac, kc)| {
                            (0..ac.len())
                                .map(|p| {
                                    let x = if ea { ac[p] * e_half[p] } else { ac[p] };
                                    let y = if ek { kc[p] * e_half[p] } else { kc[p] };
                                    x + y * s
                                })
                                .collect()
                        })
                        .collect()
                };
                let k1 = self.rhs(t, u);
                // E (u + h/2 k1)
                let s2: Coef = comb(u, h / 2.0, &k1, true, true);
                let k2 = self.rhs(t + h / 2.0, &s2);
                let s3: Coef = comb(u, h / 2.0, &k2, true, false);
                let k3 = self.rhs(t + h / 2.0, &s3);
                // E^2 u + h E k3
                let eu: Coef = u.iter().map(|c| c.iter().zip(&e_half).map(|(z, e)| z * e).collect()).collect();
                let s4: Coef = comb(&eu, h, &k3, true, true);
                let k4 = self.rhs(t + h, &s4);
                for c in 0..u.len() {
                    for p in 0..u[c].len() {
                        let e = e_half[p];
                        let e2 = e * e;
                        u[c][p] = e2 * u[c][p] + h / 6.0 * (e2 * k1[c][p] + 2.0 * e * (k2[c][p] + k3[c][p]) + k4[c][p]);
                    }
                }
            }
        }
    }

    fn run(&self, x0: &VectorField, t_final: f64, record: Record) -> Result<Trajectory> {
        self.cfg.validate()?;
        x0.grid().check_same(self.v.grid())?;
        if let Some(force) = &self.f.0 {
            force.grid().check_same(x0.grid())?;
        }
        let (n, h) = step_count(t_final, self.cfg.dt);
        if n > 0 {
            check_cfl(self.v, t_final, h)?;
        }
        let grid = x0.grid().clone();
        let mut u = fields::spectral_comps(x0);
        let mut times = vec![0.0];
        let mut snaps = vec![x0.clone()];
        for s in 0..n {
            self.step(s as f64 * h, h, &mut u);
            let keep = match record {
                Record::Every(k) => (s + 1) % k.max(1) == 0 || s + 1 == n,
                Record::FinalOnly => s + 1 == n,
            };
            if keep {
                times.push((s + 1) as f64 * h);
                snaps.push(VectorField::from_parts(grid.clone(), to_phys(&self.cx, &u)));
            }
        }
        if let Record::FinalOnly = record {
            if n > 0 {
                times.remove(0);
                snaps.remove(0);
            }
        }
        Ok(Trajectory { times, snapshots: snaps, nu: self.cfg.nu, dt: h, scheme: self.cfg.scheme })
    }
}

fn check_initial(x0: &VectorField) -> Result<()> {
    let d = fields::max_divergence(x0);
    if d > 1e-8 * (1.0 + x0.max_abs()) {
        return Err(Error::NotDivergenceFree(d));
    }
    Ok(())
}

/// Solve the F-equation on `[0, T]`, recording snapshots per `record`.
pub fn solve_f_with(
    f0: &VectorField,
    v: &TimeDependentVelocity,
    f: &ForcingSpec,
    t_final: f64,
    cfg: &SolverConfig,
    record: Record,
) -> Result<Trajectory> {
    check_initial(f0)?;
    let it = Integrator { cx: ctx(f0.grid()), v, f, cfg, eq: Equation::F };
    it.run(f0, t_final, record)
}

/// Solve the G-equation on `[0, T]`, recording snapshots per `record`.
pub fn solve_g_with(
    g0: &VectorField,
    v: &TimeDependentVelocity,
    f: &ForcingSpec,
    t_final: f64,
    cfg: &SolverConfig,
    record: Record,
) -> Result<Trajectory> {
    check_initial(g0)?;
    let it = Integrator { cx: ctx(g0.grid()), v, f, cfg, eq: Equation::G { t_final } };
    it.run(g0, t_final, record)
}

/// Solve the F-equation, keeping every step.
pub fn solve_f(f0: &VectorField, v: &TimeDependentVelocity, f: &ForcingSpec, t_final: f64, cfg: &SolverConfig) -> Result<Trajectory> {
    solve_f_with(f0, v, f, t_final, cfg, Record::Every(1))
}

/// Solve the G-equation, keeping every step.
pub fn solve_g(g0: &VectorField, v: &TimeDependentVelocity, f: &ForcingSpec, t_final: f64, cfg: &SolverConfig) -> Result<Trajectory> {
    solve_g_with(g0, v, f, t_final, cfg, Record::Every(1))
}

/// Transport operator `F0 -> F(T)` of the unforced F-equation.
pub fn transport(f0: &VectorField, v: &TimeDependentVelocity, t_final: f64, cfg: &SolverConfig) -> Result<VectorField> {
    let tr = solve_f_with(f0, v, &ForcingSpec::none(), t_final, cfg, Record::FinalOnly)?;
    Ok(tr.last().clone())
}

/// `S_T v`.
pub fn time_reverse(v: &TimeDependentVelocity, t_final: f64) -> TimeDependentVelocity {
    v.time_reverse(t_final)
}

/// One row of the energy budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    /// `|F|_H^2`
    pub energy: f64,
    /// `nu ||F||_V^2`
    pub dissipation: f64,
    /// `(curl F, v x F)_H`
    pub transfer: f64,
    /// `d/dt |F|^2 + 2 nu ||F||_V^2 - 2 (curl F, v x F)`
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    pub max_residual: f64,
    /// `|F(t)|^2 + nu int_0^t ||F||_V^2` for each row.
    pub lhs: Vec<f64>,
    /// `|F0|^2 exp(int_0^t ||v||_inf^2 / nu)` for each row.
    pub bound: Vec<f64>,
    pub inequality_holds: bool,
}

/// `(curl F, v x F)_H` in 2D or 3D.
pub fn transfer_term(f: &VectorField, v: &VectorField) -> Result<f64> {
    f.grid().check_same(v.grid())?;
    let g = f.grid();
    let s = if f.dim() == 3 {
        let c = fields::curl3(f)?;
        let vxf = fields::cross(v, f)?;
        fields::inner_product_h(&c, &vxf)?
    } else {
        let w = fields::rot2(f)?;
        let mut s = 0.0;
        for p in 0..g.len() {
            s += w.data()[p] * (v.comp(0)[p] * f.comp(1)[p] - v.comp(1)[p] * f.comp(0)[p]);
        }
        s * g.cell_volume()
    };
    Ok(s)
}

/// Five-point derivative of uniformly spaced samples.
fn derivative5(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let d = if i >= 2 && i + 2 < n {
                -y[i + 2] + 8.0 * y[i + 1] - 8.0 * y[i - 1] + y[i - 2]
            } else if i == 0 {
                -25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]
            } else if i == 1 {
                -3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]
            } else if i == n - 2 {
                3.0 * y[n - 1] + 10.0 * y[n - 2] - 18.0 * y[n - 3] + 6.0 * y[n - 4] - y[n - 5]
            } else {
                25.0 * y[n - 1] - 48.0 * y[n - 2] + 36.0 * y[n - 3] - 16.0 * y[n - 4] + 3.0 * y[n - 5]
            };
            d / (12.0 * h)
        })
        .collect()
}

/// Energy budget of an unforced F-trajectory with uniformly spaced snapshots (at least 5).
pub fn energy_diagnostics(traj: &Trajectory, v: &TimeDependentVelocity, cfg: &SolverConfig) -> Result<EnergyReport> {
    let n = traj.times.len();
    if n < 5 {
        return Err(Error::InvalidArgument("energy diagnostics need at least 5 snapshots".into()));
    }
    let h = (traj.times[n - 1] - traj.times[0]) / (n - 1) as f64;
    let mut energy = Vec::with_capacity(n);
    let mut diss = Vec::with_capacity(n);
    let mut transfer = Vec::with_capacity(n);
    let mut vinf2 = Vec::with_capacity(n);
    for (t, f) in traj.times.iter().zip(&traj.snapshots) {
        let vt = v.at(*t);
        energy.push(fields::inner_product_h(f, f)?);
        diss.push(cfg.nu * fields::homogeneous_norm(f, 1)?.powi(2));
        transfer.push(transfer_term(f, &vt)?);
        vinf2.push(vt.max_norm().powi(2));
    }
    let de = derivative5(&energy, h);
    let mut rows = Vec::with_capacity(n);
    let mut max_residual: f64 = 0.0;
    for i in 0..n {
        let r = de[i] + 2.0 * diss[i] - 2.0 * transfer[i];
        max_residual = max_residual.max(r.abs());
        rows.push(EnergyRow { t: traj.times[i], energy: energy[i], dissipation: diss[i], transfer: transfer[i], residual: r });
    }
    let mut lhs = vec![energy[0]];
    let mut bound = vec![energy[0]];
    let (mut int_d, mut int_v) = (0.0, 0.0);
    for i in 1..n {
        int_d += 0.5 * h * (diss[i] + diss[i - 1]);
        int_v += 0.5 * h * (vinf2[i] + vinf2[i - 1]) / cfg.nu;
        lhs.push(energy[i] + int_d);
        bound.push(energy[0] * int_v.exp());
    }
    let inequality_holds = lhs.iter().zip(&bound).all(|(l, b)| *l <= b * (1.0 + 1e-9) + 1e-14);
    Ok(EnergyReport { rows, max_residual, lhs, bound, inequality_holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_lands_on_final_time() {
        let (n, h) = step_count(0.5, 1e-3);
        assert_eq!(n, 500);
        assert!((n as f64 * h - 0.5).abs() < 1e-15);
        let (n, h) = step_count(0.25, 0.03);
        assert_eq!(n, 9);
        assert!(h <= 0.03);
    }

    #[test]
    fn five_point_stencil_is_exact_on_quartics() {
        let h = 0.1;
        let y: Vec<f64> = (0..9).map(|i| (i as f64 * h).powi(4) - 2.0 * (i as f64 * h)).collect();
        let d = derivative5(&y, h);
        for (i, di) in d.iter().enumerate() {
            let x = i as f64 * h;
            assert!((di - (4.0 * x.powi(3) - 2.0)).abs() < 1e-11, "{i}");
        }
    }
}
