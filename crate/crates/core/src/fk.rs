//! Monte Carlo Feynman–Kac estimators, checked against the spectral solver.
//!
//! Clock: the flow runs on `[T - s, T]` with velocity `v(t)` on the absolute clock, and the
//! estimate is the solution of the F-equation at time `s` driven by `v(T - .)`:
//!
//! ```text
//! flow time     T-s ─────────────────────▶ T        dX = v(t, X) dt + sqrt(2 nu) sigma dW
//! PDE time       s  ◀───────────────────── 0        dF/dtau uses v(T - tau), F(0) = F0
//! ```
//!
//! so `F(s, x) = P E[F0(X_{T-s}(T; x)) . grad X_{T-s}(T; x)]`, and `s = 0` is the zero-length flow.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::fields::{self, FourierSeries, ScalarField, VectorField};
use crate::flows::{self, det, identity, Flow, FlowConfig, Mat3, RotationKind, Vec3};
use crate::pde::{self, SolverConfig, TimeDependentVelocity};
use crate::rng::PathRng;
use crate::{Error, Grid, Result};

/// A projected grid estimate with its Monte Carlo error.
#[derive(Clone, Debug)]
pub struct FkEstimate {
    /// `P(Q)` on the grid.
    pub field: VectorField,
    /// Unprojected node means `Q`.
    pub raw: VectorField,
    /// Standard error of each node mean.
    pub node_se: VectorField,
    /// Root-mean-square node standard error per component.
    pub stderr: Vec<f64>,
    /// `sqrt(cell volume * sum of squared node SEs)`: the H-norm size of the noise in `raw`.
    pub h_se: f64,
    pub n_paths: usize,
    pub flow: String,
    pub flagged: usize,
    /// Mean over nodes of the empirical `E|Q|^2`, the integrability monitor.
    pub second_moment: f64,
}

impl FkEstimate {
    /// H-norm noise of the projected field, assuming spatially white, isotropic node noise.
    pub fn projected_h_se(&self) -> f64 {
        let d = self.field.dim() as f64;
        self.h_se * ((d - 1.0) / d).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub gap: f64,
    pub se: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Relative H-norm gap to a reference, passing if `gap <= max(3 SE, floor)`.
pub fn compare_to_reference(est: &FkEstimate, reference: &VectorField, floor: f64) -> Result<GapReport> {
    let n = fields::norm_h(reference);
    let gap = fields::norm_h(&est.field.sub(reference)?) / n;
    let se = est.projected_h_se() / n;
    let threshold = (3.0 * se).max(floor);
    Ok(GapReport { gap, se, threshold, pass: gap <= threshold })
}

/// Relative H-norm gap between two independent estimates against their combined SE.
pub fn compare_estimates(a: &FkEstimate, b: &FkEstimate, floor: f64) -> Result<GapReport> {
    let n = fields::norm_h(&a.field);
    let gap = fields::norm_h(&a.field.sub(&b.field)?) / n;
    let se = a.projected_h_se().hypot(b.projected_h_se()) / n;
    let threshold = (3.0 * se).max(floor);
    Ok(GapReport { gap, se, threshold, pass: gap <= threshold })
}

/// PDE oracle for an estimate at time `s`: the F-equation from `F0` over `[0, s]` driven by `v(T - .)`.
pub fn pde_reference(f0: &VectorField, v: &TimeDependentVelocity, t_final: f64, s: f64, cfg: &SolverConfig) -> Result<VectorField> {
    if s == 0.0 {
        return Ok(f0.clone());
    }
    pde::transport(f0, &v.reversed_clock(t_final), s, cfg)
}

/// [`pde_reference`] solved on a grid `factor` times finer, with `F0` interpolated spectrally and
/// the velocity rebuilt on the fine grid by `velocity`, then sampled back at the nodes of `f0`.
pub fn pde_reference_refined(
    f0: &VectorField,
    velocity: impl Fn(&Grid) -> Result<TimeDependentVelocity>,
    t_final: f64,
    s: f64,
    cfg: &SolverConfig,
    factor: usize,
) -> Result<VectorField> {
    if factor == 0 {
        return Err(Error::InvalidArgument("refinement factor must be positive".into()));
    }
    let g = f0.grid();
    let d = g.dim();
    let sizes: Vec<usize> = g.sizes().iter().map(|n| n * factor).collect();
    let fine = Grid::new(&sizes, g.box_len())?;
    let series = FourierSeries::from_vector(f0);
    let f0_fine = VectorField::from_fn(&fine, |x| {
        let mut out = [0.0; 3];
        series.eval(&x[..d], &mut out[..f0.dim()]);
        out
    });
    let r = pde_reference(&f0_fine, &velocity(&fine)?, t_final, s, cfg)?;
    let comps = (0..f0.dim())
        .map(|a| {
            (0..g.len())
                .map(|p| {
                    let idx = g.unflatten(p);
                    let fine_idx: Vec<usize> = (0..d).map(|k| idx[k] * factor).collect();
                    r.comp(a)[fine.flatten(&fine_idx)]
                })
                .collect()
        })
        .collect();
    VectorField::new(g.clone(), comps)
}

fn check_times(t_final: f64, s: f64) -> Result<()> {
    if !(0.0..=t_final).contains(&s) {
        return Err(Error::InvalidArgument(format!("need 0 <= s <= T, got s = {s}, T = {t_final}")));
    }
    Ok(())
}

struct NodeStats {
    mean: Vec3,
    se: Vec3,
    flagged: usize,
    second: f64,
}

/// Per-node path averages of `payload(X, grad X)` over the flow on `[t0, t1]`.
fn node_estimates(
    grid: &Grid,
    flow: &Flow,
    t0: f64,
    t1: f64,
    payload: &(dyn Fn(&Vec3, &Mat3, &mut Vec3) + Sync),
) -> Result<Vec<NodeStats>> {
    let cfg = flow.config();
    let dim = grid.dim();
    let (n, h) = if t1 > t0 { flow.schedule(t0, t1)? } else { (0, cfg.dt) };
    let stats: Vec<NodeStats> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x0 = grid.position(node);
            let stream = if cfg.crn { 0 } else { node as u64 };
            let mut mean = [0.0; 3];
            let mut m2 = [0.0; 3];
            let mut k = 0.0;
            let mut second = 0.0;
            let mut flagged = 0;
            let mut q = [0.0; 3];
            for p in 0..cfg.n_paths as u64 {
                let mut rng = PathRng::new(cfg.seed, stream, p);
                let mut x = [x0];
                let mut j = [identity(dim)];
                if !flow.advance_path(&mut rng, t0, h, n, &mut x, Some(&mut j)) {
                    flagged += 1;
                    continue;
                }
                payload(&x[0], &j[0], &mut q);
                k += 1.0;
                for a in 0..dim {
                    let d = q[a] - mean[a];
                    mean[a] += d / k;
                    m2[a] += d * (q[a] - mean[a]);
                }
                second += (0..dim).map(|a| q[a] * q[a]).sum::<f64>();
            }
            let mut se = [0.0; 3];
            if k > 1.0 {
                for a in 0..dim {
                    se[a] = (m2[a] / (k * (k - 1.0))).sqrt();
                }
            }
            NodeStats { mean, se, flagged, second: second / k }
        })
        .collect();
    let flagged: usize = stats.iter().map(|s| s.flagged).sum();
    let total = cfg.n_paths * grid.len();
    if flagged as f64 > flows::FLAG_BUDGET * total as f64 {
        return Err(Error::FlaggedPaths { flagged, total });
    }
    Ok(stats)
}

fn assemble(grid: &Grid, stats: &[NodeStats], cfg: &FlowConfig) -> Result<FkEstimate> {
    let dim = grid.dim();
    let comp = |f: &dyn Fn(&NodeStats) -> Vec3| -> Vec<Vec<f64>> { (0..dim).map(|a| stats.iter().map(|s| f(s)[a]).collect()).collect() };
    let raw = VectorField::new(grid.clone(), comp(&|s| s.mean))?;
    let node_se = VectorField::new(grid.clone(), comp(&|s| s.se))?;
    let nn = grid.len() as f64;
    let stderr = node_se.comps().iter().map(|c| (c.iter().map(|x| x * x).sum::<f64>() / nn).sqrt()).collect();
    let h_se = (grid.cell_volume() * node_se.comps().iter().flatten().map(|x| x * x).sum::<f64>()).sqrt();
    Ok(FkEstimate {
        field: fields::helmholtz_project(&raw),
        raw,
        node_se,
        stderr,
        h_se,
        n_paths: cfg.n_paths,
        flow: cfg.rotation.name().into(),
        flagged: stats.iter().map(|s| s.flagged).sum(),
        second_moment: stats.iter().map(|s| s.second).sum::<f64>() / nn,
    })
}

/// Covector pullback `Q^j = sum_i F0^i(X) dX^i/dx_j`.
fn pullback(series: &FourierSeries, dim: usize) -> impl Fn(&Vec3, &Mat3, &mut Vec3) + Sync + '_ {
    move |x, j, q| {
        let mut f = [0.0; 3];
        series.eval(x, &mut f);
        for (b, qb) in q.iter_mut().enumerate().take(dim) {
            *qb = (0..dim).map(|a| f[a] * j[a][b]).sum();
        }
    }
}

fn flow_for(v: &TimeDependentVelocity, cfg: &FlowConfig, dim: usize) -> Result<Flow> {
    if v.grid().dim() != dim {
        return Err(Error::Dimension { expected: dim, got: v.grid().dim() });
    }
    if cfg.rotation.is_drift_free() {
        Flow::drift_free(dim, cfg)
    } else {
        Flow::new(v, cfg)
    }
}

/// `F(s, .) = P E[F0(X) . grad X]` over the flow configured in `cfg` (the standard flow is `Identity`).
pub fn fk_curve(f0: &VectorField, v: &TimeDependentVelocity, t_final: f64, s: f64, cfg: &FlowConfig) -> Result<FkEstimate> {
    check_times(t_final, s)?;
    let flow = flow_for(v, cfg, f0.dim())?;
    let series = FourierSeries::from_vector(f0);
    let stats = node_estimates(f0.grid(), &flow, t_final - s, t_final, &pullback(&series, f0.dim()))?;
    assemble(f0.grid(), &stats, cfg)
}

/// The same estimator over the drift-free rotated Brownian flow of `v = perp_grad(phi)`.
pub fn fk_rot2d(f0: &VectorField, phi: &ScalarField, t_final: f64, s: f64, cfg: &FlowConfig) -> Result<FkEstimate> {
    check_times(t_final, s)?;
    if f0.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: f0.dim() });
    }
    let cfg = rot2d_config(phi, cfg)?;
    let flow = Flow::drift_free(2, &cfg)?;
    let series = FourierSeries::from_vector(f0);
    let stats = node_estimates(f0.grid(), &flow, t_final - s, t_final, &pullback(&series, 2))?;
    assemble(f0.grid(), &stats, &cfg)
}

fn rot2d_config(phi: &ScalarField, cfg: &FlowConfig) -> Result<FlowConfig> {
    Ok(match cfg.rotation {
        RotationKind::Rot2DBrownian { .. } => cfg.clone(),
        _ => cfg.clone().with_rotation(RotationKind::brownian(phi, cfg.nu)?),
    })
}

/// Wirtinger derivatives `(dZ/dz̄, dZ̄/dz̄)` of a real 2x2 Jacobian.
pub fn wirtinger(j: &Mat3) -> (Complex64, Complex64) {
    (
        Complex64::new(0.5 * (j[0][0] - j[1][1]), 0.5 * (j[1][0] + j[0][1])),
        Complex64::new(0.5 * (j[0][0] + j[1][1]), 0.5 * (j[0][1] - j[1][0])),
    )
}

#[derive(Clone, Debug)]
pub struct ComplexCheck {
    /// Largest `|a - a(J)| + |b - b(J)|` over all final path states.
    pub max_state_gap: f64,
    /// Largest node-mean gap between the complex and real reconstructions.
    pub max_estimate_gap: f64,
    /// Complex-form estimate (projected).
    pub estimate: FkEstimate,
}

/// Integrate `a = dZ/dz̄`, `b = dZ̄/dz̄` along the rotated Brownian paths,
/// `da = (c/2)(v b - v̄ a) dZ`, `db = (c/2)(v̄ a - v b) dZ̄` with `c` the angle scale,
/// and rebuild `Q1 + i Q2 = F̄0 a + F0 b`, next to the real gradient on the same increments.
pub fn fk_complex_check(f0: &VectorField, phi: &ScalarField, t_final: f64, s: f64, cfg: &FlowConfig) -> Result<ComplexCheck> {
    check_times(t_final, s)?;
    if f0.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: f0.dim() });
    }
    let cfg = rot2d_config(phi, cfg)?;
    let scale = match cfg.rotation {
        RotationKind::Rot2DBrownian { scale, .. } => scale,
        _ => unreachable!(),
    };
    let flow = Flow::drift_free(2, &cfg)?;
    let grid = f0.grid();
    let series = FourierSeries::from_vector(f0);
    let t0 = t_final - s;
    let (n, h) = if s > 0.0 { flow.schedule(t0, t_final)? } else { (0, cfg.dt) };
    let rows: Vec<(NodeStats, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x0 = grid.position(node);
            let stream = if cfg.crn { 0 } else { node as u64 };
            let (mut sum, mut sq, mut real_sum, mut second) = ([0.0; 3], [0.0; 3], [0.0; 2], 0.0);
            let mut gap: f64 = 0.0;
            let mut flagged = 0;
            let mut dw = [0.0; 3];
            for p in 0..cfg.n_paths as u64 {
                let mut rng = PathRng::new(cfg.seed, stream, p);
                let mut x = x0;
                let mut j = identity(2);
                let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
                let mut ok = true;
                for step in 0..n {
                    rng.increment(&mut dw[..2], h, cfg.level);
                    let (xi, _) = flow.noise(&x, &dw, false);
                    let v = cfg.rotation.brownian_velocity(&x).expect("Brownian");
                    let (vc, dz) = (Complex64::new(v[0], v[1]), Complex64::new(xi[0], xi[1]));
                    let da = 0.5 * scale * (vc * b - vc.conj() * a) * dz;
                    let db = 0.5 * scale * (vc.conj() * a - vc * b) * dz.conj();
                    a += da;
                    b += db;
                    flow.step_point(t0 + step as f64 * h, h, &dw, &mut x, Some(&mut j));
                    let d = det(&j, 2);
                    if !(d.is_finite() && (flows::DET_MIN..=flows::DET_MAX).contains(&d)) {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    flagged += 1;
                    continue;
                }
                let (aj, bj) = wirtinger(&j);
                gap = gap.max((a - aj).norm() + (b - bj).norm());
                let mut f = [0.0; 3];
                series.eval(&x, &mut f);
                let fc = Complex64::new(f[0], f[1]);
                let qc = fc.conj() * a + fc * b;
                let q = [qc.re, qc.im];
                for c in 0..2 {
                    sum[c] += q[c];
                    sq[c] += q[c] * q[c];
                    real_sum[c] += (0..2).map(|i| f[i] * j[i][c]).sum::<f64>();
                }
                second += q[0] * q[0] + q[1] * q[1];
            }
            let m = (cfg.n_paths - flagged) as f64;
            let mut mean = [0.0; 3];
            let mut se = [0.0; 3];
            let mut est_gap: f64 = 0.0;
            for c in 0..2 {
                mean[c] = sum[c] / m;
                se[c] = if m > 1.0 { ((sq[c] / m - mean[c] * mean[c]).max(0.0) / (m - 1.0)).sqrt() } else { 0.0 };
                est_gap = est_gap.max((mean[c] - real_sum[c] / m).abs());
            }
            (NodeStats { mean, se, flagged, second: second / m }, gap, est_gap)
        })
        .collect();
    let total = cfg.n_paths * grid.len();
    let flagged: usize = rows.iter().map(|r| r.0.flagged).sum();
    if flagged as f64 > flows::FLAG_BUDGET * total as f64 {
        return Err(Error::FlaggedPaths { flagged, total });
    }
    let max_state_gap = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_estimate_gap = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let stats: Vec<NodeStats> = rows.into_iter().map(|r| r.0).collect();
    Ok(ComplexCheck { max_state_gap, max_estimate_gap, estimate: assemble(grid, &stats, &cfg)? })
}

/// Cofactor matrix of the 3x3 gradient: entry `(j, k)` is the signed 2x2 minor, `det(J) J^{-T}`.
pub fn cofactor(j: &Mat3) -> Mat3 {
    let m = |r0: usize, r1: usize, c0: usize, c1: usize| j[r0][c0] * j[r1][c1] - j[r0][c1] * j[r1][c0];
    [
        [m(1, 2, 1, 2), -m(1, 2, 0, 2), m(1, 2, 0, 1)],
        [-m(0, 2, 1, 2), m(0, 2, 0, 2), -m(0, 2, 0, 1)],
        [m(0, 1, 1, 2), -m(0, 1, 0, 2), m(0, 1, 0, 1)],
    ]
}

/// Surface (2-form) estimator in 3D: component `k` is `E[sum_j B0^j(X) cof(grad X)_{jk}]`, projected.
pub fn fk_surface(b0: &VectorField, v: &TimeDependentVelocity, t_final: f64, s: f64, cfg: &FlowConfig) -> Result<FkEstimate> {
    check_times(t_final, s)?;
    if b0.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: b0.dim() });
    }
    let div = fields::max_divergence(b0);
    if div > 1e-8 * (1.0 + b0.max_abs()) {
        return Err(Error::NotDivergenceFree(div));
    }
    let flow = flow_for(v, cfg, 3)?;
    let series = FourierSeries::from_vector(b0);
    let payload = |x: &Vec3, j: &Mat3, q: &mut Vec3| {
        let mut f = [0.0; 3];
        series.eval(x, &mut f);
        let c = cofactor(j);
        for (k, qk) in q.iter_mut().enumerate() {
            *qk = (0..3).map(|i| f[i] * c[i][k]).sum();
        }
    };
    let stats = node_estimates(b0.grid(), &flow, t_final - s, t_final, &payload)?;
    assemble(b0.grid(), &stats, cfg)
}

/// Node-wise variance of a spectral derivative along `axis` of a field whose node values are
/// independent with variance `var`: `sum_m D(m)^2 var(x - m e_axis)`. The spectral
/// differentiation stencil is one-dimensional with zero diagonal, so derivatives along
/// different axes of different components are uncorrelated.
pub fn derivative_variance(var: &ScalarField, axis: usize) -> ScalarField {
    let grid = var.grid();
    let mut delta = vec![0.0; grid.len()];
    delta[0] = 1.0;
    let d = fields::partial(&ScalarField::new(grid.clone(), delta).expect("finite"), axis);
    let n = grid.sizes()[axis];
    let stride = grid.strides()[axis];
    let w2: Vec<f64> = (0..n).map(|m| d.data()[m * stride].powi(2)).collect();
    let data = (0..grid.len())
        .map(|p| {
            let idx = grid.unflatten(p);
            (0..n)
                .map(|m| {
                    let mut y = idx;
                    y[axis] = (idx[axis] + n - m) % n;
                    w2[m] * var.data()[grid.flatten(&y[..grid.dim()])]
                })
                .sum()
        })
        .collect();
    ScalarField::new(grid.clone(), data).expect("finite")
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceConsistency {
    /// `||S - curl Q|| / ||curl Q||` on unprojected node means.
    pub gap: f64,
    /// Combined H-norm standard error, relative to `||curl Q||`.
    pub se: f64,
    /// Fraction of node components with `|z| > 3`.
    pub outlier_fraction: f64,
    pub pass: bool,
}

/// Compare `fk_surface(curl G0)` with `curl(fk_curve(G0))` from two independent estimates.
pub fn surface_consistency(surface: &FkEstimate, curve: &FkEstimate) -> Result<SurfaceConsistency> {
    let grid = curve.raw.grid();
    let cq = fields::curl3(&curve.raw)?;
    let var = |f: &VectorField, a: usize| ScalarField::new(grid.clone(), f.comp(a).iter().map(|x| x * x).collect()).expect("finite");
    let curve_var: Vec<ScalarField> = (0..3).map(|a| var(&curve.node_se, a)).collect();
    // curl_i = d_{i+1} Q_{i+2} - d_{i+2} Q_{i+1}
    let mut total = 0.0;
    let mut out = 0usize;
    let mut diff2 = 0.0;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let v1 = derivative_variance(&curve_var[k], j);
        let v2 = derivative_variance(&curve_var[j], k);
        for p in 0..grid.len() {
            let vc = v1.data()[p] + v2.data()[p] + surface.node_se.comp(i)[p].powi(2);
            let d = surface.raw.comp(i)[p] - cq.comp(i)[p];
            total += vc;
            diff2 += d * d;
            if d * d > 9.0 * vc {
                out += 1;
            }
        }
    }
    let norm = fields::norm_h(&cq);
    let gap = (grid.cell_volume() * diff2).sqrt() / norm;
    let se = (grid.cell_volume() * total).sqrt() / norm;
    Ok(SurfaceConsistency { gap, se, outlier_fraction: out as f64 / (3 * grid.len()) as f64, pass: gap <= 3.0 * se })
}
