//! Verifiers for the pairing identity, the curl-duality relation, the Serrin
//! corollary, helicity and scaling.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{self, Grid, Recipe, VectorField};
use crate::pde::{self, ForcingSpec, Record, SolverConfig, TimeDependentVelocity};

/// Floor for relative deviations.
pub const EPS: f64 = 1e-14;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(EPS)
}

/// Pairing values `(F(t_i), G(T - t_i))_H` and, optionally, the two sides of the curl relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub times: Vec<f64>,
    pub pairings: Vec<f64>,
    pub max_deviation: f64,
    /// Step actually used, adjusted so checkpoints land on steps.
    pub dt: f64,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// Step count that is a multiple of `n_checkpoints` with step no larger than `cfg.dt`.
pub(crate) fn aligned_config(t_final: f64, cfg: &SolverConfig, n_checkpoints: usize) -> (SolverConfig, usize) {
    let (n, _) = pde::step_count(t_final, cfg.dt);
    let n = n.div_ceil(n_checkpoints) * n_checkpoints;
    let mut c = cfg.clone();
    c.dt = t_final / n as f64;
    (c, n / n_checkpoints)
}

/// Track `(F(t), G(T - t))_H` at `n_checkpoints + 1` equally spaced times, `F` solving the
/// F-equation and `G` the G-equation, both driven by `v`.
pub fn pairing_trace(
    f0: &VectorField,
    g0: &VectorField,
    v: &TimeDependentVelocity,
    t_final: f64,
    cfg: &SolverConfig,
    n_checkpoints: usize,
) -> Result<DualityReport> {
    if n_checkpoints == 0 {
        return Err(Error::InvalidArgument("need at least one checkpoint".into()));
    }
    f0.grid().check_same(g0.grid())?;
    let (c, stride) = aligned_config(t_final, cfg, n_checkpoints);
    let none = ForcingSpec::none();
    let ft = pde::solve_f_with(f0, v, &none, t_final, &c, Record::Every(stride))?;
    let gt = pde::solve_g_with(g0, v, &none, t_final, &c, Record::Every(stride))?;
    let m = ft.snapshots.len();
    debug_assert_eq!(m, n_checkpoints + 1);
    let pairings: Vec<f64> = (0..m).map(|i| fields::inner_product_h(&ft.snapshots[i], &gt.snapshots[m - 1 - i])).collect::<Result<_>>()?;
    let p0 = pairings[0];
    let max_deviation = pairings.iter().map(|p| (p - p0).abs() / p0.abs().max(EPS)).fold(0.0, f64::max);
    Ok(DualityReport { times: ft.times, pairings, max_deviation, dt: c.dt, left: None, right: None })
}

/// Two sides of the curl-duality relation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    /// `(curl F0, T^{S_T v} G0)_H`
    pub left: f64,
    /// `(curl T^v F0, G0)_H`
    pub right: f64,
    pub gap: f64,
}

/// `(curl F0, T^{S_T v} G0)_H` against `(curl T^v F0, G0)_H` in 3D.
pub fn duality_relation(
    f0: &VectorField,
    g0: &VectorField,
    v: &TimeDependentVelocity,
    t_final: f64,
    cfg: &SolverConfig,
) -> Result<Relation> {
    if f0.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: f0.dim() });
    }
    f0.grid().check_same(g0.grid())?;
    let rev = v.time_reverse(t_final);
    let tg = pde::transport(g0, &rev, t_final, cfg)?;
    let tf = pde::transport(f0, v, t_final, cfg)?;
    let left = fields::inner_product_h(&fields::curl3(f0)?, &tg)?;
    let right = fields::inner_product_h(&fields::curl3(&tf)?, g0)?;
    Ok(Relation { left, right, gap: rel(left, right) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerrinReport {
    pub relations: Vec<Relation>,
    pub max_gap: f64,
    /// `|curl u(T)|_H / |curl u(0)|_H` with `u(T)` from the solver.
    pub vorticity_ratio: f64,
    pub expected_ratio: f64,
}

/// Curl relation with `F0 = u(0)` for the exact Taylor–Green solution embedded in 3D,
/// over a panel of random `G0` drawn with the given seeds.
pub fn serrin_experiment(nu: f64, t_final: f64, grid: &Grid, cfg: &SolverConfig, seeds: &[u64]) -> Result<SerrinReport> {
    if grid.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: grid.dim() });
    }
    let recipe = Recipe::TaylorGreen2d { nu };
    let u = TimeDependentVelocity::analytic(recipe.clone(), grid)?;
    let u0 = recipe.evaluate(grid, 0.0, 1.0)?;
    let ut_exact = recipe.evaluate(grid, t_final, 1.0)?;
    let ut = pde::transport(&u0, &u, t_final, cfg)?;
    let w0 = fields::norm_h(&fields::curl3(&u0)?);
    let vorticity_ratio = fields::norm_h(&fields::curl3(&ut)?) / w0;
    let rev = u.time_reverse(t_final);
    let curl_u0 = fields::curl3(&u0)?;
    let curl_ut = fields::curl3(&ut_exact)?;
    let relations = seeds
        .iter()
        .map(|&seed| {
            let g0 = Recipe::Random { seed, kmax: 3, amplitude: 1.0 }.evaluate(grid, 0.0, 1.0)?;
            let left = fields::inner_product_h(&curl_u0, &pde::transport(&g0, &rev, t_final, cfg)?)?;
            let right = fields::inner_product_h(&curl_ut, &g0)?;
            Ok(Relation { left, right, gap: rel(left, right) })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_gap = relations.iter().map(|r| r.gap).fold(0.0, f64::max);
    Ok(SerrinReport { relations, max_gap, vorticity_ratio, expected_ratio: (-2.0 * nu * t_final).exp() })
}

/// `int (u, curl u) dx`.
pub fn helicity(u: &VectorField) -> Result<f64> {
    fields::inner_product_h(u, &fields::curl3(u)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambda: f64,
    /// Relative max-norm gap between `T_t^{Psi v} Psi F0` and `Psi(T_{lambda^2 t}^v F0)`.
    pub gap: f64,
}

/// Compare both sides of the scaling intertwining with the time dilation made explicit.
pub fn scaling_intertwining(f0: &VectorField, v: &TimeDependentVelocity, t: f64, lambda: f64, cfg: &SolverConfig) -> Result<ScalingReport> {
    let fl = pde::scaling_transform(f0, lambda)?;
    let vl = v.scale(lambda)?;
    let lhs = pde::transport(&fl, &vl, t, cfg)?;
    let mut c = cfg.clone();
    c.dt = cfg.dt * lambda * lambda;
    let rhs = pde::scaling_transform(&pde::transport(f0, v, lambda * lambda * t, &c)?, lambda)?;
    let gap = lhs.sub(&rhs)?.max_abs() / rhs.max_abs().max(EPS);
    Ok(ScalingReport { lambda, gap })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormProbe {
    /// Largest Rayleigh quotient of `(curl T^v psi_i, w_j)`.
    pub lhs: f64,
    /// Largest Rayleigh quotient of `(w_i, T^{S_T v} w_j)`.
    pub rhs: f64,
    pub gap: f64,
}

fn max_rayleigh(a: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<f64> {
    let s = (a + a.transpose()) * 0.5;
    let ge = SymmetricEigen::new(gram.clone());
    if ge.eigenvalues.iter().any(|&l| l <= 1e-14 * ge.eigenvalues.amax()) {
        return Err(Error::InvalidArgument("trial vectors are linearly dependent".into()));
    }
    let inv_sqrt = &ge.eigenvectors * DMatrix::from_diagonal(&ge.eigenvalues.map(|l| 1.0 / l.sqrt())) * ge.eigenvectors.transpose();
    let m = &inv_sqrt * s * &inv_sqrt;
    Ok(SymmetricEigen::new(m).eigenvalues.max())
}

/// Consistency probe of the pairing chain on the span of `trials` (zero-mean, solenoidal, 3D).
///
/// With `psi_i = curl^{-1} w_i`, the matrices `(curl T^v psi_i, w_j)` and `(w_i, T^{S_T v} w_j)`
/// coincide by the duality relation; their largest Rayleigh quotients are compared in the
/// `H^0` metric (`alpha = 0`) or the homogeneous `H^1` metric (`alpha = 1`) of the trial span.
pub fn norm_duality_probe(
    trials: &[VectorField],
    v: &TimeDependentVelocity,
    t_final: f64,
    alpha: u8,
    cfg: &SolverConfig,
) -> Result<NormProbe> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("need at least one trial vector".into()));
    }
    if alpha > 1 {
        return Err(Error::InvalidArgument(format!("alpha must be 0 or 1, got {alpha}")));
    }
    let m = trials.len();
    let rev = v.time_reverse(t_final);
    let psi: Vec<VectorField> = trials.iter().map(fields::curl_inverse).collect::<Result<_>>()?;
    let curl_tpsi: Vec<VectorField> = psi.iter().map(|p| fields::curl3(&pde::transport(p, v, t_final, cfg)?)).collect::<Result<_>>()?;
    let tw: Vec<VectorField> = trials.iter().map(|w| pde::transport(w, &rev, t_final, cfg)).collect::<Result<_>>()?;
    let metric: Vec<VectorField> = if alpha == 0 { trials.to_vec() } else { trials.iter().map(fields::curl3).collect::<Result<_>>()? };
    let mut a = DMatrix::zeros(m, m);
    let mut b = DMatrix::zeros(m, m);
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = fields::inner_product_h(&curl_tpsi[i], &trials[j])?;
            b[(i, j)] = fields::inner_product_h(&trials[i], &tw[j])?;
            g[(i, j)] = fields::inner_product_h(&metric[i], &metric[j])?;
        }
    }
    let lhs = max_rayleigh(&a, &g)?;
    let rhs = max_rayleigh(&b, &g)?;
    Ok(NormProbe { lhs, rhs, gap: rel(lhs, rhs) })
}

/// Pairing deviations and step-halving self-convergence of the pairing values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingConvergence {
    pub dts: Vec<f64>,
    pub deviations: Vec<f64>,
    /// `max_i |P_k(t_i) - P_{k+1}(t_i)| / |P_{k+1}(0)|` for consecutive steps.
    pub value_changes: Vec<f64>,
    /// `log2` ratios of consecutive `value_changes`.
    pub orders: Vec<f64>,
}

/// Run [`pairing_trace`] for each step in `dts` (successive halvings).
pub fn pairing_convergence(
    f0: &VectorField,
    g0: &VectorField,
    v: &TimeDependentVelocity,
    t_final: f64,
    cfg: &SolverConfig,
    n_checkpoints: usize,
    dts: &[f64],
) -> Result<PairingConvergence> {
    let reports: Vec<DualityReport> = dts
        .iter()
        .map(|&dt| {
            let mut c = cfg.clone();
            c.dt = dt;
            pairing_trace(f0, g0, v, t_final, &c, n_checkpoints)
        })
        .collect::<Result<_>>()?;
    if reports.windows(2).any(|w| (w[0].dt / w[1].dt - 2.0).abs() > 1e-9) {
        let used: Vec<f64> = reports.iter().map(|r| r.dt).collect();
        return Err(Error::InvalidArgument(format!("aligned steps {used:?} are not successive halvings")));
    }
    let value_changes: Vec<f64> = reports
        .windows(2)
        .map(|w| {
            let scale = w[1].pairings[0].abs().max(EPS);
            w[0].pairings.iter().zip(&w[1].pairings).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max)
        })
        .collect();
    let orders = value_changes.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(PairingConvergence {
        dts: reports.iter().map(|r| r.dt).collect(),
        deviations: reports.iter().map(|r| r.max_deviation).collect(),
        value_changes,
        orders,
    })
}
