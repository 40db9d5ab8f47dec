//! One function per experiment kind. Each returns checks, tables, plots and fields; writing
//! them to disk is left to [`crate::output`].

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use vecadvect::duality::{self, pairing_convergence, pairing_trace};
use vecadvect::fields::{self, Recipe};
use vecadvect::fk::{self, FkEstimate};
use vecadvect::flows::{self, Contour, FlowConfig, RotationKind};
use vecadvect::pde::{self, ForcingSpec, Record, SolverConfig, TimeDependentVelocity};
use vecadvect::so3;
use vecadvect::{Grid, ScalarField, VectorField};

use crate::config::{need, ExperimentConfig, FlowChoice, Kind, VelocityMode};
use crate::error::{CliError, Result};
use crate::svg::{Plot, Series};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` when the value must not exceed the threshold, `false` when it must reach it.
    pub upper: bool,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, upper: true, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, upper: false, pass: value >= threshold }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SavedField {
    pub name: String,
    pub field: VectorField,
    pub meta: Value,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub plots: Vec<(String, Plot)>,
    pub fields: Vec<SavedField>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

const DEFAULT_PDE_DT: f64 = 1e-3;

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    kind: Kind,
}

impl Ctx<'_> {
    fn grid(&self) -> Result<Grid> {
        need(self.kind, "grid", &self.cfg.grid)?.build()
    }

    fn nu(&self) -> Result<f64> {
        need(self.kind, "nu", &self.cfg.nu)
    }

    fn t_final(&self) -> Result<f64> {
        need(self.kind, "t_final", &self.cfg.t_final)
    }

    fn seed(&self) -> Result<u64> {
        need(self.kind, "seed", &self.cfg.seed)
    }

    fn recipe(&self, field: &str, r: &Option<Recipe>) -> Result<Recipe> {
        need(self.kind, field, r)
    }

    fn field(&self, name: &str, r: &Option<Recipe>, grid: &Grid) -> Result<VectorField> {
        Ok(self.recipe(name, r)?.evaluate(grid, 0.0, 1.0)?)
    }

    fn velocity_on(&self, grid: &Grid) -> Result<TimeDependentVelocity> {
        let recipe = self.recipe("velocity", &self.cfg.velocity)?;
        Ok(match self.cfg.velocity_mode {
            VelocityMode::Frozen => TimeDependentVelocity::frozen(recipe.evaluate(grid, 0.0, 1.0)?)?,
            VelocityMode::Analytic => TimeDependentVelocity::analytic(recipe, grid)?,
        })
    }

    fn solver(&self) -> Result<SolverConfig> {
        Ok(SolverConfig::new(self.nu()?, self.cfg.dt.unwrap_or(DEFAULT_PDE_DT))?)
    }

    fn strict_solver(&self) -> Result<SolverConfig> {
        Ok(SolverConfig::new(self.nu()?, need(self.kind, "dt", &self.cfg.dt)?)?)
    }

    fn stream(&self, grid: &Grid) -> Result<ScalarField> {
        if self.cfg.velocity_mode != VelocityMode::Frozen {
            return Err(CliError::Config("the brownian flow needs a frozen velocity".into()));
        }
        let v = self.recipe("velocity", &self.cfg.velocity)?.evaluate(grid, 0.0, 1.0)?;
        Ok(fields::stream_function(&v)?)
    }

    fn flow_config(&self, seed: u64) -> Result<FlowConfig> {
        let c = FlowConfig::new(
            self.nu()?,
            need(self.kind, "flow_dt", &self.cfg.flow_dt)?,
            need(self.kind, "n_paths", &self.cfg.n_paths)?,
            seed,
        )?;
        Ok(c)
    }

    fn tol(&self, default: f64) -> f64 {
        self.cfg.checks.tolerance.unwrap_or(default)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let c = Ctx { cfg, kind: cfg.kind };
    match cfg.kind {
        Kind::Duality => run_duality(&c),
        Kind::DualityRelation => run_relation(&c),
        Kind::Serrin => run_serrin(&c),
        Kind::Fk2d | Kind::Fk3d => run_fk(&c),
        Kind::FkSurface => run_surface(&c),
        Kind::Martingale => run_martingale(&c),
        Kind::OnePointLaw => run_one_point(&c),
        Kind::So3Check => run_so3(&c),
        Kind::Scaling => run_scaling(&c),
        Kind::Solve => run_solve(&c),
    }
}

fn run_duality(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let (f0, g0) = (c.field("f0", &c.cfg.f0, &g)?, c.field("g0", &c.cfg.g0, &g)?);
    let v = c.velocity_on(&g)?;
    let t = c.t_final()?;
    let n_cp = c.cfg.checkpoints.unwrap_or(10);
    let pc = c.strict_solver()?;
    let r = pairing_trace(&f0, &g0, &v, t, &pc, n_cp)?;
    let mut out = Outcome {
        checks: vec![Check::at_most("max_relative_deviation", r.max_deviation, c.tol(1e-5))],
        tables: vec![Table {
            name: "pairing".into(),
            header: vec!["time", "pairing"],
            rows: r.times.iter().zip(&r.pairings).map(|(t, p)| vec![*t, *p]).collect(),
        }],
        plots: vec![(
            "pairing".into(),
            Plot {
                title: "pairing (F(t), G(T - t))".into(),
                x_label: "t".into(),
                y_label: "pairing".into(),
                log_x: false,
                log_y: false,
                series: vec![Series { name: "pairing".into(), x: r.times.clone(), y: r.pairings.clone(), err: None }],
            },
        )],
        ..Default::default()
    };
    let mut results = json!({ "trace": to_value(&r) });
    if let Some(dts) = &c.cfg.convergence_dts {
        let conv = pairing_convergence(&f0, &g0, &v, t, &pc, n_cp, dts)?;
        if let Some(&order) = conv.orders.first() {
            out.checks.push(Check::at_least("self_convergence_order", order, c.cfg.checks.min_order.unwrap_or(3.5)));
        }
        let m = conv.value_changes.len();
        out.tables.push(Table {
            name: "convergence".into(),
            header: vec!["dt", "value_change"],
            rows: (0..m).map(|i| vec![conv.dts[i], conv.value_changes[i]]).collect(),
        });
        out.plots.push((
            "convergence".into(),
            Plot {
                title: "pairing change under step halving".into(),
                x_label: "dt".into(),
                y_label: "max relative change".into(),
                log_x: true,
                log_y: true,
                series: vec![Series { name: "change".into(), x: conv.dts[..m].to_vec(), y: conv.value_changes.clone(), err: None }],
            },
        ));
        results["convergence"] = to_value(&conv);
    }
    out.results = results;
    Ok(out)
}

fn run_relation(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let v = c.velocity_on(&g)?;
    let (t, pc) = (c.t_final()?, c.strict_solver()?);
    let pairs: Vec<(VectorField, VectorField)> = match (&c.cfg.f0, &c.cfg.g0) {
        (Some(f), Some(h)) => vec![(f.evaluate(&g, 0.0, 1.0)?, h.evaluate(&g, 0.0, 1.0)?)],
        _ => {
            let seed = c.seed()?;
            (0..c.cfg.pairs.unwrap_or(5) as u64)
                .map(|k| {
                    let r = |s| Recipe::Random { seed: s, kmax: 3, amplitude: 1.0 }.evaluate(&g, 0.0, 1.0);
                    Ok((r(seed.wrapping_add(2 * k))?, r(seed.wrapping_add(2 * k + 1))?))
                })
                .collect::<Result<_>>()?
        }
    };
    let rels: Vec<duality::Relation> =
        pairs.iter().map(|(f, h)| duality::duality_relation(f, h, &v, t, &pc)).collect::<vecadvect::Result<_>>()?;
    let worst = rels.iter().map(|r| r.gap).fold(0.0, f64::max);
    Ok(Outcome {
        results: json!({ "relations": to_value(&rels), "max_gap": worst }),
        checks: vec![Check::at_most("max_relative_gap", worst, c.tol(1e-5))],
        tables: vec![Table {
            name: "relations".into(),
            header: vec!["pair", "left", "right", "gap"],
            rows: rels.iter().enumerate().map(|(i, r)| vec![i as f64, r.left, r.right, r.gap]).collect(),
        }],
        ..Default::default()
    })
}

fn run_serrin(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let seed = c.seed()?;
    let seeds: Vec<u64> = (0..c.cfg.pairs.unwrap_or(3) as u64).map(|k| seed.wrapping_add(k)).collect();
    let r = duality::serrin_experiment(c.nu()?, c.t_final()?, &g, &c.strict_solver()?, &seeds)?;
    let ratio_gap = (r.vorticity_ratio - r.expected_ratio).abs();
    Ok(Outcome {
        results: to_value(&r),
        checks: vec![Check::at_most("max_relative_gap", r.max_gap, c.tol(1e-5)), Check::at_most("vorticity_ratio_error", ratio_gap, 1e-8)],
        ..Default::default()
    })
}

fn estimate_meta(e: &FkEstimate, seed: u64) -> Value {
    json!({ "stderr": e.stderr, "h_se": e.h_se, "n_paths": e.n_paths, "seed": seed, "flow": e.flow, "flagged": e.flagged })
}

fn estimate_results(e: &FkEstimate) -> Value {
    json!({
        "flow": e.flow,
        "n_paths": e.n_paths,
        "flagged": e.flagged,
        "h_se": e.h_se,
        "projected_h_se": e.projected_h_se(),
        "stderr": e.stderr,
        "second_moment": e.second_moment,
    })
}

fn comparison_table(est: &VectorField, se: &VectorField, reference: &VectorField) -> Table {
    let rows = (0..est.grid().len())
        .map(|p| {
            let (a, b, s) = (est.at(p), reference.at(p), se.at(p));
            let gap = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
            let se = (0..3).map(|k| s[k] * s[k]).sum::<f64>().sqrt();
            vec![p as f64, gap, se]
        })
        .collect();
    Table { name: "comparison".into(), header: vec!["node", "gap", "se"], rows }
}

fn run_fk(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let f0 = c.field("f0", &c.cfg.f0, &g)?;
    let v = c.velocity_on(&g)?;
    let (t, s, seed) = (c.t_final()?, need(c.kind, "s", &c.cfg.s)?, c.seed()?);
    let fc = c.flow_config(seed)?;
    let phi = match c.cfg.flow {
        FlowChoice::Brownian => Some(c.stream(&g)?),
        FlowChoice::Identity => None,
    };
    let est = match &phi {
        Some(phi) => fk::fk_rot2d(&f0, phi, t, s, &fc)?,
        None => fk::fk_curve(&f0, &v, t, s, &fc)?,
    };
    let refine = c.cfg.refine.unwrap_or(2);
    let reference = fk::pde_reference_refined(&f0, |fine| c.velocity_on(fine).map_err(core_err), t, s, &c.solver()?, refine)?;
    let r = fk::compare_to_reference(&est, &reference, c.cfg.checks.floor.unwrap_or(0.02))?;
    let mut out = Outcome {
        results: json!({ "estimate": estimate_results(&est), "comparison": to_value(&r), "refine": refine }),
        checks: vec![Check::at_most("relative_h_gap", r.gap, r.threshold)],
        tables: vec![comparison_table(&est.field, &est.node_se, &reference)],
        ..Default::default()
    };
    if c.cfg.complex_check {
        let phi = phi.expect("validated");
        let mut small = fc.clone();
        small.n_paths = c.cfg.samples.unwrap_or(200).min(fc.n_paths);
        let chk = fk::fk_complex_check(&f0, &phi, t, s, &small)?;
        out.checks.push(Check::at_most("complex_state_gap", chk.max_state_gap, 1e-10));
        out.checks.push(Check::at_most("complex_estimate_gap", chk.max_estimate_gap, 1e-10));
        out.results["complex_check"] = json!({
            "n_paths": small.n_paths,
            "max_state_gap": chk.max_state_gap,
            "max_estimate_gap": chk.max_estimate_gap,
        });
    }
    if c.cfg.save_fields {
        out.fields.push(SavedField { name: "estimate".into(), meta: estimate_meta(&est, seed), field: est.field.clone() });
        out.fields.push(SavedField { name: "reference".into(), meta: json!({ "refine": refine }), field: reference });
    }
    Ok(out)
}

fn core_err(e: CliError) -> vecadvect::Error {
    match e {
        CliError::Core(e) | CliError::Guard(e) => e,
        other => vecadvect::Error::InvalidArgument(other.to_string()),
    }
}

fn run_surface(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let g0 = c.field("g0", &c.cfg.g0, &g)?;
    let v = c.velocity_on(&g)?;
    let (t, s, seed) = (c.t_final()?, need(c.kind, "s", &c.cfg.s)?, c.seed()?);
    let surf = fk::fk_surface(&fields::curl3(&g0)?, &v, t, s, &c.flow_config(seed)?)?;
    let curve = fk::fk_curve(&g0, &v, t, s, &c.flow_config(seed.wrapping_add(1))?)?;
    let r = fk::surface_consistency(&surf, &curve)?;
    let mut out = Outcome {
        results: json!({
            "surface": estimate_results(&surf),
            "curve": estimate_results(&curve),
            "consistency": to_value(&r),
        }),
        checks: vec![Check::at_most("h_gap_over_3se", r.gap / (3.0 * r.se), 1.0)],
        ..Default::default()
    };
    if c.cfg.save_fields {
        out.fields.push(SavedField { name: "surface".into(), meta: estimate_meta(&surf, seed), field: surf.raw });
        out.fields.push(SavedField { name: "curve".into(), meta: estimate_meta(&curve, seed.wrapping_add(1)), field: curve.raw });
    }
    Ok(out)
}

fn rotation(c: &Ctx, grid: &Grid) -> Result<RotationKind> {
    Ok(match c.cfg.flow {
        FlowChoice::Identity => RotationKind::Identity,
        FlowChoice::Brownian => RotationKind::brownian(&c.stream(grid)?, c.nu()?)?,
    })
}

fn run_martingale(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let f0 = c.field("f0", &c.cfg.f0, &g)?;
    let v = c.velocity_on(&g)?;
    let spec = need(c.kind, "contour", &c.cfg.contour)?;
    let gamma = Contour::circle([spec.center[0], spec.center[1], 0.0], spec.radius, spec.points, 2)?;
    let fc = c.flow_config(c.seed()?)?.with_rotation(rotation(c, &g)?);
    let (t, s) = (c.t_final()?, need(c.kind, "s", &c.cfg.s)?);
    let r = flows::martingale_test(&gamma, &f0, &v, t, s, &fc, &c.solver()?, c.cfg.checkpoints.unwrap_or(5))?;
    let checks = r
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, cp)| Check::at_most(&format!("checkpoint_{i}_deviation"), cp.deviation, 3.0 * cp.se + cp.bias_allowance))
        .collect();
    let mut times = vec![t - s];
    let mut means = vec![r.baseline];
    let mut ses = vec![0.0];
    for cp in &r.checkpoints {
        times.push(cp.time);
        means.push(cp.mean);
        ses.push(cp.se);
    }
    Ok(Outcome {
        results: to_value(&r),
        checks,
        tables: vec![Table {
            name: "martingale".into(),
            header: vec!["time", "mean", "se", "deviation", "bias_allowance"],
            rows: r.checkpoints.iter().map(|cp| vec![cp.time, cp.mean, cp.se, cp.deviation, cp.bias_allowance]).collect(),
        }],
        plots: vec![(
            "martingale".into(),
            Plot {
                title: format!("E M(t), {} flow, 3 SE bars", r.flow),
                x_label: "t".into(),
                y_label: "E M(t)".into(),
                log_x: false,
                log_y: false,
                series: vec![Series { name: "E M(t)".into(), x: times, y: means, err: Some(ses.iter().map(|s| 3.0 * s).collect()) }],
            },
        )],
        ..Default::default()
    })
}

fn run_one_point(c: &Ctx) -> Result<Outcome> {
    let rot = match c.cfg.flow {
        FlowChoice::Identity => RotationKind::Identity,
        FlowChoice::Brownian => rotation(c, &c.grid()?)?,
    };
    let fc = c.flow_config(c.seed()?)?.with_rotation(rot);
    let x0 = c.cfg.x0.unwrap_or([1.0, 2.0]);
    let t = c.t_final()?;
    let r = flows::one_point_law_test([x0[0], x0[1], 0.0], t, &fc)?;
    let mut checks = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let target = if i == j { r.expected_var } else { 0.0 };
            checks.push(Check::at_most(&format!("cov_{i}{j}_error"), (r.cov[i][j] - target).abs(), 3.0 * r.cov_se[i][j]));
        }
        checks.push(Check::at_most(&format!("mean_{i}"), r.mean[i].abs(), 3.0 * r.mean_se[i]));
    }
    Ok(Outcome { results: to_value(&r), checks, ..Default::default() })
}

fn random_ball(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
        if v.norm() <= r {
            return v;
        }
    }
}

fn random_rotation_field(rng: &mut ChaCha8Rng) -> so3::RotationField {
    let base = random_ball(rng, 1.5);
    let terms: Vec<(Vector3<f64>, Vector3<f64>, f64)> = (0..3)
        .map(|_| {
            let m = Vector3::new(rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64);
            (m, random_ball(rng, 0.6), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let t2 = terms.clone();
    so3::RotationField::analytic(
        move |x| {
            let x = Vector3::from(*x);
            terms.iter().fold(base, |acc, (m, c, p)| acc + c * (m.dot(&x) + p).sin())
        },
        move |x| {
            let x = Vector3::from(*x);
            t2.iter().fold(Matrix3::zeros(), |acc, (m, c, p)| acc + c * m.transpose() * (m.dot(&x) + p).cos())
        },
    )
}

fn run_so3(c: &Ctx) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed()?);
    let n = c.cfg.samples.unwrap_or(1000);
    let mut exp_err: f64 = 0.0;
    let mut bch_err: f64 = 0.0;
    for _ in 0..n {
        let a = random_ball(&mut rng, 3.0);
        exp_err = exp_err.max((so3::exp_so3(&a).matrix() - Rotation3::new(a).matrix()).abs().max());
        let (u, w) = (random_ball(&mut rng, 1.0), random_ball(&mut rng, 1.0));
        let oracle = (Rotation3::new(u) * Rotation3::new(w)).scaled_axis();
        bch_err = bch_err.max((so3::bch(&u, &w)?.value - oracle).norm());
    }
    let h = 1e-5;
    let mut fd_err: f64 = 0.0;
    for _ in 0..n.div_ceil(10) {
        let field = random_rotation_field(&mut rng);
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
        let rot = |y: &[f64; 3]| *Rotation3::new(field.eval(y).0).matrix();
        for k in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let fd = rot(&x).transpose() * (rot(&xp) - rot(&xm)) / (2.0 * h);
            fd_err = fd_err.max((so3::correction_term(&field, &x, k) - fd).abs().max());
        }
    }
    let mut switch: f64 = 0.0;
    for _ in 0..n {
        let dir = random_ball(&mut rng, 1.0).normalize();
        let da = random_ball(&mut rng, 3.0);
        let (lo, hi) = (dir * (so3::SMALL_ANGLE * (1.0 - 1e-9)), dir * (so3::SMALL_ANGLE * (1.0 + 1e-9)));
        switch = switch.max((so3::correction_vector(&lo, &da) - so3::correction_vector(&hi, &da)).norm());
    }
    Ok(Outcome {
        results: json!({ "samples": n, "exp": exp_err, "bch": bch_err, "correction": fd_err, "branch_switch": switch }),
        checks: vec![
            Check::at_most("exp_error", exp_err, 1e-12),
            Check::at_most("bch_error", bch_err, 1e-8),
            Check::at_most("correction_fd_error", fd_err, 1e-6),
            Check::at_most("branch_switch_jump", switch, 1e-9),
        ],
        ..Default::default()
    })
}

fn run_scaling(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let f0 = c.field("f0", &c.cfg.f0, &g)?;
    let v = c.velocity_on(&g)?;
    let lambda = c.cfg.lambda.unwrap_or(2.0);
    let r = duality::scaling_intertwining(&f0, &v, c.t_final()?, lambda, &c.strict_solver()?)?;
    Ok(Outcome { results: to_value(r), checks: vec![Check::at_most("relative_gap", r.gap, c.tol(1e-6))], ..Default::default() })
}

fn run_solve(c: &Ctx) -> Result<Outcome> {
    let g = c.grid()?;
    let f0 = c.field("f0", &c.cfg.f0, &g)?;
    let v = c.velocity_on(&g)?;
    let (t, pc) = (c.t_final()?, c.strict_solver()?);
    let (steps, _) = pde::step_count(t, pc.dt);
    let stride = steps.div_ceil(c.cfg.checkpoints.unwrap_or(10)).max(1);
    let traj = pde::solve_f_with(&f0, &v, &ForcingSpec::none(), t, &pc, Record::Every(stride))?;
    let norms: Vec<f64> = traj.snapshots.iter().map(fields::norm_h).collect();
    let divs: Vec<f64> = traj.snapshots.iter().map(fields::max_divergence).collect();
    let worst_div = divs.iter().copied().fold(0.0, f64::max);
    let last = traj.snapshots.last().expect("final state").clone();
    let mut out = Outcome {
        results: json!({ "times": traj.times, "norm_h": norms, "max_divergence": worst_div, "dt": traj.dt }),
        checks: vec![Check::at_most("max_divergence", worst_div, c.tol(1e-10))],
        tables: vec![Table {
            name: "norms".into(),
            header: vec!["time", "norm_h", "max_divergence"],
            rows: (0..norms.len()).map(|i| vec![traj.times[i], norms[i], divs[i]]).collect(),
        }],
        plots: vec![(
            "norm".into(),
            Plot {
                title: "|F(t)|_H".into(),
                x_label: "t".into(),
                y_label: "norm".into(),
                log_x: false,
                log_y: false,
                series: vec![Series { name: "|F|".into(), x: traj.times.clone(), y: norms, err: None }],
            },
        )],
        ..Default::default()
    };
    if c.cfg.save_fields {
        out.fields.push(SavedField { name: "final".into(), meta: json!({ "time": t }), field: last });
    }
    Ok(out)
}
