use proptest::prelude::*;
use vecadvect::fields::{self, Recipe};
use vecadvect::pde::{self, ForcingSpec, Record, Scheme, SolverConfig, TimeDependentVelocity, VelocitySource};
use vecadvect::{Error, Grid, VectorField};

fn random(grid: &Grid, seed: u64, kmax: u32) -> VectorField {
    fields::analytic_field(&Recipe::Random { seed, kmax, amplitude: 1.0 }, grid, 0.0).unwrap()
}

fn rel(a: &VectorField, b: &VectorField) -> f64 {
    a.sub(b).unwrap().max_abs() / b.max_abs().max(1e-300)
}

fn abc(g: &Grid) -> TimeDependentVelocity {
    TimeDependentVelocity::analytic(Recipe::AbcFlow { a: 1.0, b: 1.0, c: 1.0 }, g).unwrap()
}

#[test]
fn zero_velocity_is_heat_semigroup() {
    let g = Grid::periodic(2, 16).unwrap();
    let nu = 0.2;
    let cfg = SolverConfig::new(nu, 0.01).unwrap();
    let f0 = VectorField::from_fn(&g, |x| [0.0, x[0].sin(), 0.0]);
    let out = pde::transport(&f0, &TimeDependentVelocity::zero(&g), 0.5, &cfg).unwrap();
    let want = f0.scale((-nu * 0.5f64).exp());
    assert!(out.sub(&want).unwrap().max_abs() < 1e-12);
    let r = random(&g, 3, 5);
    let out = pde::transport(&r, &TimeDependentVelocity::zero(&g), 0.5, &cfg).unwrap();
    assert!(out.sub(&fields::heat(&r, nu, 0.5)).unwrap().max_abs() < 1e-12);
    let gt = pde::solve_g(&r, &TimeDependentVelocity::zero(&g), &ForcingSpec::none(), 0.5, &cfg).unwrap();
    assert!(gt.last().sub(&fields::heat(&r, nu, 0.5)).unwrap().max_abs() < 1e-12);
}

#[test]
fn transport_at_zero_time_is_identity() {
    let g = Grid::periodic(3, 8).unwrap();
    let f0 = random(&g, 1, 2);
    let cfg = SolverConfig::new(0.1, 0.01).unwrap();
    assert_eq!(pde::transport(&f0, &abc(&g), 0.0, &cfg).unwrap(), f0);
}

#[test]
fn taylor_green_is_self_consistent() {
    let g = Grid::periodic(2, 32).unwrap();
    let nu = 0.05;
    let tg = Recipe::TaylorGreen2d { nu };
    let v = TimeDependentVelocity::analytic(tg.clone(), &g).unwrap();
    let u0 = fields::analytic_field(&tg, &g, 0.0).unwrap();
    let cfg = SolverConfig::new(nu, 1e-3).unwrap();
    let tr = pde::solve_f_with(&u0, &v, &ForcingSpec::none(), 1.0, &cfg, Record::Every(100)).unwrap();
    for (t, f) in tr.times.iter().zip(&tr.snapshots) {
        let exact = fields::analytic_field(&tg, &g, *t).unwrap();
        assert!(rel(f, &exact) < 1e-6, "t={t}");
    }
}

#[test]
fn b_closed_form_for_constant_velocity() {
    let g = Grid::periodic(2, 16).unwrap();
    let (c1, c2) = (0.7, -1.3);
    let v = VectorField::from_fn(&g, |_| [c1, c2, 0.0]);
    let f = VectorField::from_fn(&g, |x| [0.0, x[0].sin(), 0.0]);
    let b = pde::nonlinearity_b(&v, &f).unwrap();
    let want = VectorField::from_fn(&g, |x| [0.0, -c1 * x[0].cos(), 0.0]);
    assert!(b.sub(&want).unwrap().max_abs() < 1e-13);
    assert_eq!(pde::nonlinearity_b(&VectorField::zeros(&g), &f).unwrap().max_abs(), 0.0);
}

#[test]
fn b_forms_agree() {
    let g3 = Grid::periodic(3, 16).unwrap();
    for seed in 0..3 {
        let v = random(&g3, 100 + seed, 3);
        let f = random(&g3, 200 + seed, 3);
        let a = pde::nonlinearity_b(&v, &f).unwrap();
        let b = pde::nonlinearity_b_gradient_form(&v, &f).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-10);
        assert!(fields::max_divergence(&a) < 1e-10);
        // the pre-projection cross product matches v x curl F pointwise
        let direct = fields::helmholtz_project(&fields::cross(&v, &fields::curl3(&f).unwrap()).unwrap());
        assert!(a.sub(&direct).unwrap().max_abs() < 1e-10);
    }
    let g2 = Grid::periodic(2, 16).unwrap();
    let v = random(&g2, 5, 3);
    let f = random(&g2, 6, 3);
    let b = pde::nonlinearity_b(&v, &f).unwrap();
    let v3 = v.embed_3d(8, std::f64::consts::TAU).unwrap();
    let f3 = f.embed_3d(8, std::f64::consts::TAU).unwrap();
    let b3 = pde::nonlinearity_b(&v3, &f3).unwrap();
    for p in 0..g2.len() {
        assert!((b.comp(0)[p] - b3.comp(0)[p * 8]).abs() < 1e-12);
        assert!((b.comp(1)[p] - b3.comp(1)[p * 8]).abs() < 1e-12);
    }
}

#[test]
fn curl_cross_forms_agree_for_resolved_products() {
    for g in [Grid::periodic(2, 16).unwrap(), Grid::periodic(3, 16).unwrap()] {
        let v = random(&g, 7, 2);
        let w = random(&g, 8, 2);
        let a = pde::curl_cross(&v, &w).unwrap();
        let b = pde::curl_cross_identity_form(&v, &w).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-11);
    }
}

#[test]
fn g_equation_under_reversed_velocity_carries_curl_f() {
    let g = Grid::periodic(3, 16).unwrap();
    let t_final = 0.2;
    let cfg = SolverConfig::new(0.05, 2e-3).unwrap();
    let v = abc(&g);
    let f0 = random(&g, 21, 3);
    let g0 = fields::curl3(&f0).unwrap();
    let tf = pde::solve_f_with(&f0, &v, &ForcingSpec::none(), t_final, &cfg, Record::Every(20)).unwrap();
    let tg = pde::solve_g_with(&g0, &v.time_reverse(t_final), &ForcingSpec::none(), t_final, &cfg, Record::Every(20)).unwrap();
    for (a, b) in tf.snapshots.iter().zip(&tg.snapshots) {
        let c = fields::curl3(a).unwrap();
        assert!(c.sub(b).unwrap().max_abs() < 1e-8);
    }
}

#[test]
fn manufactured_steady_solution_converges_at_fourth_order() {
    let g = Grid::periodic(2, 16).unwrap();
    let nu = 0.3;
    let v = VectorField::from_fn(&g, |x| [-(x[1]).sin(), 0.5 * x[0].cos(), 0.0]);
    let w = random(&g, 31, 3);
    let vtd = TimeDependentVelocity::frozen(v.clone()).unwrap();
    // steady state W needs forcing f = -nu Lap W + B(v, W)
    let f = fields::vector_laplacian(&w).scale(-nu).add(&pde::nonlinearity_b(&v, &w).unwrap()).unwrap();
    let forcing = ForcingSpec(Some(TimeDependentVelocity::frozen(fields::dealias(&f)).unwrap()));
    let mut cfg = SolverConfig::new(nu, 0.1).unwrap();
    cfg.dealias = false;
    let mut errs = Vec::new();
    for dt in [0.1, 0.05, 0.025] {
        cfg.dt = dt;
        let tr = pde::solve_f_with(&w, &vtd, &forcing, 1.0, &cfg, Record::FinalOnly).unwrap();
        errs.push(tr.last().sub(&w).unwrap().max_abs());
    }
    for i in 0..2 {
        let ratio = errs[i] / errs[i + 1];
        assert!(ratio > 12.0, "errors {errs:?}");
    }
}

#[test]
fn cfl_guard_rejects_large_steps() {
    let g = Grid::periodic(3, 16).unwrap();
    let cfg = SolverConfig::new(0.05, 0.1).unwrap();
    let f0 = random(&g, 1, 2);
    assert!(matches!(pde::transport(&f0, &abc(&g), 0.5, &cfg), Err(Error::Cfl(_))));
    assert!(SolverConfig::new(0.0, 0.1).is_err());
    assert!(SolverConfig::new(0.1, -1.0).is_err());
}

#[test]
fn rejects_divergent_initial_data() {
    let g = Grid::periodic(2, 8).unwrap();
    let f0 = VectorField::from_fn(&g, |x| [x[0].sin(), 0.0, 0.0]);
    let cfg = SolverConfig::new(0.1, 0.01).unwrap();
    assert!(matches!(pde::transport(&f0, &TimeDependentVelocity::zero(&g), 0.1, &cfg), Err(Error::NotDivergenceFree(_))));
    assert!(TimeDependentVelocity::frozen(f0).is_err());
}

#[test]
fn time_reversal() {
    let g = Grid::periodic(2, 8).unwrap();
    let v = random(&g, 2, 2);
    let fr = TimeDependentVelocity::frozen(v.clone()).unwrap().time_reverse(1.0);
    assert_eq!(fr.at(0.3).into_owned(), v.scale(-1.0));
    let samples: Vec<VectorField> = (0..5).map(|i| random(&g, 10 + i, 2)).collect();
    let s = TimeDependentVelocity::sampled(0.0, 0.25, samples.clone()).unwrap();
    let r = s.time_reverse(1.0);
    match r.source() {
        VelocitySource::Sampled { t0, fields, .. } => {
            assert_eq!(*t0, 0.0);
            for i in 0..5 {
                assert_eq!(fields[i], samples[4 - i].scale(-1.0));
            }
        }
        _ => panic!("sampled source expected"),
    }
    for i in 0..5 {
        let t = i as f64 * 0.25;
        assert_eq!(r.at(t).into_owned(), s.at(1.0 - t).scale(-1.0));
    }
    assert_eq!(r.time_reverse(1.0), s);
    let a = TimeDependentVelocity::analytic(Recipe::TaylorGreen2d { nu: 0.3 }, &g).unwrap();
    let ar = a.time_reverse(0.8);
    let diff = ar.at(0.2).sub(&a.at(0.6).scale(-1.0)).unwrap().max_abs();
    assert!(diff < 1e-15);
    let back = ar.time_reverse(0.8);
    assert!(back.at(0.37).sub(&a.at(0.37)).unwrap().max_abs() < 1e-15);
}

#[test]
fn semigroup_property() {
    let g = Grid::periodic(2, 16).unwrap();
    let nu = 0.1;
    let v = TimeDependentVelocity::analytic(Recipe::TaylorGreen2d { nu }, &g).unwrap();
    let cfg = SolverConfig::new(nu, 1e-3).unwrap();
    let f0 = random(&g, 4, 3);
    let full = pde::transport(&f0, &v, 0.4, &cfg).unwrap();
    let half = pde::transport(&f0, &v, 0.2, &cfg).unwrap();
    let rest = pde::transport(&half, &v.shifted(0.2), 0.2, &cfg).unwrap();
    assert!(full.sub(&rest).unwrap().max_abs() < 1e-9);
}

#[test]
fn divergence_is_preserved() {
    let g = Grid::periodic(3, 16).unwrap();
    let cfg = SolverConfig::new(0.05, 5e-3).unwrap();
    let f0 = random(&g, 9, 3);
    let tr = pde::solve_f(&f0, &abc(&g), &ForcingSpec::none(), 0.2, &cfg).unwrap();
    assert!(tr.max_divergence() < 1e-9);
    let tg = pde::solve_g(&f0, &abc(&g), &ForcingSpec::none(), 0.2, &cfg).unwrap();
    assert!(tg.max_divergence() < 1e-9);
}

#[test]
fn euler_scheme_is_first_order() {
    let g = Grid::periodic(2, 16).unwrap();
    let v = TimeDependentVelocity::frozen(random(&g, 40, 2)).unwrap();
    let f0 = random(&g, 41, 3);
    let reference = pde::transport(&f0, &v, 0.2, &SolverConfig::new(0.1, 1e-3).unwrap()).unwrap();
    let e = |dt: f64| {
        let cfg = SolverConfig::new(0.1, dt).unwrap().with_scheme(Scheme::IfEuler);
        pde::transport(&f0, &v, 0.2, &cfg).unwrap().sub(&reference).unwrap().max_abs()
    };
    let ratio = e(0.02) / e(0.01);
    assert!((1.6..2.4).contains(&ratio), "{ratio}");
}

#[test]
fn energy_identity_residual_is_small() {
    let g = Grid::periodic(2, 32).unwrap();
    let nu = 0.1;
    let v = TimeDependentVelocity::analytic(Recipe::TaylorGreen2d { nu }, &g).unwrap();
    let cfg = SolverConfig::new(nu, 1e-3).unwrap();
    let f0 = random(&g, 12, 4);
    let tr = pde::solve_f(&f0, &v, &ForcingSpec::none(), 0.1, &cfg).unwrap();
    let rep = pde::energy_diagnostics(&tr, &v, &cfg).unwrap();
    assert!(rep.max_residual < 1e-6, "{}", rep.max_residual);
    assert!(rep.inequality_holds);
    let zero = TimeDependentVelocity::zero(&g);
    let tr = pde::solve_f_with(&f0, &zero, &ForcingSpec::none(), 0.5, &cfg, Record::Every(50)).unwrap();
    let rep = pde::energy_diagnostics(&tr, &zero, &cfg).unwrap();
    for w in rep.rows.windows(2) {
        assert!(w[1].energy < w[0].energy);
    }
    let u = fields::analytic_field(&Recipe::TaylorGreen2d { nu }, &g, 0.0).unwrap();
    assert!(pde::transfer_term(&u, &u).unwrap().abs() < 1e-13);
}

#[test]
fn trajectory_interpolation_and_dump() {
    let g = Grid::periodic(2, 8).unwrap();
    let cfg = SolverConfig::new(0.1, 0.05).unwrap();
    let f0 = random(&g, 1, 2);
    let tr = pde::solve_f(&f0, &TimeDependentVelocity::zero(&g), &ForcingSpec::none(), 0.2, &cfg).unwrap();
    assert_eq!(tr.times.len(), 5);
    let mid = tr.at(0.075).into_owned();
    let want = tr.snapshots[1].lincomb(0.5, &tr.snapshots[2], 0.5).unwrap();
    assert!(mid.sub(&want).unwrap().max_abs() < 1e-15);
    let dir = tempfile::tempdir().unwrap();
    tr.save(dir.path()).unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["scheme"], "IFRK4");
    assert_eq!(m["files"].as_array().unwrap().len(), 5);
    let s3 = fields::io::load_vector(dir.path().join("snap_00003.vaf")).unwrap();
    assert_eq!(s3, tr.snapshots[3]);
}

#[test]
fn scaling_roundtrip_is_bit_exact() {
    let g = Grid::periodic(2, 8).unwrap();
    let f = random(&g, 3, 2);
    for lambda in [0.5, 2.0, 1.0] {
        let s = pde::scaling_transform(&f, lambda).unwrap();
        let back = pde::scaling_transform(&s, 1.0 / lambda).unwrap();
        assert_eq!(back, f);
    }
    assert!(pde::scaling_transform(&f, 3.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn transport_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = Grid::periodic(2, 16).unwrap();
        let v = TimeDependentVelocity::analytic(Recipe::TaylorGreen2d { nu: 0.1 }, &g).unwrap();
        let cfg = SolverConfig::new(0.1, 0.01).unwrap();
        let f = random(&g, s1, 3);
        let h = random(&g, s2 + 5000, 3);
        let combo = pde::transport(&f.lincomb(a, &h, b).unwrap(), &v, 0.2, &cfg).unwrap();
        let sep = pde::transport(&f, &v, 0.2, &cfg).unwrap()
            .lincomb(a, &pde::transport(&h, &v, 0.2, &cfg).unwrap(), b).unwrap();
        prop_assert!(combo.sub(&sep).unwrap().max_abs() < 1e-10);
    }
}
