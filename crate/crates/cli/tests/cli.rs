use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use vecadvect::fields::{io, Recipe};
use vecadvect::Grid;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vecadvect"));
    c.env_remove("VECADVECT_OUT");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn duality(velocity: Value) -> Value {
    json!({
        "kind": "duality",
        "grid": { "sizes": [8, 8] },
        "nu": 0.1,
        "t_final": 0.2,
        "dt": 0.01,
        "velocity": velocity,
        "f0": { "name": "random", "seed": 1, "kmax": 2 },
        "g0": { "name": "random", "seed": 2, "kmax": 2 },
        "checkpoints": 4
    })
}

fn small_fk() -> Value {
    json!({
        "kind": "fk2d",
        "grid": { "sizes": [8, 8] },
        "nu": 0.1,
        "t_final": 0.5,
        "s": 0.25,
        "flow_dt": 0.05,
        "n_paths": 200,
        "seed": 5,
        "velocity": { "name": "taylor_green_2d", "nu": 0.0 },
        "f0": { "name": "random", "seed": 1, "kmax": 2 },
        "save_fields": true
    })
}

#[test]
fn duality_with_zero_velocity_gives_flat_pairing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.json", &duality(json!({ "name": "zero" })));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", "out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = tmp.path().join("out");
    let csv = std::fs::read_to_string(out.join("pairing.csv")).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 5);
    assert!(values.iter().all(|v| (v - values[0]).abs() <= 1e-12 * values[0].abs()));
    let svg = std::fs::read_to_string(out.join("plot_pairing.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["tool"], "vecadvect");
    assert_eq!(manifest["kind"], "duality");
    assert_eq!(manifest["config"]["grid"]["sizes"], json!([8, 8]));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(manifest["version"].is_string());
    assert_eq!(read_json(&out.join("result.json"))["passed"], true);
}

#[test]
fn every_plot_has_a_csv_sibling() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = duality(json!({ "name": "taylor_green_2d", "nu": 0.0 }));
    cfg["convergence_dts"] = json!([0.05, 0.025, 0.0125]);
    cfg["checks"] = json!({ "min_order": 0.0 });
    let p = write_config(tmp.path(), "d.json", &cfg);
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", "out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svgs: Vec<PathBuf> = std::fs::read_dir(tmp.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    assert_eq!(svgs.len(), 2);
    for s in svgs {
        let csv = std::fs::read_to_string(s.with_extension("csv")).unwrap();
        assert!(csv.starts_with("series,x,y,err"));
    }
}

#[test]
fn missing_seed_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "kind": "martingale",
        "grid": { "sizes": [16, 16] },
        "nu": 0.1,
        "t_final": 0.5,
        "s": 0.25,
        "flow_dt": 0.01,
        "n_paths": 10,
        "velocity": { "name": "taylor_green_2d", "nu": 0.0 },
        "f0": { "name": "random", "seed": 1, "kmax": 2 },
        "contour": { "center": [2.0, 1.0], "radius": 0.5, "points": 32 }
    });
    let p = write_config(tmp.path(), "m.json", &cfg);
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", "out"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_recipes_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = duality(json!({ "name": "zero" }));
    cfg["checkpoint"] = json!(3);
    let p = write_config(tmp.path(), "a.json", &cfg);
    let o = run(&["run", "--config", p.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));

    let cfg = duality(json!({ "name": "hill_vortex" }));
    let p = write_config(tmp.path(), "b.json", &cfg);
    assert_eq!(code(&run(&["run", "--config", p.to_str().unwrap()], tmp.path())), 2);

    let cfg = duality(json!({ "name": "zero", "amp": 2.0 }));
    let p = write_config(tmp.path(), "c.json", &cfg);
    assert_eq!(code(&run(&["run", "--config", p.to_str().unwrap()], tmp.path())), 2);

    let o = run(&["run", "--config", "does-not-exist.json"], tmp.path());
    assert_ne!(code(&o), 0);
}

#[test]
fn failed_check_exits_with_acceptance_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = duality(json!({ "name": "taylor_green_2d", "nu": 0.0 }));
    cfg["checks"] = json!({ "tolerance": -1.0 });
    let p = write_config(tmp.path(), "d.json", &cfg);
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", "out"], tmp.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert_eq!(read_json(&tmp.path().join("out/result.json"))["passed"], false);
}

#[test]
fn tripped_guard_exits_with_guard_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_fk();
    cfg["flow_dt"] = json!(0.25);
    cfg["velocity"] = json!({ "name": "taylor_green_2d", "nu": 0.0 });
    cfg["grid"] = json!({ "sizes": [32, 32] });
    let p = write_config(tmp.path(), "f.json", &cfg);
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", "out"], tmp.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(read_json(&tmp.path().join("out/manifest.json"))["error"].as_str().unwrap().contains("CFL"));
}

#[test]
fn reruns_are_identical_and_seed_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), "f.json", &small_fk());
    let cfg = p.to_str().unwrap();
    for (out, extra) in [("a", None), ("b", None), ("c", Some("99"))] {
        let mut args = vec!["run", "--config", cfg, "--out", out];
        if let Some(s) = extra {
            args.extend(["--seed", s]);
        }
        let o = run(&args, tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let bytes = |d: &str, f: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(bytes("a", "result.json"), bytes("b", "result.json"));
    assert_eq!(bytes("a", "estimate.vaf"), bytes("b", "estimate.vaf"));
    assert_ne!(bytes("a", "result.json"), bytes("c", "result.json"));
    assert_eq!(read_json(&tmp.path().join("c/manifest.json"))["config"]["seed"], 99);
    let meta = read_json(&tmp.path().join("a/estimate.json"));
    assert_eq!(meta["n_paths"], 200);
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["flow"], "Identity");
    let comparison = std::fs::read_to_string(tmp.path().join("a/comparison.csv")).unwrap();
    assert_eq!(comparison.lines().next().unwrap(), "node,gap,se");
    assert_eq!(comparison.lines().count(), 65);
}

#[test]
fn output_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), "d.json", &duality(json!({ "name": "zero" })));
    let o = bin().args(["run", "--config", p.to_str().unwrap()]).env("VECADVECT_OUT", "from-env").current_dir(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("from-env/result.json").exists());

    let mut cfg = duality(json!({ "name": "zero" }));
    cfg["output_dir"] = json!("from-config");
    let p = write_config(tmp.path(), "e.json", &cfg);
    let o =
        bin().args(["run", "--config", p.to_str().unwrap()]).env("VECADVECT_OUT", "from-env-2").current_dir(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("from-config/result.json").exists());
    assert!(!tmp.path().join("from-env-2").exists());
}

fn write_taylor_green(dir: &Path) -> PathBuf {
    let g = Grid::periodic(2, 16).unwrap();
    let f = Recipe::TaylorGreen2d { nu: 0.0 }.evaluate(&g, 0.0, 1.0).unwrap();
    let p = dir.join("tg.vaf");
    io::save_vector(&p, &f).unwrap();
    p
}

#[test]
fn inspect_reports_header_and_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_taylor_green(tmp.path());
    let o = run(&["inspect", p.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("dim: 2") && text.contains("sizes: [16, 16]"));
    assert!(text.contains("component 0: min") && text.contains("component 1: min"));
    let line = text.lines().find(|l| l.starts_with("divergence:")).unwrap();
    let nums: Vec<f64> = line.split_whitespace().filter_map(|w| w.parse().ok()).collect();
    assert_eq!(nums.len(), 2);
    assert!(nums.iter().all(|&d| d <= 1e-12), "{line}");
}

#[test]
fn inspect_rejects_truncated_file() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_taylor_green(tmp.path());
    let bytes = std::fs::read(&p).unwrap();
    let cut = tmp.path().join("cut.vaf");
    std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
    let o = run(&["inspect", cut.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    std::fs::write(&cut, b"NOPE").unwrap();
    assert_eq!(code(&run(&["inspect", cut.to_str().unwrap()], tmp.path())), 2);
}

#[test]
fn convert_round_trip_preserves_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let g = Grid::new(&[8, 12, 10], &[1.0, 2.5, std::f64::consts::TAU]).unwrap();
    let f = Recipe::Random { seed: 4, kmax: 3, amplitude: 1.0 }.evaluate(&Grid::periodic(3, 8).unwrap(), 0.0, 1.0).unwrap();
    let raw =
        io::RawField { grid: g.clone(), comps: vec![vec![0.1 + 1e-17; g.len()], (0..g.len()).map(|i| (i as f64).sqrt() / 3.0).collect()] };
    let a = tmp.path().join("a.vaf");
    io::write(&a, &raw).unwrap();
    let b = tmp.path().join("b.vaf");
    io::save_vector(&b, &f).unwrap();
    for src in [a, b] {
        let s = src.to_str().unwrap();
        assert_eq!(code(&run(&["convert", s, "mid.json"], tmp.path())), 0);
        assert_eq!(code(&run(&["convert", "mid.json", "back.vaf"], tmp.path())), 0);
        assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(tmp.path().join("back.vaf")).unwrap());
    }
}

#[test]
fn suite_writes_summary_table() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quick-suite.json");
    let o = run(&["suite", "--config", suite, "--out", "s"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(tmp.path().join("s/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "name,kind,passed,failed_checks,error,wall_time_s");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(2) == Some("true")));
    assert!(tmp.path().join("s/fk2d/result.json").exists());
}

#[test]
fn suite_records_failures_and_exits_with_acceptance_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bad = small_fk();
    bad["flow_dt"] = json!(0.25);
    bad["grid"] = json!({ "sizes": [32, 32] });
    let mut strict = duality(json!({ "name": "taylor_green_2d", "nu": 0.0 }));
    strict["checks"] = json!({ "tolerance": -1.0 });
    let suite = json!({ "experiments": [
        { "name": "ok", "config": duality(json!({ "name": "zero" })) },
        { "name": "guard", "config": bad },
        { "name": "strict", "config": strict },
    ]});
    let p = write_config(tmp.path(), "suite.json", &suite);
    let o = run(&["suite", "--config", p.to_str().unwrap(), "--out", "s"], tmp.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let summary = std::fs::read_to_string(tmp.path().join("s/summary.csv")).unwrap();
    assert!(summary.contains("ok,duality,true"));
    assert!(summary.contains("guard,fk2d,false,,numerical guard tripped"));
    assert!(summary.contains("strict,duality,false,max_relative_deviation"));

    let broken = json!({ "experiments": [{ "name": "x", "config": { "kind": "solve" } }] });
    let p = write_config(tmp.path(), "broken.json", &broken);
    assert_eq!(code(&run(&["suite", "--config", p.to_str().unwrap(), "--out", "t"], tmp.path())), 2);
}

#[test]
fn builtin_suite_parses_and_covers_every_stochastic_criterion() {
    let s = vecadvect_cli::suite::SuiteConfig::from_json(vecadvect_cli::suite::DEFAULT_SUITE).unwrap();
    let kinds: Vec<&str> = s.experiments.iter().map(|e| e.config.kind.name()).collect();
    for k in ["duality", "duality-relation", "serrin", "fk2d", "one-point-law", "martingale", "so3-check", "fk-surface"] {
        assert!(kinds.contains(&k), "{k}");
    }
}

#[test]
fn other_kinds_run() {
    let tmp = tempfile::tempdir().unwrap();
    let tg = json!({ "name": "taylor_green_2d", "nu": 0.0 });
    let f0 = json!({ "name": "random", "seed": 1, "kmax": 2 });
    let configs = [
        json!({ "kind": "solve", "grid": { "sizes": [16, 16] }, "nu": 0.1, "t_final": 0.2, "dt": 0.01, "velocity": tg, "f0": f0, "save_fields": true }),
        json!({ "kind": "scaling", "grid": { "sizes": [16, 16] }, "nu": 0.05, "t_final": 0.1, "dt": 1e-3, "velocity": tg, "f0": f0 }),
        json!({ "kind": "one-point-law", "grid": { "sizes": [16, 16] }, "nu": 0.5, "t_final": 0.5, "flow_dt": 0.05,
                "n_paths": 4000, "seed": 3, "flow": "brownian", "velocity": tg }),
        json!({ "kind": "one-point-law", "nu": 0.5, "t_final": 0.5, "flow_dt": 0.05, "n_paths": 4000, "seed": 3 }),
        json!({ "kind": "so3-check", "seed": 1, "samples": 50 }),
        json!({ "kind": "duality-relation", "grid": { "sizes": [16, 16, 16] }, "nu": 0.1, "t_final": 0.1, "dt": 0.01,
                "velocity": { "name": "abc_flow", "a": 1.0, "b": 1.0, "c": 1.0 }, "seed": 2, "pairs": 2 }),
        json!({ "kind": "serrin", "grid": { "sizes": [16, 16, 8] }, "nu": 0.1, "t_final": 0.1, "dt": 0.01, "seed": 2, "pairs": 1 }),
        json!({ "kind": "martingale", "grid": { "sizes": [16, 16] }, "nu": 0.1, "t_final": 0.2, "s": 0.1, "flow_dt": 0.02,
                "n_paths": 200, "seed": 4, "velocity": tg, "f0": f0,
                "contour": { "center": [2.0, 1.0], "radius": 0.5, "points": 32 }, "checkpoints": 2 }),
        json!({ "kind": "fk3d", "grid": { "sizes": [8, 8, 8] }, "nu": 0.1, "t_final": 0.1, "s": 0.1, "flow_dt": 0.05,
                "n_paths": 100, "seed": 4, "velocity": { "name": "abc_flow", "a": 1.0, "b": 1.0, "c": 1.0 }, "f0": f0 }),
        json!({ "kind": "fk-surface", "grid": { "sizes": [8, 8, 8] }, "nu": 0.1, "t_final": 0.1, "s": 0.1, "flow_dt": 0.05,
                "n_paths": 100, "seed": 4, "velocity": { "name": "abc_flow", "a": 1.0, "b": 1.0, "c": 1.0 }, "g0": f0 }),
        json!({ "kind": "fk2d", "grid": { "sizes": [8, 8] }, "nu": 0.5, "t_final": 0.5, "s": 0.25, "flow_dt": 0.025,
                "n_paths": 100, "seed": 4, "velocity": tg, "f0": f0, "flow": "brownian", "complex_check": true, "samples": 20 }),
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let p = write_config(tmp.path(), &format!("{i}.json"), cfg);
        let out = format!("o{i}");
        let o = run(&["--threads", "2", "run", "--config", p.to_str().unwrap(), "--out", &out], tmp.path());
        assert_eq!(code(&o), 0, "{}: {}", cfg["kind"], stderr(&o));
        let r = read_json(&tmp.path().join(&out).join("result.json"));
        assert_eq!(r["passed"], true, "{r}");
    }
    assert!(tmp.path().join("o0/final.vaf").exists());
    assert!(tmp.path().join("o0/plot_norm.svg").exists() && tmp.path().join("o0/plot_norm.csv").exists());
    assert!(tmp.path().join("o7/plot_martingale.svg").exists());
}
