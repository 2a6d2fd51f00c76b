use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fds::errormap::{compute, ErrorMapConfig, ErrorMaps};
use fds::io;
use fds::manifest::load_scene;
use fds::train::read_metrics;
use fds_core::oracle::{OracleConfig, OracleKind};
use fds_core::Grid;
use serde_json::Value;

fn fds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fds"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = fds(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Exit code and the JSON error object from stderr.
fn fail(args: &[&str]) -> (i32, Value) {
    let out = fds(args);
    let err = String::from_utf8_lossy(&out.stderr);
    let json = err
        .lines()
        .last()
        .and_then(|l| serde_json::from_str(l).ok())
        .unwrap_or(Value::Null);
    (out.status.code().unwrap(), json)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn small_scene(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "gen-scene",
        "--out",
        s(dir),
        "--width",
        "32",
        "--height",
        "32",
        "--views",
        "4",
        "--test-views",
        "2",
        "--points",
        "300",
        "--floaters",
        "5",
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn short_train(scene: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec![
        "train",
        "--scene",
        s(scene),
        "--out",
        s(out),
        "--iters",
        "12",
        "--fds-start",
        "4",
        "--eval-every",
        "5",
        "--checkpoint-every",
        "6",
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn gen_scene_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    small_scene(&a, &[]);
    small_scene(&b, &[]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.contains_key(Path::new("scene.json")) && ta.contains_key(Path::new("initial.ckpt")));
    assert_eq!(ta.len(), 2 + 6 * 2);
    assert_eq!(ta, tb);

    let c = t.path().join("c");
    small_scene(&c, &["--seed", "1"]);
    assert_ne!(tree(&c), ta);
}

#[test]
fn usage_errors_exit_2() {
    let (code, json) = fail(&["gen-scene"]);
    assert_eq!(code, 2);
    assert_eq!(json["exit_code"], 2);
    assert_eq!(fail(&["frobnicate"]).0, 2);
    assert_eq!(fail(&["gen-scene", "--out", "x", "--kind", "teapot"]).0, 2);
}

#[test]
fn training_reruns_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene, &[]);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    short_train(&scene, &a, &[]);
    short_train(&scene, &b, &[]);
    for f in ["metrics.csv", "final.ckpt", "checkpoints/iter_000006.ckpt"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }

    let rows = read_metrics(&a.join("metrics.csv")).unwrap();
    let iters: Vec<usize> = rows.iter().map(|r| r.iter).collect();
    assert_eq!(iters, [0, 5, 10, 12]);
    assert!(rows[0].loss_fds.is_none() && rows[0].loss_total.is_none());
    assert!(rows[2].loss_fds.is_some() && rows[2].eps_t.is_some());
    let header = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(header.starts_with("iter,loss_total,loss_l1,loss_dssim,loss_fds,abs_rel,psnr,eps_t\n"));
}

#[test]
fn fds_off_leaves_the_distillation_column_empty() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene, &[]);
    let out = t.path().join("off");
    short_train(&scene, &out, &["--fds", "off"]);
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    assert!(rows
        .iter()
        .all(|r| r.loss_fds.is_none() && r.eps_t.is_none()));
    assert!(rows[1..].iter().all(|r| r.loss_total.is_some()));
}

#[test]
fn flags_override_the_config_file() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene, &[]);
    let cfg = t.path().join("run.toml");
    let text = format!(
        "scene = {:?}\nout = {:?}\n[schedule]\ntotal_iters = 7\nfds_start = 2\neval_every = 100\n[sampler]\nmode = \"fixed:0.25\"\n",
        s(&scene),
        s(&t.path().join("from_config"))
    );
    fs::write(&cfg, text).unwrap();

    let out = t.path().join("from_flag");
    let v = ok(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--iters",
        "3",
    ]);
    assert_eq!(v["iters"], 3);
    assert!(!t.path().join("from_config").exists());
    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("total_iters = 3"), "{resolved}");
    assert!(resolved.contains("mode = \"fixed:0.25\""), "{resolved}");

    fs::write(&cfg, "[schedule]\ntotal_itres = 5\n").unwrap();
    let (code, json) = fail(&[
        "train",
        "--config",
        s(&cfg),
        "--scene",
        s(&scene),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 2);
    assert_eq!(json["field"], "schedule.total_itres");
}

#[test]
fn eval_is_deterministic_and_validates_input() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene, &[]);
    let ckpt = scene.join("initial.ckpt");
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let va = ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--scene",
        s(&scene),
        "--out",
        s(&a),
    ]);
    ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--scene",
        s(&scene),
        "--out",
        s(&b),
    ]);
    assert_eq!(tree(&a), tree(&b));
    assert!(va["abs_rel"].as_f64().unwrap() > 0.0);
    for f in [
        "report.json",
        "report.csv",
        "view_001_depth.pfm",
        "view_001_abs_rel.ppm",
    ] {
        assert!(a.join(f).is_file(), "{f}");
    }

    let c = t.path().join("c");
    assert_eq!(
        fail(&[
            "eval",
            "--checkpoint",
            s(&ckpt),
            "--scene",
            s(&scene),
            "--split",
            "val",
            "--out",
            s(&c)
        ])
        .0,
        2
    );
    let missing = t.path().join("nope.ckpt");
    let (code, json) = fail(&[
        "eval",
        "--checkpoint",
        s(&missing),
        "--scene",
        s(&scene),
        "--out",
        s(&c),
    ]);
    assert_eq!(code, 3);
    assert_eq!(json["path"], s(&missing));
}

#[test]
fn perfect_initialisation_has_near_zero_depth_error() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    ok(&[
        "gen-scene",
        "--out",
        s(&scene),
        "--sigma-pos",
        "0",
        "--floaters",
        "0",
    ]);
    let out = t.path().join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        s(&scene.join("initial.ckpt")),
        "--scene",
        s(&scene),
        "--split",
        "train",
        "--out",
        s(&out),
    ]);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let views = report["views"].as_array().unwrap();
    assert_eq!(views.len(), 12);
    for v in views {
        let e = v["abs_rel"].as_f64().unwrap();
        assert!(e < 0.02, "view {} abs_rel {e}", v["view"]);
    }
}

fn trained(t: &Path) -> (PathBuf, PathBuf) {
    let scene = t.join("scene");
    small_scene(&scene, &[]);
    let run = t.join("run");
    short_train(&scene, &run, &[]);
    (scene, run.join("final.ckpt"))
}

#[test]
fn errormap_with_exact_prior_is_zero() {
    let t = tempfile::tempdir().unwrap();
    let (scene, ckpt) = trained(t.path());
    let out = t.path().join("map");
    let v = ok(&[
        "errormap",
        "--checkpoint",
        s(&ckpt),
        "--scene",
        s(&scene),
        "--view",
        "0",
        "--samples",
        "4",
        "--oracle",
        "ground_truth",
        "--out",
        s(&out),
    ]);
    assert_eq!(v["prior_epe"], 0.0);
    assert!(v["radiance_epe"].as_f64().unwrap() > 0.0);
    let prior = io::read_pfm(&out.join("prior_epe.pfm")).unwrap();
    assert!(prior.as_slice().iter().all(|e| e.is_nan() || *e == 0.0));
    assert!(prior.as_slice().iter().any(|e| *e == 0.0));
    let csv = fs::read_to_string(out.join("errormap.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 + 1);

    let (code, _) = fail(&[
        "errormap",
        "--checkpoint",
        s(&ckpt),
        "--scene",
        s(&scene),
        "--view",
        "99",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn errormap_is_the_mean_of_single_sample_maps() {
    let t = tempfile::tempdir().unwrap();
    let (scene, ckpt) = trained(t.path());
    let data = load_scene(&scene).unwrap();
    let cloud = io::read_checkpoint(&ckpt).unwrap();
    let cfg = |samples| ErrorMapConfig {
        view: 2,
        samples,
        sigma: 6.0,
        oracle: OracleConfig {
            kind: OracleKind::Noisy(0.5),
            occlusion_aware: false,
        },
        seed: 3,
    };
    let k = 16;
    let all = compute(&cloud, &data, &cfg(0..k)).unwrap();
    let single: Vec<_> = (0..k)
        .map(|i| compute(&cloud, &data, &cfg(i..i + 1)).unwrap())
        .collect();
    let mut checked = 0;
    for i in 0..all.radiance.as_slice().len() {
        if single.iter().any(|m| m.coverage.as_slice()[i] == 0) {
            continue;
        }
        assert_eq!(all.coverage.as_slice()[i], k);
        let avg = |f: fn(&ErrorMaps) -> &Grid<f64>| {
            single.iter().map(|m| f(m).as_slice()[i]).sum::<f64>() / k as f64
        };
        assert!(
            (all.radiance.as_slice()[i] - avg(|m| &m.radiance)).abs() < 1e-12,
            "pixel {i}"
        );
        assert!(
            (all.prior.as_slice()[i] - avg(|m| &m.prior)).abs() < 1e-12,
            "pixel {i}"
        );
        checked += 1;
    }
    assert!(checked > 100, "checked {checked}");
    for (i, m) in single.iter().enumerate() {
        assert_eq!(m.per_sample[0], all.per_sample[i]);
    }
}

#[test]
fn divergence_exits_4_with_a_diagnostic() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene, &[]);
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "[lr]\nlog_scale = 1e300\n").unwrap();
    let out = t.path().join("run");
    let (code, json) = fail(&[
        "train",
        "--config",
        s(&cfg),
        "--scene",
        s(&scene),
        "--out",
        s(&out),
        "--iters",
        "5",
        "--fds-start",
        "0",
    ]);
    assert_eq!(code, 4, "{json}");
    assert!(out.join("diagnostic.json").is_file());
    assert!(out.join("diverged.ckpt").is_file());
}

#[test]
fn missing_flow_file_is_reported_with_its_path() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene, &[]);
    let out = t.path().join("run");
    let (code, json) = fail(&[
        "train",
        "--scene",
        s(&scene),
        "--out",
        s(&out),
        "--iters",
        "3",
        "--fds-start",
        "0",
        "--oracle",
        "file",
        "--flow-pattern",
        "flows/{view}_{iter}.flo",
    ]);
    assert_eq!(code, 3, "{json}");
    let path = json["path"].as_str().unwrap();
    assert!(
        path.starts_with(s(&scene.join("flows"))) && path.ends_with(".flo"),
        "{path}"
    );
}
