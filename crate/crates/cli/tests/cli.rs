use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use auxnet::models::{build, LayerParams};
use auxnet::{ArchitectureSpec, Checkpoint, ModelKind};

fn auxnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auxnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .unwrap_or_else(|| panic!("no run directory in {stdout:?} / {}", String::from_utf8_lossy(&out.stderr)));
    PathBuf::from(line)
}

fn ok(dir: &Path, args: &[&str]) -> PathBuf {
    let out = auxnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir.join(run_dir(&out))
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    auxnet(dir, args).status.code().expect("exit code")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const GEN: &[&str] = &[
    "gen-data",
    "--out",
    "runs",
    "--seed",
    "5",
    "--set",
    "gen.channels=6",
    "--set",
    "gen.duration=900",
    "--set",
    "gen.events=150",
];

/// Generates a small store and writes a training config pointing at it.
fn fixture(dir: &Path) -> PathBuf {
    let data = ok(dir, GEN);
    let cfg = dir.join("train.txt");
    let text = format!(
        "store = {}\nevents = {}\ncount.val_in_training = 10\ncount.val_ranking = 10\nlambda = 0.01\nalpha = 0.5\n",
        data.join("store.auxc").display(),
        data.join("events.txt").display()
    );
    std::fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn gen_data_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = ok(tmp.path(), GEN);
    let b = ok(tmp.path(), GEN);
    assert_ne!(a, b);
    for f in ["store.auxc", "events.txt", "meta.json", "config.txt"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&read(&a.join("meta.json"))).unwrap();
    assert_eq!(meta["informative"], serde_json::json!([0, 1, 2]));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["gen-data", "--out", "runs", "--set", "gen.channels=0"]), 2);
    assert_eq!(code(d, &["train", "--out", "runs", "--set", "store=missing.auxc", "--set", "events=missing.txt"]), 2);
    assert_eq!(code(d, &["train", "--out", "runs", "--set", "lamda=1"]), 2);
    assert_eq!(code(d, &["train", "--config", "absent.txt"]), 2);
    assert_eq!(code(d, &["frobnicate"]), 2);
}

#[test]
fn train_learns_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = fixture(d);
    let cfg = cfg.to_str().unwrap();
    let a = ok(d, &["train", "--config", cfg, "--out", "runs"]);
    let b = ok(d, &["train", "--config", cfg, "--out", "runs"]);
    for f in ["history.csv", "history.json", "metrics.json", "roc.csv", "checkpoint.bin", "config.txt"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let hist = String::from_utf8(read(&a.join("history.csv"))).unwrap();
    let best = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(best < std::f64::consts::LN_2, "best val loss {best}");

    // Evaluating the saved checkpoint reproduces the reported test metrics.
    let ck = a.join("checkpoint.bin");
    let e = ok(d, &["eval", "--config", cfg, "--checkpoint", ck.to_str().unwrap(), "--out", "runs"]);
    let trained: serde_json::Value = serde_json::from_slice(&read(&a.join("metrics.json"))).unwrap();
    let evaluated: serde_json::Value = serde_json::from_slice(&read(&e.join("metrics.json"))).unwrap();
    assert_eq!(trained["test"], evaluated["test"]);
    assert_eq!(read(&a.join("roc.csv")), read(&e.join("roc.csv")));
    let e2 = ok(d, &["eval", "--config", cfg, "--checkpoint", ck.to_str().unwrap(), "--out", "runs"]);
    assert_eq!(read(&e.join("metrics.json")), read(&e2.join("metrics.json")));
}

#[test]
fn eval_rejects_bad_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = fixture(d);
    let cfg = cfg.to_str().unwrap();
    std::fs::write(d.join("bad.bin"), b"not a checkpoint").unwrap();
    assert_eq!(code(d, &["eval", "--config", cfg, "--checkpoint", "bad.bin", "--out", "runs"]), 2);

    // A model for a different channel count.
    let spec = ArchitectureSpec::new(ModelKind::LF, 9, 16);
    let ck = Checkpoint {
        params: build::<f64>(&spec, 0).unwrap(),
        spec,
        norm_stats: None,
        penalty: None,
    };
    ck.save(&d.join("wide.bin")).unwrap();
    assert_eq!(code(d, &["eval", "--config", cfg, "--checkpoint", "wide.bin", "--out", "runs"]), 2);
}

#[test]
fn grid_matches_train_and_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = fixture(d);
    let cfg = cfg.to_str().unwrap();

    let t = ok(d, &["train", "--config", cfg, "--out", "runs"]);
    let g = ok(d, &["grid", "--config", cfg, "--out", "runs"]);
    assert_eq!(read(&t.join("history.csv")), read(&g.join("setting-000/history.csv")));
    let tm: serde_json::Value = serde_json::from_slice(&read(&t.join("metrics.json"))).unwrap();
    let gm: serde_json::Value = serde_json::from_slice(&read(&g.join("best_metrics.json"))).unwrap();
    assert_eq!(tm, gm);

    let sweep = ["--set", "grid.alpha=0,2", "--set", "grid.init_lr=0.001,0.01"];
    let mut serial = vec!["grid", "--config", cfg, "--out", "runs", "--parallel", "1"];
    serial.extend(sweep);
    let mut parallel = vec!["grid", "--config", cfg, "--out", "runs", "--parallel", "3"];
    parallel.extend(sweep);
    let s = ok(d, &serial);
    let p = ok(d, &parallel);
    assert_eq!(read(&s.join("ranking.csv")), read(&p.join("ranking.csv")));
    for i in 0..4 {
        let f = format!("setting-{i:03}/history.csv");
        assert_eq!(read(&s.join(&f)), read(&p.join(&f)), "{f}");
    }
    let table = String::from_utf8(read(&s.join("ranking.csv"))).unwrap();
    let losses: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.windows(2).all(|w| w[0] <= w[1]), "{losses:?}");
}

#[test]
fn grid_with_no_successful_setting_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = fixture(d);
    // VGG6 is only defined for 80-sample inputs, so every setting fails.
    let args = [
        "grid",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "runs",
        "--set",
        "model=VGG6",
        "--set",
        "width_factor=0.05",
        "--set",
        "fc_hidden=8",
        "--set",
        "grid.input_len=16",
    ];
    let out = auxnet(d, &args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = d.join(run_dir(&out));
    assert!(dir.join("setting-000/error.txt").exists());
}

#[test]
fn report_on_zeroed_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = ArchitectureSpec::new(ModelKind::LF, 5, 8);
    let mut params = build::<f64>(&spec, 1).unwrap();
    for layer in &mut params.layers {
        if let LayerParams::Conv { w, .. } = layer {
            w.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Checkpoint {
        spec,
        params,
        norm_stats: None,
        penalty: None,
    }
    .save(&d.join("zero.bin"))
    .unwrap();
    let r = ok(d, &["report", "--checkpoint", "zero.bin", "--out", "runs", "--top-k", "50"]);
    let rep: serde_json::Value = serde_json::from_slice(&read(&r.join("sparsity.json"))).unwrap();
    assert_eq!(rep["zero_groups"], 5);
    assert_eq!(rep["nonzero_groups"], 0);
    let traces: serde_json::Value = serde_json::from_slice(&read(&r.join("filters.json"))).unwrap();
    assert_eq!(traces.as_array().unwrap().len(), 5);
}

#[test]
fn report_orders_filters_by_norm() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = fixture(d);
    let cfg = cfg.to_str().unwrap();
    let t = ok(d, &["train", "--config", cfg, "--out", "runs"]);
    let ck = t.join("checkpoint.bin");
    let r = ok(d, &["report", "--config", cfg, "--checkpoint", ck.to_str().unwrap(), "--out", "runs"]);
    let rep: serde_json::Value = serde_json::from_slice(&read(&r.join("sparsity.json"))).unwrap();
    let traces: serde_json::Value = serde_json::from_slice(&read(&r.join("filters.json"))).unwrap();
    let etas: Vec<f64> = traces.as_array().unwrap().iter().map(|t| t["eta"].as_f64().unwrap()).collect();
    assert_eq!(etas.len(), 6.min(9));
    assert!(etas.windows(2).all(|w| w[0] >= w[1]));
    let max_eta = rep["eta"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).fold(0.0, f64::max);
    assert_eq!(etas[0], max_eta);
    assert!(rep["dead_maps"].is_null());
}
