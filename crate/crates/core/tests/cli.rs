use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commute-reg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn graph_commute_and_kernel_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(
        &["graph", "--preset", "g0", "--levels", "5", "--commute", "0", "4", "--mc-walks", "20000", "--out", "g.json"],
        dir.path(),
    );
    let v = ok_json(&out);
    assert!((v["commute"]["commute"].as_f64().unwrap() - 32.0).abs() < 1e-9);
    let mc = v["commute"]["monte_carlo"].as_f64().unwrap();
    assert!((mc - 32.0).abs() / 32.0 < 0.05);

    let g: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(g["num_levels"], 5);
    assert_eq!(g["weights"][1][2], 1.0);

    let v = ok_json(&bin(&["graph", "--preset", "ga", "--levels", "3", "--dump-kernel"], dir.path()));
    assert_eq!(v["volume"], 6.0);
    assert_eq!(v["pinv"].as_array().unwrap().len(), 3);
}

#[test]
fn loss_on_two_step_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.csv"), "t,p0,p1\n0,1,0\n1,0,1\n").unwrap();
    ok_json(&bin(&["graph", "--preset", "g0", "--levels", "2", "--out", "g2.json"], dir.path()));
    let v = ok_json(&bin(
        &["loss", "--kernel", "g2.json", "--traj", "t.csv", "--check-equivalence", "--grad-check"],
        dir.path(),
    ));
    assert_eq!(v["lvl"], 0.5);
    assert_eq!(v["lgcl"], 0.25);
    assert_eq!(v["combined"], 0.75);
    assert!(v["grad_check"]["lvl_relative_error"].as_f64().unwrap() < 1e-5);

    let v = ok_json(&bin(&["loss", "--kernel", "g0", "--traj", "t.csv", "--alpha", "2", "--beta", "0"], dir.path()));
    assert_eq!(v["combined"], 1.0);
}

#[test]
fn simulate_train_predict_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let v = ok_json(&bin(
        &["simulate", "--levels", "5", "--segments", "30", "--trials", "4", "--subjects", "2", "--flip", "0.2", "--seed", "9", "--out", "data"],
        p,
    ));
    assert_eq!(v["trials"], 8);
    let trial = p.join("data/s00/trial_00");
    let features = fs::read_to_string(trial.join("features.csv")).unwrap();
    assert!(features.starts_with("t,x0,x1,x2,x3,x4,x5,x6,x7\n"));
    assert_eq!(features.lines().count(), 31);
    let labels = fs::read_to_string(trial.join("labels.csv")).unwrap();
    assert!(labels.starts_with("t,true,noisy\n"));
    let meta: Value = serde_json::from_str(&fs::read_to_string(trial.join("meta.json")).unwrap()).unwrap();
    assert!(meta["global_label"].as_u64().unwrap() < 5);
    assert_eq!(meta["config"]["flip_rate"], 0.2);

    let v = ok_json(&bin(
        &["train", "--data", "data/s00", "--kernel", "g0", "--lambda-lvl", "1", "--lambda-lgcl", "0.5", "--epochs", "15", "--seed", "4", "--train-frac", "0.6667", "--out", "model.json"],
        p,
    ));
    assert_eq!(v["trials"], 4);
    let ckpt: Value = serde_json::from_str(&fs::read_to_string(p.join("model.json")).unwrap()).unwrap();
    assert_eq!(ckpt["weights"].as_array().unwrap().len(), 5);
    assert_eq!(ckpt["bias"].as_array().unwrap().len(), 5);
    assert_eq!(ckpt["config"]["lambda_lgcl"], 0.5);

    let out = bin(
        &["predict", "--model", "model.json", "--features", "data/s00/trial_00/features.csv", "--out", "traj.csv"],
        p,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(p.join("traj.csv")).unwrap();
    assert!(traj.starts_with("t,p0,p1,p2,p3,p4\n"));
    for line in traj.lines().skip(1) {
        let s: f64 = line.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    let v = ok_json(&bin(
        &["eval", "--traj", "traj.csv", "--truth", "data/s00/trial_00/labels.csv", "--emit-curve"],
        p,
    ));
    for key in ["f1", "top2", "v_d", "delta_d", "a_c", "nc_breakpoints", "nc_values"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let v = ok_json(&bin(&["eval", "--traj", "traj.csv", "--truth", "data/s00/trial_00/labels.csv"], p));
    assert!(v.get("nc_values").is_none());
}

#[test]
fn bench_writes_ranks_and_radar() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::from("method,subject,condition,metric,value\n");
    for (m, base) in [("good", 0.9), ("bad", 0.1)] {
        for s in ["s1", "s2"] {
            for metric in ["f1", "top2"] {
                table.push_str(&format!("{m},{s},c,{metric},{base}\n"));
            }
            for metric in ["a_c", "v_d", "delta_d"] {
                table.push_str(&format!("{m},{s},c,{metric},{}\n", 1.0 - base));
            }
        }
    }
    fs::write(dir.path().join("table.csv"), table).unwrap();
    let out = bin(&["bench", "--table", "table.csv", "--out", "ranks"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ranks = fs::read_to_string(dir.path().join("ranks/ranks.csv")).unwrap();
    assert_eq!(
        ranks,
        "method,f1,top2,a_c,v_d,delta_d,aggregate,overall_rank\nbad,2,2,2,2,2,2,2\ngood,1,1,1,1,1,1,1\n"
    );
    let radar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ranks/radar.json")).unwrap()).unwrap();
    assert_eq!(radar["num_methods"], 2);

    fs::write(dir.path().join("partial.csv"), "method,subject,condition,metric,value\na,s1,c,f1,1\nb,s2,c,f1,1\n").unwrap();
    let out = bin(&["bench", "--table", "partial.csv", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("method=a subject=s2"));
}

const TINY_SPEC: &str = "\
name: tiny
num_levels: 5
seed: 3
runs: 2
subjects: 1
trials: 3
segments: 24
train_frac: 0.6666666666666666
axes: [valence]
flip_rates: [0.2]
data:
  feature_dim: 4
  separation: 1.0
  stay_prob: 0.8
  feature_noise: 1.0
train:
  learning_rate: 0.5
  epochs: 5
arms:
  - {name: ce, kernel: g0, lambda_lvl: 0.0, lambda_lgcl: 0.0}
  - {name: both, kernel: g2, lambda_lvl: 1.0, lambda_lgcl: 1.0}
  - {name: wo_g, kernel: identity, lambda_lvl: 1.0, lambda_lgcl: 1.0}
";

#[test]
fn run_is_reproducible_and_manifest_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("spec.yaml"), TINY_SPEC).unwrap();
    for out in ["a", "b"] {
        let o = bin(&["run", "--spec", "spec.yaml", "--out", out], p);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.csv", "metrics_runs.csv", "ranks.csv", "radar.json", "manifest.json"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(p.join("a/manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_object().unwrap();
    // 2 runs × 3 arms models + reports, plus 4 tables
    assert_eq!(files.len(), 2 * 3 * 2 + 4);
    assert_eq!(manifest["spec_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["master_seed"], 3);
    let metrics = fs::read_to_string(p.join("a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("method,subject,condition,metric,value\n"));
    assert_eq!(metrics.lines().count(), 1 + 3 * 5);

    let o = bin(&["run", "--spec", "spec.yaml", "--out", "c", "--sequential"], p);
    assert!(o.status.success());
    assert_eq!(fs::read(p.join("a/metrics.csv")).unwrap(), fs::read(p.join("c/metrics.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // input / config errors → 1
    assert_eq!(bin(&["eval", "--traj", "missing.csv", "--truth", "x.csv"], p).status.code(), Some(1));
    fs::write(p.join("bad.yaml"), TINY_SPEC.replace("runs: 2", "runs: 0")).unwrap();
    assert_eq!(bin(&["run", "--spec", "bad.yaml"], p).status.code(), Some(1));
    fs::write(p.join("t.csv"), "t,p0,p1\n0,0.7,0.7\n").unwrap();
    assert_eq!(bin(&["loss", "--kernel", "g0", "--traj", "t.csv"], p).status.code(), Some(1));
    assert_eq!(bin(&["graph", "--levels", "1"], p).status.code(), Some(1));
    assert_eq!(bin(&["no-such-command"], p).status.code(), Some(1));
    assert_eq!(bin(&["--help"], p).status.code(), Some(0));

    // numerical failure → 2
    let sim = bin(&["simulate", "--segments", "10", "--trials", "2", "--out", "d"], p);
    assert!(sim.status.success());
    let diverged = bin(
        &["train", "--data", "d", "--kernel", "g0", "--lr", "1e308", "--epochs", "50", "--out", "m.json"],
        p,
    );
    assert_eq!(diverged.status.code(), Some(2), "{}", String::from_utf8_lossy(&diverged.stderr));

    let check = bin(&["check", "--walks", "20000", "--cases", "10"], p);
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stdout));
    assert_eq!(String::from_utf8_lossy(&check.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 7);
}
