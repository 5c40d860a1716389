use std::path::Path;
use std::process::{Command, Output};

use gradbound_harness::persist::read_records;
use serde_json::Value;

const SMALL: &str = "\
data.n_train = 400
data.n_test = 400
train.epochs = 4
bound.n_prior = 8
bound.n_data = 256
bound.n_posterior = 4
";

fn gradbound(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    if !cfg.exists() {
        std::fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_gradbound"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn payloads(path: &Path) -> Vec<Value> {
    read_records(path).unwrap().into_iter().map(|r| r.payload).collect()
}

#[test]
fn verify_stock_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradbound(dir.path(), &["verify", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let checks = payloads(&dir.path().join("out/verify.jsonl"));
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["pass"] == true));
}

#[test]
fn failed_verification_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradbound(dir.path(), &["verify", "--seed", "0", "--samples", "2"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed"));
    let checks = payloads(&dir.path().join("out/verify.jsonl"));
    assert!(checks.iter().any(|c| c["pass"] == false));
}

#[test]
fn lambda_over_m_in_on_average_mode_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradbound(
        dir.path(),
        &[
            "--override",
            "bound.kind=global_on_average",
            "--override",
            "bound.lambda=m*2",
            "bound",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("constraint"));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradbound(dir.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(
        code(&gradbound(dir.path(), &["--override", "bound.lamda=m", "bound"])),
        1
    );
    assert_eq!(
        code(&gradbound(dir.path(), &["--override", "bound.kind=linear", "bound"])),
        1
    );
    let help = gradbound(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
}

#[test]
fn compare_reports_share_risk_and_kl_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradbound(dir.path(), &["compare"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs = payloads(&dir.path().join("out/bound.jsonl"));
    assert_eq!(recs.len(), 2);
    let (ours, base) = (&recs[0]["report"], &recs[1]["report"]);
    assert_eq!(recs[0]["role"], "ours");
    assert_eq!(recs[1]["role"], "baseline");
    for field in ["empirical_risk", "kl"] {
        let a = ours[field].as_f64().unwrap();
        let b = base[field].as_f64().unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "{field}");
    }
    assert_eq!(ours["kind"], "prior_expectation");
    assert_eq!(base["kind"], "bounded_baseline");
}

#[test]
fn runs_are_payload_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for cmd in ["bound", "estimate"] {
            let o = gradbound(dir, &["--seed", "3", cmd]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for file in ["bound.jsonl", "train_trace.jsonl", "sweep_row.jsonl"] {
        assert_eq!(
            payloads(&a.path().join("out").join(file)),
            payloads(&b.path().join("out").join(file)),
            "{file}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    gradbound(c.path(), &["--seed", "4", "bound"]);
    assert_ne!(
        payloads(&a.path().join("out/bound.jsonl")),
        payloads(&c.path().join("out/bound.jsonl"))
    );
}

#[test]
fn train_then_bound_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gradbound(dir.path(), &["train"])), 0);
    let ckpt = dir.path().join("out/model.ckpt");
    assert!(ckpt.is_file());
    let inline = payloads(&dir.path().join("out/train_trace.jsonl"));
    let o = gradbound(
        dir.path(),
        &["--override", &format!("model.checkpoint={}", ckpt.display()), "bound"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = payloads(&dir.path().join("out/bound.jsonl"));
    assert_eq!(b[0]["model"]["weights_sha256"], inline[0]["model"]["weights_sha256"]);
}

#[test]
fn linear_bound_respects_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--override", "model.arch=linear", "--override", "bound.kind=linear"];
    let o = gradbound(
        dir.path(),
        &[&base[..], &["--override", "bound.lambda=1", "bound"]].concat(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = gradbound(dir.path(), &[&base[..], &["bound"]].concat());
    assert_eq!(code(&o), 2);
}

#[test]
fn csv_data_source_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gradbound(dir.path(), &["gen-data"])), 0);
    let train = dir.path().join("out/train.csv");
    let test = dir.path().join("out/test.csv");
    let o = gradbound(
        dir.path(),
        &[
            "--override",
            "data.source=csv",
            "--override",
            &format!("data.csv={}", train.display()),
            "--override",
            &format!("data.test_csv={}", test.display()),
            "--override",
            "data.sigma_y=estimated",
            "compare",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs = payloads(&dir.path().join("out/bound.jsonl"));
    assert!(recs[0]["test_risk"].is_f64());
    assert_eq!(recs[0]["report"]["metadata"]["sigma_y_source"], "estimated");
}

#[test]
fn desk_scale_compare_orders_bounds() {
    for seed in ["1", "2", "3"] {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.cfg"), "data.n_test = 0\n").unwrap();
        let o = gradbound(dir.path(), &["--seed", seed, "compare"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let recs = payloads(&dir.path().join("out/bound.jsonl"));
        let ours = recs[0]["report"]["rhs"].as_f64().unwrap();
        let baseline = recs[1]["report"]["rhs"].as_f64().unwrap();
        assert!(ours < baseline, "seed {seed}: {ours} vs {baseline}");
    }
}
