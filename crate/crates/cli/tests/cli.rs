use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use depthforge::acw;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthforge"))
        .current_dir(dir)
        .env_remove("DEPTHFORGE_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn toy_model_is_deterministic_and_rejects_few_rings() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["toy-model", "--out", "a.mdl", "--seed", "3", "--v-rings", "8"]);
    assert!(out.contains("K_id=20") && out.contains("K_exp=10"), "{out}");
    ok(d.path(), &["toy-model", "--out", "b.mdl", "--seed", "3", "--v-rings", "8"]);
    assert_eq!(fs::read(d.path().join("a.mdl")).unwrap(), fs::read(d.path().join("b.mdl")).unwrap());

    let bad = run(d.path(), &["toy-model", "--out", "c.mdl", "--seed", "3", "--v-rings", "3"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("--v-rings"));
}

#[test]
fn generate_writes_the_expected_count_and_verifies() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["toy-model", "--out", "m.mdl", "--seed", "1", "--v-rings", "8", "--k-id", "3", "--k-exp", "2"]);
    let args = [
        "generate", "--model", "m.mdl", "--seed", "9", "--identities", "2", "--expressions", "2",
        "--resolution", "32", "--focal", "70",
    ];
    let mut a = args.to_vec();
    a.extend(["--out", "ds"]);
    let out = ok(d.path(), &a);
    // 2 identities x (1 neutral + 2 random) x 12 poses
    assert!(out.contains("generated 72 images"), "{out}");
    let pgm = |id: &str| {
        fs::read_dir(d.path().join("ds").join(id))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
            .count()
    };
    assert_eq!(pgm("id_00000") + pgm("id_00001"), 72);

    let mut b = args.to_vec();
    b.extend(["--out", "ds2", "--threads", "2"]);
    ok(d.path(), &b);
    let v = ok(d.path(), &["verify", "--data", "ds", "--against", "ds2"]);
    assert!(v.contains("0 failed") && v.contains("diffs against ds2: 0"), "{v}");
}

fn toy_dir(d: &Path) {
    ok(d, &["toy-data", "--out", "td", "--seed", "7", "--classes", "10", "--samples-per-class", "6", "--dim", "16"]);
}

#[test]
fn train_writes_loss_rows_and_zero_rate_keeps_initial_heads() {
    let d = tempfile::tempdir().unwrap();
    toy_dir(d.path());
    ok(d.path(), &["train-acw", "--data-dir", "td", "--seed", "4", "--out", "trained"]);
    let csv = fs::read_to_string(d.path().join("trained/loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,mean_loss,mean_task_loss,mean_confidence_loss,lambda");
    assert_eq!(lines.len(), 21);

    ok(d.path(), &["train-acw", "--data-dir", "td", "--seed", "4", "--out", "frozen", "--lr", "0"]);
    ok(d.path(), &["train-acw", "--data-dir", "td", "--seed", "4", "--out", "again", "--lr", "0", "--epochs", "1"]);
    for m in ["rgb", "depth"] {
        let name = format!("head_{m}.acw");
        let frozen = acw::io::load_head(d.path().join("frozen").join(&name)).unwrap();
        let again = acw::io::load_head(d.path().join("again").join(&name)).unwrap();
        let trained = acw::io::load_head(d.path().join("trained").join(&name)).unwrap();
        assert_eq!(frozen, again);
        assert_ne!(frozen, trained);
    }
}

#[test]
fn fixed_one_zero_matches_single_rgb() {
    let d = tempfile::tempdir().unwrap();
    toy_dir(d.path());
    ok(d.path(), &["evaluate", "--data-dir", "td", "--mode", "fixed", "--weights", "1,0", "--name", "f"]);
    ok(d.path(), &["evaluate", "--data-dir", "td", "--mode", "single", "--modality", "rgb", "--name", "s"]);
    let read = |n: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.path().join("td").join(n)).unwrap()).unwrap()
    };
    let (f, s) = (read("f.json"), read("s.json"));
    assert_eq!(f["overall_rank1"], s["overall_rank1"]);
    let preds = |v: &serde_json::Value| -> Vec<serde_json::Value> {
        v["probes"].as_array().unwrap().iter().map(|p| p["prediction"].clone()).collect()
    };
    assert_eq!(preds(&f), preds(&s));
    assert!(fs::read_to_string(d.path().join("td/f.txt")).unwrap().contains("fixed(1,0)"));
}

#[test]
fn acw_evaluation_runs_on_trained_heads() {
    let d = tempfile::tempdir().unwrap();
    toy_dir(d.path());
    ok(d.path(), &["train-acw", "--data-dir", "td", "--seed", "1", "--epochs", "2"]);
    let out = ok(d.path(), &["evaluate", "--data-dir", "td"]);
    assert!(out.contains("mode: acw") && out.contains("overall"), "{out}");
}

#[test]
fn missing_modality_file_is_named() {
    let d = tempfile::tempdir().unwrap();
    toy_dir(d.path());
    fs::remove_file(d.path().join("td/train_depth.emb")).unwrap();
    let out = run(d.path(), &["train-acw", "--data-dir", "td", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train_depth.emb"), "{}", stderr(&out));

    // single mode needs only its own pair
    ok(d.path(), &["evaluate", "--data-dir", "td", "--mode", "single", "--modality", "rgb"]);
    fs::remove_file(d.path().join("td/probe_depth.emb")).unwrap();
    let out = run(d.path(), &["evaluate", "--data-dir", "td", "--mode", "fixed"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("probe_depth.emb"));
}

#[test]
fn unknown_config_key_exits_two() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.json"), r#"{"toy-model": {"seed": 1, "v_ring": 8}}"#).unwrap();
    let out = run(d.path(), &["--config", "c.json", "toy-model", "--out", "m.mdl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("v_ring"));
}

#[test]
fn config_values_apply_and_flags_override_them() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.json"),
        r#"{"threads": 2, "toy-model": {"seed": 1, "v_rings": 3, "out": "m.mdl"}}"#,
    )
    .unwrap();
    let out = run(d.path(), &["--config", "c.json", "toy-model"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("threads: 2"));
    let out = run(d.path(), &["--config", "c.json", "--threads", "1", "toy-model", "--v-rings", "6"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("threads: 1"));
    assert!(d.path().join("m.mdl").exists());
}

#[test]
fn missing_seed_exits_two() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["toy-model", "--out", "m.mdl"],
        vec!["toy-data", "--out", "td"],
        vec!["train-acw", "--data-dir", "td"],
        vec!["generate", "--model", "m.mdl", "--out", "ds"],
    ] {
        let out = run(d.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).contains("--seed"), "{args:?}");
    }
}
