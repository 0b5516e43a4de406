//! End-to-end checks of the experiment runner binary: exit codes, artifact
//! schemas, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn crlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crlab"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crlab-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn f1_identity_prints_minus_half() {
    let dir = tempdir("f1");
    let out = run(crlab()
        .arg("f1")
        .arg("--config")
        .arg(repo_config("f1_identity.cfg"))
        .arg("--out")
        .arg(&dir));
    assert!(out.status.success(), "{out:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], 1);
    let v = summary["results"]["levels"][0]["f1"].as_f64().unwrap();
    assert!((v + 0.5).abs() < 1e-8, "f1(id) = {v}");
}

#[test]
fn map_dimension_mismatch_exits_1() {
    let dir = tempdir("dim");
    let cfg = write_config(
        &dir,
        r#"
[model]
dims = [8, 8, 8]
[target]
variant = "flat_torus"
dim = 2
[map]
comps = ["x", "y", "t"]
"#,
    );
    let out = run(crlab().arg("f1").arg("--config").arg(&cfg).arg("--out").arg(&dir));
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempdir("bad");
    let cfg = write_config(&dir, "[model\nn = 1\n");
    let out = run(crlab().arg("f1").arg("--config").arg(&cfg).arg("--out").arg(&dir));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_exits_1() {
    let dir = tempdir("missing");
    let out = run(crlab()
        .arg("p1")
        .arg("--config")
        .arg(dir.join("nope.cfg"))
        .arg("--out")
        .arg(&dir));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn covariance_passes_and_fails_by_tolerance() {
    let dir = tempdir("cov");
    let out = run(crlab()
        .arg("covariance")
        .arg("--config")
        .arg(repo_config("covariance.cfg"))
        .arg("--out")
        .arg(&dir));
    assert!(out.status.success(), "{out:?}");

    // an absurdly tight tolerance turns the same run into a check failure
    let text = std::fs::read_to_string(repo_config("covariance.cfg")).unwrap();
    let tight = text.replace("covariance_tol = 0.000001", "covariance_tol = 0.0000000000000001");
    let cfg = write_config(&dir, &tight);
    let out = run(crlab().arg("covariance").arg("--config").arg(&cfg).arg("--out").arg(&dir));
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn flow_outputs_are_deterministic() {
    let base = tempdir("flowdet");
    let cfg_text = std::fs::read_to_string(repo_config("flow.cfg"))
        .unwrap()
        .replace("dims = [32, 32, 32]", "dims = [16, 16, 16]")
        .replace("max_steps = 200", "max_steps = 20");
    let cfg = write_config(&base, &cfg_text);
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let dir = base.join(tag);
        std::fs::create_dir_all(&dir).unwrap();
        let out = run(crlab()
            .arg("flow")
            .arg("--config")
            .arg(&cfg)
            .arg("--seed")
            .arg("7")
            .arg("--out")
            .arg(&dir));
        assert!(out.status.success(), "{out:?}");
        outputs.push((
            std::fs::read(dir.join("flow.csv")).unwrap(),
            std::fs::read(dir.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "flow.csv must be bit-identical");
    assert_eq!(outputs[0].1, outputs[1].1, "summary.json must be bit-identical");
    // pinned CSV schema
    let header = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(header.starts_with("iter,f1,p1_norm,tension_norm,step\n"));
    assert!(base.join("a").join("flow.gp").exists());
}

#[test]
fn jet_command_runs_checks() {
    let dir = tempdir("jet");
    let out = run(crlab()
        .arg("jet")
        .arg("--config")
        .arg(repo_config("jet.cfg"))
        .arg("--out")
        .arg(&dir));
    assert!(out.status.success(), "{out:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let diff = summary["results"]["p1_consistency"].as_f64().unwrap();
    assert!(diff <= 1e-12);
}

#[test]
fn structure_command_emits_fields() {
    let dir = tempdir("struct");
    let out = run(crlab()
        .arg("structure")
        .arg("--config")
        .arg(repo_config("covariance.cfg"))
        .arg("--out")
        .arg(&dir));
    assert!(out.status.success(), "{out:?}");
    let fields = std::fs::read_to_string(dir.join("fields.csv")).unwrap();
    assert!(fields.starts_with("idx,torsion_re,torsion_im,scal_w_re,scal_w_im,vol_density\n"));
    assert!(fields.lines().count() > 32 * 32 * 32);
}

#[test]
fn scheme_override_and_refine() {
    let dir = tempdir("refine");
    let cfg_text = std::fs::read_to_string(repo_config("covariance.cfg"))
        .unwrap()
        .replace("dims = [32, 32, 32]", "dims = [8, 8, 8]")
        .replace("covariance_tol = 0.000001", "covariance_tol = 0.01");
    let cfg = write_config(&dir, &cfg_text);
    let out = run(crlab()
        .arg("covariance")
        .arg("--config")
        .arg(&cfg)
        .arg("--scheme")
        .arg("fd4")
        .arg("--refine")
        .arg("3")
        .arg("--out")
        .arg(&dir));
    assert!(out.status.success(), "{out:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let orders = summary["results"]["observed_orders"].as_array().unwrap();
    assert_eq!(orders.len(), 2);
    // fourth-order scheme: refinement from 8^3 to 32^3 shows order near 4
    let last = orders[1].as_f64().unwrap();
    assert!(last > 3.0, "observed order {last}");
}
