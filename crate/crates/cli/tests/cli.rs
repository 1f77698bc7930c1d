use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn have_python() -> bool {
    let ok = Command::new("python3").arg("--version").output().is_ok();
    if !ok {
        eprintln!("skipping: python3 not found");
    }
    ok
}

fn iotbridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iotbridge"))
        .args(args)
        .env_remove("IOTBRIDGE_LLM_ENDPOINT")
        .env_remove("IOTBRIDGE_LLM_MODEL")
        .env_remove("IOTBRIDGE_LLM_API_KEY")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_error(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON error in {text}"));
    serde_json::from_str(line).unwrap()
}

#[test]
fn generate_writes_the_artifact() {
    let out = tempfile::tempdir().unwrap();
    let r = iotbridge(&["--fixtures", s(&fixtures().join("thermo")), "--out", s(out.path()), "generate"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.path().join("artifact/manifest.json").is_file());
    assert!(out.path().join("trace.jsonl").is_file());
}

#[test]
fn hil_with_scripted_answers_verifies_everything() {
    if !have_python() {
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let thermo = fixtures().join("thermo");
    let responder = thermo.join("responder.txt");
    let r = iotbridge(&["--fixtures", s(&thermo), "--out", s(out.path()), "hil", "--responder", s(&responder)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("all functions verified"), "{stdout}");
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["stage"], "done");
    assert_eq!(summary["hil"]["total_no"], 1);
}

#[test]
fn hil_running_out_of_answers_fails_but_checkpoints() {
    if !have_python() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("answers.txt");
    std::fs::write(&answers, "yes\n").unwrap();
    let ckpt = dir.path().join("hil.json");
    let thermo = fixtures().join("thermo");
    let out = dir.path().join("out");
    let r = iotbridge(&["--fixtures", s(&thermo), "--out", s(&out), "hil", "--responder", s(&answers), "--checkpoint", s(&ckpt)]);
    assert!(!r.status.success());
    assert!(ckpt.is_file());
    assert_eq!(stderr_error(&r)["error"]["stage"], "awaiting_hil");
}

#[test]
fn bench_reports_pass_at_1() {
    if !have_python() {
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let r = iotbridge(&["--fixtures", s(&fixtures().join("thermo")), "--out", s(out.path()), "bench", "--runs", "5"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("report.json")).unwrap()).unwrap();
    let row = &report["rows"][0];
    assert_eq!(row["runs"], 5);
    assert_eq!(row["pass_at_1"], 1.0);
    assert_eq!(row["coverage"], 1.0);
    let records = std::fs::read_to_string(out.path().join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 5);
}

#[test]
fn missing_platform_store_is_a_json_error() {
    let out = tempfile::tempdir().unwrap();
    let r = iotbridge(&["--fixtures", s(&fixtures().join("thermo")), "--out", s(out.path()), "--no-platform-store", "generate"]);
    assert_eq!(r.status.code(), Some(2));
    let err = stderr_error(&r);
    assert_eq!(err["error"]["stage"], "generating_control");
    assert!(err["error"]["message"].as_str().unwrap().contains("platform knowledge"));
}

#[test]
fn unfixed_suite_exits_incomplete() {
    if !have_python() {
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let bug = fixtures().join("thermo_bug");
    let r = iotbridge(&["--fixtures", s(&bug), "--out", s(out.path()), "--no-auto-debug", "autodebug"]);
    assert_eq!(r.status.code(), Some(3));
    assert!(stderr_error(&r)["error"]["message"].as_str().unwrap().contains("t05-functionality-transmit"));

    // same fixture, repaired
    let r = iotbridge(&["--fixtures", s(&bug), "--out", s(out.path()), "autodebug"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn config_file_layers_under_flags() {
    if !have_python() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[pipeline]\nauto_debug_enabled = false\n").unwrap();
    let bug = fixtures().join("thermo_bug");
    let out = dir.path().join("out");
    let r = iotbridge(&["--config", s(&cfg), "--fixtures", s(&bug), "--out", s(&out), "autodebug"]);
    assert_eq!(r.status.code(), Some(3), "config disabled auto-debug");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pipeline]\nno_such_option = 1\n").unwrap();
    let r = iotbridge(&["--config", s(&bad), "--fixtures", s(&bug), "--out", s(&out), "generate"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr_error(&r)["error"]["message"].as_str().unwrap().contains("no_such_option"));
}

#[test]
fn task_without_script_needs_provider_credentials() {
    let dir = tempfile::tempdir().unwrap();
    let thermo = fixtures().join("thermo");
    let task = std::fs::read_to_string(thermo.join("task.toml")).unwrap();
    let online: String = task.lines().filter(|l| !l.starts_with("script")).map(|l| format!("{l}\n")).collect();
    let online = online
        .replace("\"../platforms", &format!("\"{}/../platforms", s(&thermo)))
        .replace("\"sources\"", &format!("\"{}/sources\"", s(&thermo)))
        .replace("\"denylist.txt\"", &format!("\"{}/denylist.txt\"", s(&thermo)))
        .replace("\"responder.txt\"", &format!("\"{}/responder.txt\"", s(&thermo)));
    let path = dir.path().join("task.toml");
    std::fs::write(&path, online).unwrap();
    let r = iotbridge(&["--config", s(&path), "--out", s(&dir.path().join("out")), "generate"]);
    assert!(!r.status.success());
    assert!(stderr_error(&r)["error"]["message"].as_str().unwrap().contains("IOTBRIDGE_LLM_ENDPOINT"));
}
