use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(app: &str) -> PathBuf {
    root().join("corpus").join(app)
}

fn drift() -> PathBuf {
    root().join("crates/core/tests/fixtures/drift")
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_name() == ".flowredact" {
            continue;
        }
        let dest = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_tree(&e.path(), &dest);
        } else {
            fs::copy(e.path(), dest).unwrap();
        }
    }
}

fn flowredact(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowredact"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn scan_lists_files_and_functions() {
    let o = flowredact(&corpus("churn"), &["scan", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let files = v["files"].as_array().unwrap();
    let paths: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(paths.contains(&"app/main.py"), "{paths:?}");
    assert!(paths.iter().all(|p| p.starts_with("app/")), "{paths:?}");
    let total: usize = files.iter().map(|f| f["functions"].as_array().unwrap().len()).sum();
    assert_eq!(total, 21);
}

#[test]
fn build_then_incremental_build_reuses_files() {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&corpus("segmentation"), tmp.path());
    let o = flowredact(tmp.path(), &["build"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 reused"), "{}", stdout(&o));
    assert!(tmp.path().join(".flowredact").is_dir());
    let o = flowredact(tmp.path(), &["build"]);
    assert!(stdout(&o).contains("0 files built"), "{}", stdout(&o));
    let o = flowredact(tmp.path(), &["build", "--full"]);
    assert!(stdout(&o).contains("0 reused"), "{}", stdout(&o));
}

#[test]
fn build_reports_parse_failures_with_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&drift(), tmp.path());
    fs::write(tmp.path().join("app/broken.py"), "def f(:\n    pass\n").unwrap();
    let o = flowredact(tmp.path(), &["build"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 parse failures"), "{}", stdout(&o));
}

#[test]
fn redact_corpus_log_exits_zero_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out.log");
    let report = tmp.path().join("report.json");
    let log = corpus("churn").join("logs/app.log");
    let o = flowredact(
        &corpus("churn"),
        &[
            "redact",
            log.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
            "--rebuild",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), fs::read_to_string(&log).unwrap().lines().count());
    assert!(text.contains("[REDACTED:customers.name]"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["summary"]["flagged"], 0);
    assert!(stderr(&o).contains("293 records"), "{}", stderr(&o));
}

#[test]
fn redact_reads_stdin_and_flags_drift() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_flowredact"))
        .arg("--config")
        .arg(drift())
        .args(["redact", "--rebuild"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let log = fs::read_to_string(drift().join("drift.log")).unwrap();
    child.stdin.take().unwrap().write_all(log.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 8);
    assert!(!text.contains("Alice"), "{text}");
    assert!(text.lines().nth(1).unwrap().ends_with("tier 3"), "{text}");
    assert!(text.lines().last().unwrap().ends_with("|done"), "{text}");
}

#[test]
fn explain_names_sources_and_rules() {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&drift(), tmp.path());
    assert_eq!(flowredact(tmp.path(), &["build"]).status.code(), Some(0));
    let o = flowredact(tmp.path(), &["explain", "app/job.py:11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("person %s joined"), "{text}");
    assert!(text.contains("people.name") && text.contains("rule MASK"), "{text}");
    let o = flowredact(tmp.path(), &["explain", "app/job.py:13"]);
    assert!(!stdout(&o).contains("people."), "{}", stdout(&o));
    let o = flowredact(tmp.path(), &["explain", "app/job.py:12", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["slots"].is_array());
}

#[test]
fn eval_scores_corpus_gold_perfectly() {
    for app in ["churn", "segmentation", "fraud"] {
        let dir = corpus(app);
        let o = flowredact(
            &dir,
            &[
                "eval",
                dir.join("logs/app.log").to_str().unwrap(),
                dir.join("logs/gold.jsonl").to_str().unwrap(),
                "--rebuild",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["precision"], 1.0, "{app}: {v}");
        assert_eq!(v["recall"], 1.0, "{app}: {v}");
    }
}

#[test]
fn oracle_reproduces_the_checked_in_log() {
    let dir = corpus("fraud");
    let tmp = tempfile::tempdir().unwrap();
    let gold = tmp.path().join("gold.jsonl");
    let o = flowredact(
        &dir,
        &["oracle", "--entry", "app/detect.py", "--gold", gold.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), fs::read_to_string(dir.join("logs/app.log")).unwrap());
    assert_eq!(
        fs::read_to_string(gold).unwrap(),
        fs::read_to_string(dir.join("logs/gold.jsonl")).unwrap()
    );
}

#[test]
fn fatal_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowredact(tmp.path(), &["scan"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));

    let o = flowredact(&corpus("churn"), &["explain", "app/main.py"]);
    assert_eq!(o.status.code(), Some(1));

    let o = flowredact(&corpus("churn"), &["redact", "/nonexistent/input.log", "--rebuild"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot read"), "{}", stderr(&o));
}

#[test]
fn redact_refuses_a_stale_repository() {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&drift(), tmp.path());
    assert_eq!(flowredact(tmp.path(), &["build"]).status.code(), Some(0));
    let job = tmp.path().join("app/job.py");
    let src = fs::read_to_string(&job).unwrap();
    fs::write(&job, src + "\n# edited\n").unwrap();
    let out = tmp.path().join("out.log");
    let o = flowredact(
        tmp.path(),
        &[
            "redact",
            drift().join("drift.log").to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("stale"), "{}", stderr(&o));
    assert!(!out.exists());
}
