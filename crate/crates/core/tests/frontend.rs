mod common;

use std::fs;
use std::path::Path;

use flowredact::frontend::{parse_project, scan_project, FunctionId, ScanConfig, ScanError};
use flowredact::syntax::PythonSubset;

fn touch(root: &Path, rel: &str, content: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, content).unwrap();
}

fn paths(root: &Path, cfg: &ScanConfig) -> Vec<String> {
    scan_project(root, cfg, &PythonSubset)
        .unwrap()
        .files
        .into_iter()
        .map(|f| f.path)
        .collect()
}

#[test]
fn extension_filter() {
    let d = tempfile::tempdir().unwrap();
    for f in ["b.py", "a.py", "README.md"] {
        touch(d.path(), f, "x = 1\n");
    }
    assert_eq!(paths(d.path(), &ScanConfig::default()), ["a.py", "b.py"]);
}

#[test]
fn empty_directory() {
    let d = tempfile::tempdir().unwrap();
    let out = scan_project(d.path(), &ScanConfig::default(), &PythonSubset).unwrap();
    assert!(out.files.is_empty() && out.diagnostics.is_empty());
}

#[test]
fn missing_root_is_fatal() {
    let d = tempfile::tempdir().unwrap();
    let r = scan_project(&d.path().join("nope"), &ScanConfig::default(), &PythonSubset);
    assert!(matches!(r, Err(ScanError::RootMissing(_))));
}

#[test]
fn nested_dirs_with_exclusion_are_lexicographic() {
    let d = tempfile::tempdir().unwrap();
    for f in [
        "zeta/z.py",
        "alpha/m.py",
        "alpha/b.py",
        "tests/t_a.py",
        "tests/deep/t_b.py",
        "alpha/sub/a.py",
    ] {
        touch(d.path(), f, "pass\n");
    }
    let cfg = ScanConfig {
        exclude: vec!["tests/**".into()],
        ..ScanConfig::default()
    };
    assert_eq!(
        paths(d.path(), &cfg),
        ["alpha/b.py", "alpha/m.py", "alpha/sub/a.py", "zeta/z.py"]
    );
}

#[test]
fn undecodable_file_is_a_diagnostic() {
    let d = tempfile::tempdir().unwrap();
    touch(d.path(), "ok.py", "x = 1\n");
    fs::write(d.path().join("bad.py"), [0xff, 0xfe, 0x00]).unwrap();
    let out = scan_project(d.path(), &ScanConfig::default(), &PythonSubset).unwrap();
    assert_eq!(out.files.len(), 1);
    assert_eq!(out.diagnostics.len(), 1);
    assert_eq!(out.diagnostics[0].path.as_deref(), Some("bad.py"));
}

#[test]
fn corpus_scan_matches_its_tree() {
    let expected = [
        (
            "churn",
            vec!["app/features.py", "app/main.py", "app/model.py", "app/report.py"],
        ),
        (
            "segmentation",
            vec![
                "app/run.py",
                "app/segments/__init__.py",
                "app/segments/kmeans.py",
                "app/segments/profile.py",
            ],
        ),
        ("fraud", vec!["app/alerts.py", "app/detect.py", "app/rules.py"]),
    ];
    for (name, files) in expected {
        let app = common::corpus_apps().into_iter().find(|a| a.name == name).unwrap();
        let project = app.project();
        let got: Vec<&str> = project.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(got, files, "{name}");
        assert!(project.scan_diagnostics.is_empty());
    }
}

#[test]
fn parsing_twice_gives_identical_units() {
    for app in common::corpus_apps() {
        let project = app.project();
        let (a, fa) = parse_project(&project.files, &PythonSubset);
        let (b, fb) = parse_project(&project.files, &PythonSubset);
        assert!(fa.is_empty() && fb.is_empty());
        let ids = |m: &std::collections::BTreeMap<String, Vec<flowredact::frontend::FunctionUnit>>| -> Vec<FunctionId> {
            m.values().flatten().map(|u| u.metadata.id.clone()).collect()
        };
        assert_eq!(ids(&a), ids(&b));
        let unique: std::collections::BTreeSet<_> = ids(&a).into_iter().collect();
        assert_eq!(unique.len(), app.functions, "{}", app.name);
        for (x, y) in a.values().flatten().zip(b.values().flatten()) {
            assert_eq!(x.metadata, y.metadata);
        }
    }
}
