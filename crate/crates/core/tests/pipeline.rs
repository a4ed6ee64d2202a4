mod common;

use std::collections::BTreeSet;

use flowredact::annotations::Level;
use flowredact::config::ProjectConfig;
use flowredact::pipeline::{run_pipeline, PipelineError, Project, Redactor, RunOptions};
use flowredact::repository::RepositoryError;

/// Raw values of HIGH attributes, read straight from the fixture CSVs.
fn high_values(app: &common::CorpusApp) -> BTreeSet<String> {
    let project = app.project();
    let mut out = BTreeSet::new();
    for spec in &project.annotations.sources {
        let path = app.dir().join(&spec.match_pattern);
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let headers = reader.headers().unwrap().clone();
        for rec in reader.records() {
            let rec = rec.unwrap();
            for (h, v) in headers.iter().zip(rec.iter()) {
                if spec.attribute(h).is_some_and(|a| a.level == Level::High) && v.len() >= 5 {
                    out.insert(v.to_string());
                }
            }
        }
    }
    out
}

#[test]
fn churn_log_has_every_name_masked() {
    let app = common::corpus_apps().into_iter().find(|a| a.name == "churn").unwrap();
    let log = app.log();
    let names: BTreeSet<String> = {
        let mut r = csv::Reader::from_path(app.dir().join("data/customers.csv")).unwrap();
        r.deserialize::<std::collections::HashMap<String, String>>()
            .map(|row| row.unwrap()["name"].clone())
            .collect()
    };
    let leaked_before = names.iter().filter(|n| log.contains(n.as_str())).count();
    assert!(leaked_before > 0, "the raw log should mention customer names");
    let out = run_pipeline(app.config(), &log, RunOptions::default()).unwrap();
    for n in &names {
        assert!(!out.text.contains(n.as_str()), "{n} survived redaction");
    }
    assert!(out.text.contains("[REDACTED:customers.name]"));
    assert_eq!(out.report.summary.ambiguous, 0);
    assert_eq!(out.report.summary.flagged, 0);
    assert_eq!(out.report.summary.records, app.log_lines);
}

#[test]
fn no_high_value_survives_in_any_app() {
    for app in common::corpus_apps() {
        let values = high_values(&app);
        assert!(!values.is_empty());
        let out = run_pipeline(app.config(), &app.log(), RunOptions::default()).unwrap();
        for v in &values {
            assert!(!out.text.contains(v.as_str()), "{}: {v} survived", app.name);
        }
    }
}

#[test]
fn empty_log_gives_empty_output() {
    let app = &common::corpus_apps()[0];
    let out = run_pipeline(app.config(), "", RunOptions::default()).unwrap();
    assert_eq!(out.text, "");
    assert_eq!(out.report.summary, Default::default());
    assert!(out.report.records.is_empty());
}

#[test]
fn stale_repository_fails_before_output() {
    let tmp = tempfile::tempdir().unwrap();
    let app = &common::corpus_apps()[0];
    common::copy_tree(&app.dir(), tmp.path());
    let cfg = ProjectConfig::load(&tmp.path().join("flowredact.toml")).unwrap();
    let project = Project::load(cfg.clone()).unwrap();
    project.build(None).0.save(&cfg.repository_path).unwrap();
    let main = tmp.path().join("app/main.py");
    let text = std::fs::read_to_string(&main).unwrap();
    std::fs::write(&main, text.replace("def ", "def  ")).unwrap();
    let r = run_pipeline(cfg, &app.log(), RunOptions::default());
    assert!(
        matches!(
            r,
            Err(PipelineError::Repository(RepositoryError::StaleRepository { .. }))
        ),
        "{:?}",
        r.map(|o| o.report.summary)
    );
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    for app in common::corpus_apps() {
        let project = app.project();
        let (repo, _) = project.build(None);
        let log = app.log();
        let mut outputs = Vec::new();
        for threads in [1, 4, 0] {
            let mut cfg = project.config.clone();
            cfg.threads = threads;
            let r = Redactor::new(&repo, &project.annotations, &cfg).unwrap();
            let out = r.run(&log, RunOptions { explain: true }).unwrap();
            outputs.push((out.text, serde_json::to_string(&out.report).unwrap()));
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{}", app.name);
    }
}

#[test]
fn stored_and_in_memory_repositories_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let app = &common::corpus_apps()[2];
    common::copy_tree(&app.dir(), tmp.path());
    let cfg = ProjectConfig::load(&tmp.path().join("flowredact.toml")).unwrap();
    let in_memory = run_pipeline(cfg.clone(), &app.log(), RunOptions::default()).unwrap();
    Project::load(cfg.clone())
        .unwrap()
        .build(None)
        .0
        .save(&cfg.repository_path)
        .unwrap();
    let stored = run_pipeline(cfg, &app.log(), RunOptions::default()).unwrap();
    assert_eq!(in_memory, stored);
}

#[test]
fn explain_paths_run_from_source_read_to_statement() {
    use flowredact::dfg::NodeKind;
    let app = &common::corpus_apps()[0];
    let project = app.project();
    let (repo, _) = project.build(None);
    let r = Redactor::new(&repo, &project.annotations, &project.config).unwrap();
    let out = r.run(&app.log(), RunOptions { explain: true }).unwrap();
    let node_of = |step: &str| {
        let (loc, rest) = step.split_once(' ').unwrap();
        let (path, _) = loc.rsplit_once(':').unwrap();
        let (func, node) = rest.rsplit_once('#').unwrap();
        let id = repo
            .functions_in(path)
            .into_iter()
            .find(|f| f.qualified_name == func)
            .unwrap();
        repo.get(id).unwrap().graph.node(node.parse().unwrap()).unwrap().clone()
    };
    let log = app.log();
    let mut checked = 0;
    for rec in &out.report.records {
        let Some(stmt_line) = log
            .lines()
            .nth(rec.line_no - 1)
            .and_then(|l| l.split('|').nth(1))
            .map(str::to_string)
        else {
            continue;
        };
        for f in rec.slots.iter().flat_map(|s| s.findings.iter()) {
            let path = f.path.as_ref().expect("explain mode records paths");
            let first = node_of(&path[0]);
            assert!(matches!(first.kind, NodeKind::SourceRead { .. }), "{path:?}");
            let last = node_of(path.last().unwrap());
            assert!(matches!(last.kind, NodeKind::LogStatement(_)), "{path:?}");
            assert!(
                path.last().unwrap().starts_with(&format!("{stmt_line} ")),
                "{stmt_line} {path:?}"
            );
            checked += 1;
        }
    }
    assert!(checked > 100, "{checked}");
}
