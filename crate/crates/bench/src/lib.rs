//! Shared setup for the benchmarks.

use std::path::{Path, PathBuf};

use flowredact::config::ProjectConfig;
use flowredact::dfg::NodeKind;
use flowredact::linker::LogStatementRef;
use flowredact::pipeline::Project;
use flowredact::repository::Repository;

pub fn corpus_dir(app: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(app)
}

pub fn load(app: &str) -> Project {
    let cfg = ProjectConfig::load(&corpus_dir(app).join("flowredact.toml")).expect("corpus config");
    Project::load(cfg).expect("corpus project")
}

pub fn log(app: &str) -> String {
    std::fs::read_to_string(corpus_dir(app).join("logs/app.log")).expect("corpus log")
}

/// Every log statement in the repository.
pub fn statements(repo: &Repository) -> Vec<LogStatementRef> {
    let mut out = Vec::new();
    for id in repo.ids() {
        let rec = repo.get(id).expect("record");
        for n in &rec.graph.nodes {
            if let NodeKind::LogStatement(info) = &n.kind {
                out.push(LogStatementRef {
                    function: id.clone(),
                    node_id: n.id,
                    format_string: info.template.display(),
                    template: info.template.clone(),
                    slot_count: info.slot_count,
                });
            }
        }
    }
    out
}
