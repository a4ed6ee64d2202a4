//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use flowredact::config::ProjectConfig;
use flowredact::dfg::{
    CallArg, CallInfo, DfgEdge, DfgNode, FunctionDfg, LogInfo, NodeId, NodeKind, Port, Step, TemplatePiece,
    TemplateSource,
};
use flowredact::format::SlotKind;
use flowredact::frontend::{FunctionId, FunctionMetadata, ImportBinding, ImportTarget, ParamInfo};
use flowredact::pipeline::Project;
use flowredact::redactor::{fits, MessageTemplate};
use flowredact::repository::FunctionRecord;
use flowredact::syntax::ast::{ParamKind, Span};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_dir() -> PathBuf {
    workspace_root().join("corpus")
}

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct CorpusApp {
    pub name: String,
    pub entry: String,
    pub functions: usize,
    pub log_lines: usize,
}

#[derive(serde::Deserialize)]
struct Manifest {
    app: Vec<CorpusApp>,
}

pub fn corpus_apps() -> Vec<CorpusApp> {
    let text = std::fs::read_to_string(corpus_dir().join("manifest.toml")).unwrap();
    toml::from_str::<Manifest>(&text).unwrap().app
}

impl CorpusApp {
    pub fn dir(&self) -> PathBuf {
        corpus_dir().join(&self.name)
    }

    pub fn config(&self) -> ProjectConfig {
        ProjectConfig::load(&self.dir().join("flowredact.toml")).unwrap()
    }

    pub fn project(&self) -> Project {
        Project::load(self.config()).unwrap()
    }

    pub fn log(&self) -> String {
        std::fs::read_to_string(self.dir().join("logs/app.log")).unwrap()
    }

    pub fn gold(&self) -> String {
        std::fs::read_to_string(self.dir().join("logs/gold.jsonl")).unwrap()
    }
}

/// Copies a directory tree.
pub fn copy_tree(from: &Path, to: &Path) {
    for e in walkdir::WalkDir::new(from) {
        let e = e.unwrap();
        let rel = e.path().strip_prefix(from).unwrap();
        if rel.components().any(|c| c.as_os_str() == ".flowredact") {
            continue;
        }
        let dest = to.join(rel);
        if e.file_type().is_dir() {
            std::fs::create_dir_all(&dest).unwrap();
        } else {
            std::fs::copy(e.path(), &dest).unwrap();
        }
    }
}

// ---- random graphs ----

fn word<R: Rng>(rng: &mut R) -> String {
    ["row", "name", "acct", "x", "tmp", "score", "rows", "item"]
        .choose(rng)
        .unwrap()
        .to_string()
}

fn call<R: Rng>(rng: &mut R) -> CallInfo {
    let n = rng.gen_range(0..3);
    CallInfo {
        callee: ["helpers.load", "self.score", "len", "Model", "fmt"]
            .choose(rng)
            .unwrap()
            .to_string(),
        args: (0..n)
            .map(|i| CallArg {
                keyword: (rng.gen_bool(0.2)).then(|| format!("k{i}")),
                spread: rng.gen_bool(0.05),
                text: word(rng),
            })
            .collect(),
        receiver: rng.gen_bool(0.3).then(|| word(rng)),
    }
}

fn template<R: Rng>(rng: &mut R) -> (TemplateSource, u32) {
    match rng.gen_range(0..5) {
        0 => (TemplateSource::Literal { text: "plain".into() }, 0),
        1 => (
            TemplateSource::Printf {
                format: "a=%s b=%d".into(),
            },
            2,
        ),
        2 => (
            TemplateSource::Brace {
                format: "{} -> {:>4}".into(),
            },
            2,
        ),
        3 => (
            TemplateSource::Pieces {
                pieces: vec![
                    TemplatePiece::Text { text: "user ".into() },
                    TemplatePiece::Slot { kind: SlotKind::Text },
                    TemplatePiece::Text { text: " age ".into() },
                    TemplatePiece::Slot { kind: SlotKind::Number },
                ],
            },
            2,
        ),
        _ => (TemplateSource::Whole, 1),
    }
}

fn node_kind<R: Rng>(rng: &mut R, index: &mut u32) -> NodeKind {
    match rng.gen_range(0..10) {
        0 => {
            *index += 1;
            NodeKind::Parameter {
                index: *index - 1,
                param_kind: ParamKind::Normal,
            }
        }
        1 | 2 => NodeKind::VariableVersion {
            version: rng.gen_range(0..4),
        },
        3 => NodeKind::Constant {
            literal: rng.gen_bool(0.5).then(|| "lit".to_string()),
        },
        4 => NodeKind::CallSite(call(rng)),
        5 => {
            let (template, slot_count) = template(rng);
            NodeKind::LogStatement(LogInfo {
                method: "info".into(),
                call: call(rng),
                template,
                slot_count,
                end_line: 3,
            })
        }
        6 => NodeKind::Return,
        7 => NodeKind::SourceRead {
            call: call(rng),
            source_key: rng.gen_bool(0.7).then(|| "data/customers.csv".to_string()),
        },
        8 => NodeKind::Export {
            param: rng.gen_bool(0.5).then(|| rng.gen_range(0..3)),
        },
        _ => NodeKind::Opaque {
            construct: "lambda".into(),
        },
    }
}

/// A random graph of `1..=max_nodes` nodes with arbitrary edges (cycles
/// allowed) and mixed ports and field effects.
pub fn random_graph<R: Rng>(rng: &mut R, id: FunctionId, max_nodes: usize) -> FunctionDfg {
    let n = rng.gen_range(1..=max_nodes);
    let mut params = 0;
    let nodes: Vec<DfgNode> = (0..n as NodeId)
        .map(|i| DfgNode {
            id: i,
            kind: node_kind(rng, &mut params),
            name: word(rng),
            line: rng.gen_range(1..60),
        })
        .collect();
    let m = rng.gen_range(0..=2 * n);
    let edges = (0..m)
        .map(|_| {
            let mut e = DfgEdge::plain(rng.gen_range(0..n) as NodeId, rng.gen_range(0..n) as NodeId);
            if rng.gen_bool(0.3) {
                e.slot = Some(rng.gen_range(0..3));
            }
            e.port = match rng.gen_range(0..8) {
                0 => Port::Receiver,
                1 => Port::ArgOut {
                    arg: rng.gen_range(0..3),
                },
                _ => Port::Value,
            };
            e.effect = (0..rng.gen_range(0..3))
                .map(|_| match rng.gen_range(0..3) {
                    0 => Step::Select(word(rng)),
                    1 => Step::Put(word(rng)),
                    _ => Step::Reset,
                })
                .collect();
            e.copy = rng.gen_bool(0.2);
            e
        })
        .collect();
    FunctionDfg::new(id, nodes, edges)
}

pub fn random_record<R: Rng>(rng: &mut R, i: usize) -> FunctionRecord {
    let path = format!("pkg/m{}.py", i % 7);
    let id = FunctionId::new(path.clone(), format!("f{i}"), 1 + i as u32);
    let graph = random_graph(rng, id.clone(), 30);
    let metadata = FunctionMetadata {
        id,
        params: (0..rng.gen_range(0..3))
            .map(|k| ParamInfo {
                name: format!("p{k}"),
                declared_type: rng.gen_bool(0.3).then(|| "int".to_string()),
                kind: ParamKind::Normal,
                has_default: rng.gen_bool(0.2),
            })
            .collect(),
        returns: vec![word(rng)],
        imports: vec![
            ImportBinding {
                name: "helpers".into(),
                module: "helpers".into(),
                member: None,
                target: ImportTarget::Project {
                    path: "helpers.py".into(),
                },
            },
            ImportBinding {
                name: "np".into(),
                module: "numpy".into(),
                member: None,
                target: ImportTarget::External,
            },
        ],
        class_name: rng.gen_bool(0.3).then(|| "Model".to_string()),
        span: Span::new(1 + i as u32, 60),
        enclosing: None,
        local_defs: Vec::new(),
    };
    FunctionRecord { metadata, graph }
}

// ---- reachability oracle ----

/// Forward breadth-first search from `start` over all edges.
pub fn bfs(g: &FunctionDfg, start: NodeId) -> BTreeSet<NodeId> {
    let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for e in &g.edges {
        succ.entry(e.from).or_default().push(e.to);
    }
    let mut seen = BTreeSet::from([start]);
    let mut q = VecDeque::from([start]);
    while let Some(n) = q.pop_front() {
        for &s in succ.get(&n).into_iter().flatten() {
            if seen.insert(s) {
                q.push_back(s);
            }
        }
    }
    seen
}

/// Nodes where flow leaves the unit: log statements, returns, exports, and
/// call sites that receive a value as an argument.
pub fn exit_points(g: &FunctionDfg) -> BTreeSet<NodeId> {
    let fed_calls: BTreeSet<NodeId> = g.edges.iter().filter(|e| e.port == Port::Value).map(|e| e.to).collect();
    g.nodes
        .iter()
        .filter(|n| match n.kind {
            NodeKind::LogStatement(_) | NodeKind::Return | NodeKind::Export { .. } => true,
            NodeKind::CallSite(_) => fed_calls.contains(&n.id),
            _ => false,
        })
        .map(|n| n.id)
        .collect()
}

// ---- brute-force binding ----

/// Every assignment of message substrings to the template's slots, found by
/// trying all end positions.
pub fn all_bindings(t: &MessageTemplate, msg: &str) -> Vec<Vec<String>> {
    fn go(t: &MessageTemplate, msg: &str, k: usize, pos: usize, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if k == t.slots.len() {
            if pos == msg.len() {
                out.push(cur.clone());
            }
            return;
        }
        for end in pos..=msg.len() {
            if !msg.is_char_boundary(end) {
                continue;
            }
            let lit = &t.literals[k + 1];
            if !msg[end..].starts_with(lit.as_str()) || !fits(t.slots[k].kind, &msg[pos..end]) {
                continue;
            }
            cur.push(msg[pos..end].to_string());
            go(t, msg, k + 1, end + lit.len(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if msg.starts_with(t.literals[0].as_str()) {
        go(t, msg, 0, t.literals[0].len(), &mut Vec::new(), &mut out);
    }
    out
}
