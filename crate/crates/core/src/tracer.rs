//! Backward provenance search from log-statement slots to data-source reads.
//!
//! Function graphs are stitched together on demand: a parameter continues
//! at the matching argument of its callers, a call result continues at the
//! callee's returns, and a free variable continues at the enclosing scope's
//! exports. A call stack keeps returns matched with the call they came
//! from; with an empty stack every caller is considered.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::annotations::{Annotations, DataSourceSpec};
use crate::dfg::builtins::{self, Flow};
use crate::dfg::{key_arg_of, path_backward, CallInfo, DfgEdge, FieldPath, FunctionDfg, NodeId, NodeKind, Port};
use crate::frontend::{FunctionId, FunctionMetadata, MODULE_UNIT};
use crate::linker::LogStatementRef;
use crate::repository::{FunctionRecord, Repository};
use crate::syntax::ast::ParamKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceLimits {
    /// Longest chain of calls descended into.
    pub max_depth: usize,
    /// Most search states visited per slot.
    pub max_nodes: usize,
    /// Longest field path tracked through nested containers and objects.
    pub field_depth: usize,
}

impl Default for TraceLimits {
    fn default() -> Self {
        Self {
            max_depth: 32,
            max_nodes: 200_000,
            field_depth: 4,
        }
    }
}

/// How precisely a finding is known; ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// Over-approximation: opaque code, unresolved calls, limits.
    Conservative,
    /// The whole record reaches the slot, so every attribute does.
    WholeSource,
    /// The attribute was selected by a literal field name.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub function: FunctionId,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub source_id: String,
    pub attribute: String,
    pub confidence: Confidence,
    /// From the source read to the log statement.
    pub path: Vec<PathStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub statement: LogStatementRef,
    /// Findings per slot, sorted by (source, attribute).
    pub slots: Vec<Vec<Finding>>,
    pub truncated: bool,
    /// Approximations made while tracing.
    pub notes: Vec<String>,
}

/// How a resolved callee is entered from a call site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Shape {
    Plain,
    /// Receiver binds the first parameter.
    Method,
    /// `Cls(...)`: the new object binds the first parameter of `__init__`.
    Constructor,
}

enum Resolution {
    Project(Vec<(u32, Shape)>),
    Builtin(Flow),
    External,
}

struct FnInfo {
    rec: Arc<FunctionRecord>,
    inbound: HashMap<NodeId, Vec<usize>>,
}

impl FnInfo {
    fn graph(&self) -> &FunctionDfg {
        &self.rec.graph
    }

    fn meta(&self) -> &FunctionMetadata {
        &self.rec.metadata
    }

    fn inbound(&self, node: NodeId) -> impl Iterator<Item = &DfgEdge> {
        self.inbound
            .get(&node)
            .into_iter()
            .flatten()
            .map(|&i| &self.rec.graph.edges[i])
    }

    fn exports_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.graph().nodes.iter().filter_map(move |n| match n.kind {
            NodeKind::Export { param: None } if n.name == name => Some(n.id),
            _ => None,
        })
    }

    fn param_export(&self, index: u32) -> Option<NodeId> {
        self.graph().nodes.iter().find_map(|n| match n.kind {
            NodeKind::Export { param: Some(i) } if i == index => Some(n.id),
            _ => None,
        })
    }

    fn returns(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.graph()
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Return))
            .map(|n| n.id)
    }

    /// Whether `name` is bound locally (parameter or assignment).
    fn binds(&self, name: &str) -> bool {
        self.graph().nodes.iter().any(|n| {
            n.name == name
                && matches!(
                    n.kind,
                    NodeKind::Parameter { .. } | NodeKind::VariableVersion { version: 1.. }
                )
        })
    }
}

/// Decoded view of every function in a repository, with name indexes for
/// call resolution.
struct ProjectView {
    fns: Vec<FnInfo>,
    by_id: HashMap<FunctionId, u32>,
    by_name: HashMap<(String, String), u32>,
    methods: HashMap<String, Vec<u32>>,
    unreadable: Vec<String>,
}

impl ProjectView {
    fn new(repo: &Repository) -> Self {
        let mut view = ProjectView {
            fns: Vec::new(),
            by_id: HashMap::new(),
            by_name: HashMap::new(),
            methods: HashMap::new(),
            unreadable: Vec::new(),
        };
        for id in repo.ids() {
            let rec = match repo.get(id) {
                Ok(r) => r,
                Err(e) => {
                    view.unreadable.push(e.to_string());
                    continue;
                }
            };
            let mut inbound: HashMap<NodeId, Vec<usize>> = HashMap::new();
            for (i, e) in rec.graph.edges.iter().enumerate() {
                inbound.entry(e.to).or_default().push(i);
            }
            let idx = view.fns.len() as u32;
            let meta = &rec.metadata;
            view.by_id.insert(meta.id.clone(), idx);
            view.by_name
                .insert((meta.id.path.clone(), meta.id.qualified_name.clone()), idx);
            if meta.class_name.is_some() {
                view.methods
                    .entry(meta.id.short_name().to_string())
                    .or_default()
                    .push(idx);
            }
            view.fns.push(FnInfo { rec, inbound });
        }
        view
    }

    fn named(&self, path: &str, qn: &str) -> Option<u32> {
        self.by_name.get(&(path.to_string(), qn.to_string())).copied()
    }

    /// A function `qn` or the constructor of class `qn` in `path`.
    fn callable(&self, path: &str, qn: &str) -> Option<(u32, Shape)> {
        if let Some(i) = self.named(path, qn) {
            if self.fns[i as usize].meta().class_name.is_none() || qn.contains('.') {
                return Some((i, Shape::Plain));
            }
        }
        self.named(path, &format!("{qn}.__init__"))
            .map(|i| (i, Shape::Constructor))
    }

    fn resolve(&self, caller: u32, call: &CallInfo) -> Resolution {
        let info = &self.fns[caller as usize];
        let meta = info.meta();
        let path = meta.id.path.as_str();
        let parts: Vec<&str> = call.callee.split('.').collect();
        if let [name] = parts.as_slice() {
            if info.binds(name) {
                return Resolution::External;
            }
            // Definitions local to the caller or to an enclosing function.
            let mut scope = Some(meta);
            while let Some(m) = scope {
                if !m.id.is_module_unit() && m.local_defs.iter().any(|d| d == name) {
                    let qn = format!("{}.{name}", m.id.qualified_name);
                    return match self.callable(path, &qn) {
                        Some(t) => Resolution::Project(vec![t]),
                        None => Resolution::External,
                    };
                }
                scope = m
                    .enclosing
                    .as_deref()
                    .and_then(|q| self.named(path, q))
                    .map(|i| self.fns[i as usize].meta());
            }
            if let Some(b) = meta.imports.iter().find(|b| b.name == *name) {
                return match (b.member.as_deref(), b.project_path()) {
                    (Some(member), Some(p)) => match self.callable(p, member) {
                        Some(t) => Resolution::Project(vec![t]),
                        None => Resolution::External,
                    },
                    _ => Resolution::External,
                };
            }
            if let Some(t) = self.callable(path, name) {
                return Resolution::Project(vec![t]);
            }
            return match builtins::function_flow(name) {
                Some(f) => Resolution::Builtin(f),
                None => Resolution::External,
            };
        }
        if let Some(b) = meta.imports.iter().find(|b| b.name == parts[0] && b.member.is_none()) {
            if !info.binds(parts[0]) {
                return match b.project_path() {
                    Some(p) => match self.callable(p, &parts[1..].join(".")) {
                        Some(t) => Resolution::Project(vec![t]),
                        None => Resolution::External,
                    },
                    None => Resolution::External,
                };
            }
        }
        let method = call.method_name();
        let mut candidates: Vec<u32> = self.methods.get(method).cloned().unwrap_or_default();
        if parts.len() == 2 && parts[0] == "self" && meta.class_name.is_some() {
            if let Some((class_qn, _)) = meta.id.qualified_name.rsplit_once('.') {
                if let Some(own) = self.named(path, &format!("{class_qn}.{method}")) {
                    candidates = vec![own];
                }
            }
        }
        if !candidates.is_empty() {
            candidates.sort_unstable();
            return Resolution::Project(candidates.into_iter().map(|c| (c, Shape::Method)).collect());
        }
        match builtins::method_flow(method) {
            Some(f) => Resolution::Builtin(f),
            None => Resolution::External,
        }
    }
}

/// Which caller-side edges feed a callee parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArgFeed {
    /// Edges with no slot into the call site (the receiver).
    Receiver,
    Arg(u32),
}

/// Maps call-site arguments to the parameter `param` of `callee`. The flag
/// marks approximate matches (spreads and variadic parameters).
fn feeds(callee: &FunctionMetadata, shape: Shape, call: &CallInfo, param: u32) -> Vec<(ArgFeed, bool)> {
    let offset = match shape {
        Shape::Plain => 0,
        Shape::Method | Shape::Constructor => 1,
    };
    let mut out = Vec::new();
    if param == 0 && shape == Shape::Method {
        out.push((ArgFeed::Receiver, false));
    }
    if param < offset {
        return out;
    }
    let params = &callee.params;
    let Some(target) = params.get(param as usize) else {
        return out;
    };
    let varargs = params.iter().position(|p| p.kind == ParamKind::VarArgs);
    let kwargs = params.iter().position(|p| p.kind == ParamKind::KwArgs);
    let mut pos = offset as usize;
    for (j, a) in call.args.iter().enumerate() {
        let j = j as u32;
        if a.spread {
            out.push((ArgFeed::Arg(j), true));
            continue;
        }
        if let Some(k) = &a.keyword {
            let named = params
                .iter()
                .position(|p| &p.name == k && matches!(p.kind, ParamKind::Normal | ParamKind::KeywordOnly));
            match named {
                Some(i) if i == param as usize => out.push((ArgFeed::Arg(j), false)),
                None if kwargs == Some(param as usize) => out.push((ArgFeed::Arg(j), true)),
                _ => {}
            }
            continue;
        }
        let slot = match params.get(pos) {
            Some(p) if p.kind == ParamKind::Normal => Some((pos, false)),
            _ => varargs.map(|v| (v, true)),
        };
        pos += 1;
        if let Some((i, approx)) = slot {
            if i == param as usize {
                out.push((ArgFeed::Arg(j), approx || target.kind == ParamKind::VarArgs));
            }
        }
    }
    out
}

/// Parameter index that call argument `arg` binds in the callee, if any.
fn param_of_arg(callee: &FunctionMetadata, shape: Shape, call: &CallInfo, arg: u32) -> Option<u32> {
    (0..callee.params.len() as u32).find(|&p| {
        feeds(callee, shape, call, p)
            .iter()
            .any(|(f, approx)| *f == ArgFeed::Arg(arg) && !approx)
    })
}

type Frame = (u32, NodeId, Shape);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    func: u32,
    node: NodeId,
    port: Port,
    pending: FieldPath,
    stack: Vec<Frame>,
}

struct Item {
    key: Key,
    parent: Option<usize>,
    conservative: bool,
}

/// Per-slot search state.
struct Search<'t> {
    items: Vec<Item>,
    queue: VecDeque<usize>,
    seen: HashMap<Key, (usize, bool)>,
    tracer: &'t Tracer<'t>,
    findings: BTreeMap<(String, String), (Confidence, usize)>,
    truncated: bool,
    notes: BTreeSet<String>,
}

impl<'t> Search<'t> {
    fn push(&mut self, key: Key, parent: Option<usize>, conservative: bool) {
        if let Some(&(idx, cons)) = self.seen.get(&key) {
            if !cons || conservative {
                return;
            }
            self.seen.insert(key.clone(), (idx, false));
        }
        if key.stack.len() > self.tracer.limits.max_depth {
            self.truncated = true;
            return;
        }
        let idx = self.items.len();
        self.seen.insert(key.clone(), (idx, conservative));
        self.items.push(Item {
            key,
            parent,
            conservative,
        });
        self.queue.push_back(idx);
    }

    fn note(&mut self, msg: String) {
        self.notes.insert(msg);
    }

    fn info(&self, f: u32) -> &'t FnInfo {
        &self.tracer.view.fns[f as usize]
    }

    fn follow(&mut self, at: usize, pending: &[String], conservative: bool) {
        self.follow_except(at, pending, conservative, &[]);
    }

    /// Like [`Self::follow`], skipping edges from the given argument slots.
    fn follow_except(&mut self, at: usize, pending: &[String], conservative: bool, skip: &[u32]) {
        let key = self.items[at].key.clone();
        let info = self.info(key.func);
        for e in info.inbound(key.node) {
            if e.slot.is_some_and(|s| skip.contains(&s)) {
                continue;
            }
            if let Some(p) = path_backward(&e.effect, pending, self.tracer.limits.field_depth) {
                self.push(
                    Key {
                        func: key.func,
                        node: e.from,
                        port: e.port,
                        pending: p,
                        stack: key.stack.clone(),
                    },
                    Some(at),
                    conservative,
                );
            }
        }
    }

    /// Continues at caller-side edges that feed parameter `param`.
    fn step_to_caller(&mut self, at: usize, frame: Frame, callee: u32, param: u32, stack: Vec<Frame>) {
        let (cf, cn, shape) = frame;
        let caller = self.info(cf);
        let Some(NodeKind::CallSite(call)) = caller.graph().node(cn).map(|n| &n.kind) else {
            return;
        };
        let pending = self.items[at].key.pending.clone();
        let cons = self.items[at].conservative;
        let meta = self.info(callee).meta();
        for (feed, approx) in feeds(meta, shape, call, param) {
            for e in caller.inbound(cn) {
                let hit = match feed {
                    ArgFeed::Receiver => e.slot.is_none(),
                    ArgFeed::Arg(j) => e.slot == Some(j),
                };
                if !hit {
                    continue;
                }
                let wanted: &[String] = if approx { &[] } else { &pending };
                if let Some(p) = path_backward(&e.effect, wanted, self.tracer.limits.field_depth) {
                    self.push(
                        Key {
                            func: cf,
                            node: e.from,
                            port: e.port,
                            pending: p,
                            stack: stack.clone(),
                        },
                        Some(at),
                        cons || approx,
                    );
                }
            }
        }
    }

    fn enter(&mut self, at: usize, callee: u32, node: NodeId, frame: Frame) {
        let key = &self.items[at].key;
        let mut stack = key.stack.clone();
        // Recursive calls reuse the earlier frame instead of growing the stack.
        match stack.iter().position(|f| *f == frame) {
            Some(i) => stack.truncate(i + 1),
            None => stack.push(frame),
        }
        let next = Key {
            func: callee,
            node,
            port: Port::Value,
            pending: key.pending.clone(),
            stack,
        };
        let cons = self.items[at].conservative;
        self.push(next, Some(at), cons);
    }

    fn step(&mut self, at: usize) {
        let key = self.items[at].key.clone();
        let cons = self.items[at].conservative;
        let info = self.info(key.func);
        let Some(node) = info.graph().node(key.node) else {
            return;
        };
        let pending = key.pending.as_slice();
        let whole: &[String] = &[];
        match (&node.kind, key.port) {
            (NodeKind::SourceRead { .. }, _) => self.source_read(at),
            (NodeKind::Constant { .. }, _) => {}
            (NodeKind::Parameter { index, .. }, _) => {
                let index = *index;
                if let Some((&top, rest)) = key.stack.split_last() {
                    self.step_to_caller(at, top, key.func, index, rest.to_vec());
                } else {
                    for frame in self.tracer.call_sites(key.func).iter() {
                        self.step_to_caller(at, *frame, key.func, index, Vec::new());
                    }
                }
            }
            (NodeKind::VariableVersion { version: 0 }, _) => {
                let targets = self.tracer.free_variable(key.func, &node.name);
                if targets.is_empty() {
                    return;
                }
                for (f, n) in targets {
                    self.push(
                        Key {
                            func: f,
                            node: n,
                            port: Port::Value,
                            pending: key.pending.clone(),
                            stack: Vec::new(),
                        },
                        Some(at),
                        cons,
                    );
                }
            }
            (NodeKind::CallSite(call), port) => {
                let res = self.tracer.view.resolve(key.func, call);
                match (res, port) {
                    (Resolution::Project(targets), Port::Value) => {
                        for (t, shape) in targets {
                            let frame = (key.func, key.node, shape);
                            let callee = self.info(t);
                            if shape == Shape::Constructor {
                                if let Some(x) = callee.param_export(0) {
                                    self.enter(at, t, x, frame);
                                }
                            } else {
                                for r in callee.returns() {
                                    self.enter(at, t, r, frame);
                                }
                            }
                        }
                    }
                    (Resolution::Project(targets), Port::Receiver) => {
                        for (t, shape) in targets {
                            if let Some(x) = self.info(t).param_export(0) {
                                self.enter(at, t, x, (key.func, key.node, shape));
                            }
                        }
                    }
                    (Resolution::Project(targets), Port::ArgOut { arg }) => {
                        for (t, shape) in targets {
                            let callee = self.info(t);
                            let Some(p) = param_of_arg(callee.meta(), shape, call, arg) else {
                                continue;
                            };
                            if let Some(x) = callee.param_export(p) {
                                self.enter(at, t, x, (key.func, key.node, shape));
                            }
                        }
                    }
                    (Resolution::Builtin(flow), Port::Value) => {
                        let p = match flow {
                            Flow::Carry => pending,
                            Flow::Reset => whole,
                        };
                        let name = call.method_name();
                        let skip: Vec<u32> = (0..call.arity())
                            .filter(|&j| {
                                let kw = call.args[j as usize].keyword.as_deref();
                                kw.is_some_and(|k| builtins::is_selector_keyword(name, k))
                            })
                            .collect();
                        self.follow_except(at, p, cons, &skip);
                    }
                    (_, Port::Receiver) if builtins::receiver_unchanged(call.method_name()) => {}
                    (Resolution::Builtin(_), Port::ArgOut { .. }) => {}
                    _ => {
                        self.note(format!(
                            "{}:{}: call to {} is unresolved; its inputs are taken whole",
                            info.meta().id.path,
                            node.line,
                            call.callee
                        ));
                        self.follow(at, &[], true);
                    }
                }
            }
            (NodeKind::Opaque { construct }, _) => {
                self.note(format!(
                    "{}:{}: {construct} is opaque; its inputs are taken whole",
                    info.meta().id.path,
                    node.line
                ));
                self.follow(at, &[], true);
            }
            _ => self.follow(at, pending, cons),
        }
    }

    fn source_read(&mut self, at: usize) {
        let key = self.items[at].key.clone();
        let cons = self.items[at].conservative;
        let info = self.info(key.func);
        let Some(NodeKind::SourceRead { call, source_key }) = info.graph().node(key.node).map(|n| &n.kind) else {
            return;
        };
        let ann = self.tracer.annotations;
        let mut specs: Vec<(&DataSourceSpec, bool)> = Vec::new();
        let keys = match source_key {
            Some(k) => Some(BTreeSet::from([k.clone()])),
            None => self.tracer.resolve_keys(key.func, key.node, call, &key.stack),
        };
        match keys {
            Some(keys) => {
                for k in keys {
                    match ann.match_source(&k) {
                        Ok(Some(s)) => specs.push((s, false)),
                        Ok(None) => {}
                        Err(amb) => {
                            self.note(amb.to_string());
                            for c in &amb.candidates {
                                if let Some(s) = ann.sources.iter().find(|s| &s.match_pattern == c) {
                                    specs.push((s, true));
                                }
                            }
                        }
                    }
                }
            }
            None => {
                self.note(format!(
                    "{}:{}: source name of {} is not a literal; every source is assumed",
                    info.meta().id.path,
                    info.graph().node(key.node).map_or(0, |n| n.line),
                    call.callee
                ));
                specs.extend(ann.sources.iter().map(|s| (s, true)));
            }
        }
        for (spec, approx) in specs {
            let weak = cons || approx;
            match key.pending.first().map(String::as_str) {
                Some(attr) => {
                    if spec.attribute(attr).is_some() {
                        let c = if weak {
                            Confidence::Conservative
                        } else {
                            Confidence::Exact
                        };
                        self.find(&spec.source_id, attr, c, at);
                    }
                }
                None => {
                    let c = if weak {
                        Confidence::Conservative
                    } else {
                        Confidence::WholeSource
                    };
                    for a in &spec.attributes {
                        self.find(&spec.source_id, &a.name, c, at);
                    }
                }
            }
        }
    }

    fn find(&mut self, source: &str, attr: &str, c: Confidence, at: usize) {
        let k = (source.to_string(), attr.to_string());
        match self.findings.get(&k) {
            Some((best, _)) if *best >= c => {}
            _ => {
                self.findings.insert(k, (c, at));
            }
        }
    }

    fn path(&self, at: usize, stmt: &LogStatementRef) -> Vec<PathStep> {
        let mut out = Vec::new();
        let mut cur = Some(at);
        while let Some(i) = cur {
            let k = &self.items[i].key;
            let step = PathStep {
                function: self.info(k.func).meta().id.clone(),
                node: k.node,
            };
            if out.last() != Some(&step) {
                out.push(step);
            }
            cur = self.items[i].parent;
        }
        out.push(PathStep {
            function: stmt.function.clone(),
            node: stmt.node_id,
        });
        out
    }
}

/// Traces log statements against one repository and annotation set.
/// Shareable across threads; results are memoized per statement.
pub struct Tracer<'a> {
    annotations: &'a Annotations,
    limits: TraceLimits,
    view: ProjectView,
    callers: Mutex<HashMap<u32, Arc<Vec<Frame>>>>,
    memo: Mutex<HashMap<(FunctionId, NodeId), Arc<ProvenanceReport>>>,
}

impl<'a> Tracer<'a> {
    pub fn new(repo: &Repository, annotations: &'a Annotations, limits: TraceLimits) -> Self {
        Self {
            annotations,
            limits,
            view: ProjectView::new(repo),
            callers: Mutex::new(HashMap::new()),
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Records that could not be decoded; calls into them are unresolved.
    pub fn unreadable(&self) -> &[String] {
        &self.view.unreadable
    }

    fn call_sites(&self, callee: u32) -> Arc<Vec<Frame>> {
        if let Some(v) = self.callers.lock().expect("callers lock").get(&callee) {
            return v.clone();
        }
        let mut out = Vec::new();
        for (ci, info) in self.view.fns.iter().enumerate() {
            for n in &info.graph().nodes {
                if let NodeKind::CallSite(call) = &n.kind {
                    if let Resolution::Project(ts) = self.view.resolve(ci as u32, call) {
                        for (t, shape) in ts {
                            if t == callee {
                                out.push((ci as u32, n.id, shape));
                            }
                        }
                    }
                }
            }
        }
        let out = Arc::new(out);
        self.callers.lock().expect("callers lock").insert(callee, out.clone());
        out
    }

    /// Every call site whose callee resolves to `callee`.
    pub fn find_call_sites(&self, callee: &FunctionId) -> Vec<(FunctionId, NodeId)> {
        let Some(&idx) = self.view.by_id.get(callee) else {
            return Vec::new();
        };
        self.call_sites(idx)
            .iter()
            .map(|(f, n, _)| (self.view.fns[*f as usize].meta().id.clone(), *n))
            .collect()
    }

    /// Exports of a free variable in the enclosing scopes, innermost first;
    /// the module scope is the last resort.
    fn free_variable(&self, func: u32, name: &str) -> Vec<(u32, NodeId)> {
        let meta = self.view.fns[func as usize].meta();
        let path = &meta.id.path;
        let mut scope = meta.enclosing.clone();
        while let Some(q) = scope {
            let Some(i) = self.view.named(path, &q) else {
                break;
            };
            let info = &self.view.fns[i as usize];
            let found: Vec<(u32, NodeId)> = info.exports_named(name).map(|n| (i, n)).collect();
            if !found.is_empty() {
                return found;
            }
            scope = info.meta().enclosing.clone();
        }
        match self.view.named(path, MODULE_UNIT) {
            Some(m) if m != func => self.view.fns[m as usize].exports_named(name).map(|n| (m, n)).collect(),
            _ => Vec::new(),
        }
    }

    /// Literal values the key argument of a reader call can take, following
    /// only value-preserving edges. `None` when any path is not literal.
    fn resolve_keys(&self, func: u32, node: NodeId, call: &CallInfo, stack: &[Frame]) -> Option<BTreeSet<String>> {
        let k = key_arg_of(call)? as u32;
        let mut keys = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut work: Vec<(u32, NodeId, Vec<Frame>, bool)> = Vec::new();
        for e in self.view.fns[func as usize].inbound(node) {
            if e.slot == Some(k) {
                if !e.copy {
                    return None;
                }
                work.push((func, e.from, stack.to_vec(), true));
            }
        }
        let mut budget = 10_000usize;
        while let Some((f, n, st, _)) = work.pop() {
            budget = budget.checked_sub(1)?;
            if !seen.insert((f, n, st.clone())) {
                continue;
            }
            let info = &self.view.fns[f as usize];
            let node = info.graph().node(n)?;
            match &node.kind {
                NodeKind::Constant { literal: Some(s) } => {
                    keys.insert(s.clone());
                }
                NodeKind::VariableVersion { version: 0 } => {
                    let targets = self.free_variable(f, &node.name);
                    if targets.is_empty() {
                        return None;
                    }
                    for (tf, tn) in targets {
                        work.push((tf, tn, Vec::new(), true));
                    }
                }
                NodeKind::VariableVersion { .. } | NodeKind::Export { param: None } => {
                    let is_export = matches!(node.kind, NodeKind::Export { .. });
                    for e in info.inbound(n) {
                        if !(e.copy || is_export) || e.port != Port::Value || !e.effect.is_empty() {
                            return None;
                        }
                        work.push((f, e.from, st.clone(), true));
                    }
                }
                NodeKind::Parameter { index, .. } => {
                    let frames: Vec<(Frame, Vec<Frame>)> = match st.split_last() {
                        Some((&top, rest)) => vec![(top, rest.to_vec())],
                        None => self.call_sites(f).iter().map(|fr| (*fr, Vec::new())).collect(),
                    };
                    if frames.is_empty() {
                        return None;
                    }
                    for ((cf, cn, shape), rest) in frames {
                        let caller = &self.view.fns[cf as usize];
                        let Some(NodeKind::CallSite(c)) = caller.graph().node(cn).map(|x| &x.kind) else {
                            return None;
                        };
                        let fs = feeds(info.meta(), shape, c, *index);
                        if fs.is_empty() {
                            // Unfilled parameter: its default is not tracked.
                            return None;
                        }
                        for (feed, approx) in fs {
                            if approx {
                                return None;
                            }
                            for e in caller.inbound(cn) {
                                let hit = match feed {
                                    ArgFeed::Receiver => e.slot.is_none(),
                                    ArgFeed::Arg(j) => e.slot == Some(j),
                                };
                                if hit {
                                    if !e.copy || !e.effect.is_empty() {
                                        return None;
                                    }
                                    work.push((cf, e.from, rest.clone(), true));
                                }
                            }
                        }
                    }
                }
                _ => return None,
            }
        }
        if keys.is_empty() {
            None
        } else {
            Some(keys)
        }
    }

    pub fn trace(&self, stmt: &LogStatementRef) -> Arc<ProvenanceReport> {
        let memo_key = (stmt.function.clone(), stmt.node_id);
        if let Some(r) = self.memo.lock().expect("memo lock").get(&memo_key) {
            return r.clone();
        }
        let report = Arc::new(self.trace_uncached(stmt));
        self.memo.lock().expect("memo lock").insert(memo_key, report.clone());
        report
    }

    fn trace_uncached(&self, stmt: &LogStatementRef) -> ProvenanceReport {
        let mut report = ProvenanceReport {
            statement: stmt.clone(),
            slots: vec![Vec::new(); stmt.slot_count as usize],
            truncated: false,
            notes: Vec::new(),
        };
        let mut notes = BTreeSet::new();
        let Some(&func) = self.view.by_id.get(&stmt.function) else {
            report.truncated = true;
            notes.insert(format!("{} is not readable; every source is assumed", stmt.function));
            for slot in &mut report.slots {
                *slot = self.everything(stmt);
            }
            report.notes = notes.into_iter().collect();
            return report;
        };
        for s in 0..stmt.slot_count {
            let mut search = Search {
                items: Vec::new(),
                queue: VecDeque::new(),
                seen: HashMap::new(),
                tracer: self,
                findings: BTreeMap::new(),
                truncated: false,
                notes: BTreeSet::new(),
            };
            for e in self.view.fns[func as usize].inbound(stmt.node_id) {
                if e.slot != Some(s) {
                    continue;
                }
                if let Some(p) = path_backward(&e.effect, &[], self.limits.field_depth) {
                    search.push(
                        Key {
                            func,
                            node: e.from,
                            port: e.port,
                            pending: p,
                            stack: Vec::new(),
                        },
                        None,
                        false,
                    );
                }
            }
            while let Some(at) = search.queue.pop_front() {
                if search.items.len() > self.limits.max_nodes {
                    search.truncated = true;
                    break;
                }
                search.step(at);
            }
            let mut found: Vec<Finding> = search
                .findings
                .iter()
                .map(|((src, attr), (c, at))| Finding {
                    source_id: src.clone(),
                    attribute: attr.clone(),
                    confidence: *c,
                    path: search.path(*at, stmt),
                })
                .collect();
            if search.truncated {
                report.truncated = true;
                notes.insert(format!("slot {s}: search limits reached; every source is assumed"));
                for f in self.everything(stmt) {
                    if !found
                        .iter()
                        .any(|x| x.source_id == f.source_id && x.attribute == f.attribute)
                    {
                        found.push(f);
                    }
                }
                found.sort_by(|a, b| (&a.source_id, &a.attribute).cmp(&(&b.source_id, &b.attribute)));
            }
            notes.extend(search.notes);
            report.slots[s as usize] = found;
        }
        report.notes = notes.into_iter().collect();
        report
    }

    fn everything(&self, stmt: &LogStatementRef) -> Vec<Finding> {
        let mut out = Vec::new();
        for s in &self.annotations.sources {
            for a in &s.attributes {
                out.push(Finding {
                    source_id: s.source_id.clone(),
                    attribute: a.name.clone(),
                    confidence: Confidence::Conservative,
                    path: vec![PathStep {
                        function: stmt.function.clone(),
                        node: stmt.node_id,
                    }],
                });
            }
        }
        out.sort_by(|a, b| (&a.source_id, &a.attribute).cmp(&(&b.source_id, &b.attribute)));
        out
    }
}
