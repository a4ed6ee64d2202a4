use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::builtins::{self, MUTATOR_METHODS};
use super::model::*;
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::format::{parse_brace, parse_printf, spec_kind, BracePiece, FieldRef, PrintfPiece, SlotKind};
use crate::frontend::{FunctionUnit, LoggerApi, UnitBody};
use crate::syntax::ast::*;
use crate::syntax::unparse;

/// Project-wide knobs that shape graph construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    pub logger: LoggerApi,
    /// Callees that read annotated data sources. An entry without a dot
    /// matches the last segment of the callee (`read_csv` matches
    /// `tabular.read_csv`); a dotted entry must match exactly.
    pub readers: Vec<String>,
}

impl BuildOptions {
    pub fn is_reader(&self, callee: &str) -> bool {
        let last = callee.rsplit('.').next().unwrap_or(callee);
        self.readers
            .iter()
            .any(|r| if r.contains('.') { r == callee } else { r == last })
    }
}

/// Builds the (unpruned) data-flow graph of one unit.
pub fn build_dfg(unit: &FunctionUnit, opts: &BuildOptions) -> (FunctionDfg, Vec<Diagnostic>) {
    let mut b = Builder::new(unit, opts);
    b.run(unit);
    b.finish(unit)
}

type Env = BTreeMap<String, NodeId>;

/// A value flowing into a consumer.
#[derive(Debug, Clone)]
struct Ref {
    node: NodeId,
    effect: Vec<Step>,
    port: Port,
    copy: bool,
    /// Variable this reference reads, for loop back-edge bookkeeping.
    var: Option<String>,
}

impl Ref {
    fn node(node: NodeId) -> Self {
        Self {
            node,
            effect: Vec::new(),
            port: Port::Value,
            copy: true,
            var: None,
        }
    }

    fn var(node: NodeId, name: &str) -> Self {
        Self {
            var: Some(name.to_string()),
            ..Self::node(node)
        }
    }
}

fn derived(refs: Vec<Ref>) -> Vec<Ref> {
    refs.into_iter()
        .map(|mut r| {
            r.copy = false;
            r
        })
        .collect()
}

fn with_step(refs: Vec<Ref>, step: Step) -> Vec<Ref> {
    refs.into_iter()
        .map(|mut r| {
            r.copy = false;
            r.effect.push(step.clone());
            r
        })
        .collect()
}

#[derive(Default)]
struct LoopFrame {
    pre: Env,
    /// Edges that read a pre-loop version (or a free variable) inside the loop.
    uses: Vec<(String, NodeId, DfgEdge)>,
    continues: Vec<Env>,
    breaks: Vec<Env>,
}

/// How a message expression maps onto template slots.
enum Plan<'e> {
    Template {
        template: TemplateSource,
        slots: Vec<Vec<&'e Expr>>,
    },
    Whole(Vec<&'e Expr>, Option<String>),
}

struct Builder<'a> {
    opts: &'a BuildOptions,
    path: String,
    is_module: bool,
    nodes: Vec<DfgNode>,
    edges: Vec<DfgEdge>,
    env: Env,
    params: Vec<(String, NodeId)>,
    versions: BTreeMap<String, u32>,
    history: BTreeMap<String, Vec<NodeId>>,
    free: BTreeMap<String, NodeId>,
    loops: Vec<LoopFrame>,
    comp: Vec<BTreeMap<String, Vec<Ref>>>,
    /// Names bound by imports; module aliases are not values.
    imports: BTreeMap<String, bool>,
    exits: Vec<Env>,
    diags: Vec<Diagnostic>,
    line: u32,
}

impl<'a> Builder<'a> {
    fn new(unit: &FunctionUnit, opts: &'a BuildOptions) -> Self {
        let meta = &unit.metadata;
        Self {
            opts,
            path: meta.id.path.clone(),
            is_module: meta.id.is_module_unit(),
            nodes: Vec::new(),
            edges: Vec::new(),
            env: Env::new(),
            params: Vec::new(),
            versions: BTreeMap::new(),
            history: BTreeMap::new(),
            free: BTreeMap::new(),
            loops: Vec::new(),
            comp: Vec::new(),
            imports: meta
                .imports
                .iter()
                .map(|b| (b.name.clone(), b.member.is_none()))
                .collect(),
            exits: Vec::new(),
            diags: Vec::new(),
            line: meta.span.start_line,
        }
    }

    fn run(&mut self, unit: &FunctionUnit) {
        for (i, p) in unit.metadata.params.iter().enumerate() {
            let id = self.add_node(
                NodeKind::Parameter {
                    index: i as u32,
                    param_kind: p.kind,
                },
                &p.name,
            );
            self.env.insert(p.name.clone(), id);
            self.params.push((p.name.clone(), id));
        }
        match &unit.body {
            UnitBody::Function(def) => self.block(&def.body),
            UnitBody::Module(stmts) => self.block(stmts),
        }
    }

    fn finish(mut self, unit: &FunctionUnit) -> (FunctionDfg, Vec<Diagnostic>) {
        let last = unit.metadata.span.end_line;
        self.line = last;
        let mut finals = std::mem::take(&mut self.exits);
        finals.push(self.env.clone());
        for (i, (name, pid)) in self.params.clone().into_iter().enumerate() {
            let outs: BTreeSet<NodeId> = finals
                .iter()
                .filter_map(|e| e.get(&name).copied())
                .filter(|&n| n != pid)
                .collect();
            if outs.is_empty() {
                continue;
            }
            let ex = self.add_node(NodeKind::Export { param: Some(i as u32) }, &name);
            for n in outs {
                self.edges.push(DfgEdge::plain(n, ex));
            }
        }
        if self.is_module || !unit.metadata.local_defs.is_empty() {
            let param_names: BTreeSet<String> = self.params.iter().map(|p| p.0.clone()).collect();
            for (name, versions) in self.history.clone() {
                if param_names.contains(&name) {
                    continue;
                }
                let ex = self.add_node(NodeKind::Export { param: None }, &name);
                for n in versions {
                    self.edges.push(DfgEdge::plain(n, ex));
                }
            }
        }
        let g = FunctionDfg::new(unit.metadata.id.clone(), self.nodes, self.edges);
        (g, self.diags)
    }

    // ---- nodes and edges ----

    fn add_node(&mut self, kind: NodeKind, name: &str) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(DfgNode {
            id,
            kind,
            name: name.to_string(),
            line: self.line,
        });
        id
    }

    fn constant(&mut self, literal: Option<String>, text: &str) -> Ref {
        let id = self.add_node(NodeKind::Constant { literal }, text);
        Ref::node(id)
    }

    fn ensure(&mut self, refs: Vec<Ref>) -> Vec<Ref> {
        if refs.is_empty() {
            vec![self.constant(None, "<const>")]
        } else {
            refs
        }
    }

    fn add_edges(&mut self, refs: Vec<Ref>, to: NodeId, slot: Option<u32>) {
        for r in refs {
            let e = DfgEdge {
                from: r.node,
                to,
                slot,
                effect: r.effect,
                port: r.port,
                copy: r.copy,
            };
            if let Some(v) = &r.var {
                let free = self.free.get(v).copied();
                for f in &mut self.loops {
                    let pre = f.pre.get(v).copied();
                    if pre == Some(r.node) || (pre.is_none() && free == Some(r.node)) {
                        f.uses.push((v.clone(), r.node, e.clone()));
                    }
                }
            }
            self.edges.push(e);
        }
    }

    fn assign_name(&mut self, name: &str, refs: Vec<Ref>) -> NodeId {
        let refs = self.ensure(refs);
        let v = self.versions.entry(name.to_string()).or_insert(0);
        *v += 1;
        let version = *v;
        let id = self.add_node(NodeKind::VariableVersion { version }, name);
        self.add_edges(refs, id, None);
        self.env.insert(name.to_string(), id);
        self.history.entry(name.to_string()).or_default().push(id);
        id
    }

    fn lookup(&mut self, name: &str) -> Vec<Ref> {
        for scope in self.comp.iter().rev() {
            if let Some(r) = scope.get(name) {
                return r.clone();
            }
        }
        if let Some(&id) = self.env.get(name) {
            return vec![Ref::var(id, name)];
        }
        if self.imports.contains_key(name) {
            return Vec::new();
        }
        let id = match self.free.get(name) {
            Some(&id) => id,
            None => {
                let id = self.add_node(NodeKind::VariableVersion { version: 0 }, name);
                self.free.insert(name.to_string(), id);
                id
            }
        };
        vec![Ref::var(id, name)]
    }

    fn is_local(&self, name: &str) -> bool {
        self.env.contains_key(name)
    }

    fn opaque(&mut self, construct: &str) -> Vec<Ref> {
        self.diags.push(
            Diagnostic::new(
                DiagnosticKind::Opaque,
                format!("{construct} is outside the analyzed subset; treated as opaque"),
            )
            .at(self.path.clone(), self.line),
        );
        let mut inputs: Vec<Ref> = self.env.iter().map(|(n, &id)| Ref::var(id, n)).collect();
        for scope in self.comp.clone() {
            inputs.extend(scope.into_values().flatten());
        }
        let id = self.add_node(
            NodeKind::Opaque {
                construct: construct.to_string(),
            },
            construct,
        );
        self.add_edges(derived(inputs), id, None);
        vec![Ref {
            copy: false,
            ..Ref::node(id)
        }]
    }

    /// Joins several environments, creating a merge version for every
    /// variable whose version differs between them.
    fn merge(&mut self, envs: &[Env]) -> Env {
        let mut out = Env::new();
        let names: BTreeSet<&String> = envs.iter().flat_map(|e| e.keys()).collect();
        let mut pending: Vec<(String, Vec<NodeId>)> = Vec::new();
        for name in names {
            let ids: BTreeSet<NodeId> = envs.iter().filter_map(|e| e.get(name).copied()).collect();
            if ids.len() == 1 {
                out.insert(name.clone(), *ids.iter().next().unwrap());
            } else {
                pending.push((name.clone(), ids.into_iter().collect()));
            }
        }
        for (name, ids) in pending {
            let refs = ids.iter().map(|&id| Ref::var(id, &name)).collect();
            let id = self.assign_name(&name, refs);
            out.insert(name, id);
        }
        out
    }

    // ---- statements ----

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        self.line = s.span.start_line;
        match &s.kind {
            StmtKind::FunctionDef(_) | StmtKind::Import(_) | StmtKind::ImportFrom { .. } => {}
            StmtKind::ClassDef(c) => {
                if self.is_module {
                    let body: Vec<Stmt> = c
                        .body
                        .iter()
                        .filter(|s| !matches!(s.kind, StmtKind::FunctionDef(_)))
                        .cloned()
                        .collect();
                    self.block(&body);
                }
            }
            StmtKind::Assign { targets, value } => self.assign(targets, value),
            StmtKind::AugAssign { target, value, .. } => {
                let mut refs = derived(self.expr(value));
                refs.extend(derived(self.expr(target)));
                self.store(target, refs);
            }
            StmtKind::AnnAssign { target, value, .. } => {
                if let Some(v) = value {
                    self.assign(std::slice::from_ref(target), v);
                }
            }
            StmtKind::Expr(e) => match &e.kind {
                ExprKind::Const(_) => {}
                ExprKind::Call { func, args } => {
                    self.call(e, func, args, true);
                }
                _ => {
                    self.expr(e);
                }
            },
            StmtKind::Return(value) => {
                if let Some(e) = value {
                    if !matches!(e.kind, ExprKind::Const(Constant::None)) {
                        let refs = self.expr(e);
                        self.return_node(e, refs);
                    }
                }
                self.exits.push(self.env.clone());
            }
            StmtKind::If { test, body, orelse } => {
                self.expr(test);
                let pre = self.env.clone();
                self.block(body);
                let a = std::mem::replace(&mut self.env, pre);
                self.block(orelse);
                let b = self.env.clone();
                self.line = s.span.start_line;
                self.env = self.merge(&[a, b]);
            }
            StmtKind::For {
                target,
                iter,
                body,
                orelse,
            } => {
                let items = derived(self.expr(iter));
                self.loops.push(LoopFrame {
                    pre: self.env.clone(),
                    ..Default::default()
                });
                self.store(target, items);
                self.block(body);
                self.line = s.span.start_line;
                self.close_loop();
                self.block(orelse);
            }
            StmtKind::While { test, body, orelse } => {
                self.loops.push(LoopFrame {
                    pre: self.env.clone(),
                    ..Default::default()
                });
                self.expr(test);
                self.block(body);
                self.line = s.span.start_line;
                self.close_loop();
                self.block(orelse);
            }
            StmtKind::With { items, body } => {
                for item in items {
                    let refs = self.expr(&item.context);
                    if let Some(t) = &item.target {
                        self.store(t, refs);
                    }
                }
                self.block(body);
            }
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => self.try_stmt(body, handlers, orelse, finalbody),
            StmtKind::Raise { exc, cause } => {
                for e in exc.iter().chain(cause.iter()) {
                    self.expr(e);
                }
            }
            StmtKind::Assert { test, msg } => {
                self.expr(test);
                if let Some(m) = msg {
                    self.expr(m);
                }
            }
            StmtKind::Global(names) | StmtKind::Nonlocal(names) => {
                self.diags.push(
                    Diagnostic::new(
                        DiagnosticKind::Opaque,
                        format!("rebinding outer names ({}) is not tracked", names.join(", ")),
                    )
                    .at(self.path.clone(), self.line),
                );
            }
            StmtKind::Break => {
                let env = self.env.clone();
                if let Some(f) = self.loops.last_mut() {
                    f.breaks.push(env);
                }
            }
            StmtKind::Continue => {
                let env = self.env.clone();
                if let Some(f) = self.loops.last_mut() {
                    f.continues.push(env);
                }
            }
            StmtKind::Delete(_) | StmtKind::Pass => {}
        }
    }

    fn return_node(&mut self, e: &Expr, refs: Vec<Ref>) {
        let refs = self.ensure(refs);
        let id = self.add_node(NodeKind::Return, &unparse(e));
        self.add_edges(refs, id, None);
    }

    fn close_loop(&mut self) {
        let frame = self.loops.pop().expect("loop frame");
        let end = self.env.clone();
        let mut carried = vec![end.clone()];
        carried.extend(frame.continues.iter().cloned());
        for (var, pre_node, edge) in &frame.uses {
            for env in &carried {
                if let Some(&n) = env.get(var) {
                    if n != *pre_node {
                        let mut e = edge.clone();
                        e.from = n;
                        self.edges.push(e);
                    }
                }
            }
        }
        let mut envs = vec![frame.pre.clone(), end];
        envs.extend(frame.continues);
        envs.extend(frame.breaks);
        self.env = self.merge(&envs);
    }

    fn try_stmt(&mut self, body: &[Stmt], handlers: &[ExceptHandler], orelse: &[Stmt], finalbody: &[Stmt]) {
        let pre = self.env.clone();
        let marks: BTreeMap<String, usize> = self.history.iter().map(|(k, v)| (k.clone(), v.len())).collect();
        self.block(body);
        let after = self.env.clone();
        // A handler may start after any assignment inside the body.
        let mut starts = vec![pre, after.clone()];
        for (name, versions) in &self.history {
            let from = marks.get(name).copied().unwrap_or(0);
            for &v in &versions[from..] {
                starts.push(Env::from([(name.clone(), v)]));
            }
        }
        let start = if handlers.is_empty() {
            after.clone()
        } else {
            self.merge(&starts)
        };
        let mut ends = Vec::new();
        for h in handlers {
            self.env = start.clone();
            self.line = h.span.start_line;
            if let Some(t) = &h.typ {
                self.expr(t);
            }
            if let Some(name) = &h.name {
                let refs = self.opaque("caught exception");
                self.assign_name(name, refs);
            }
            self.block(&h.body);
            ends.push(self.env.clone());
        }
        self.env = after;
        self.block(orelse);
        ends.push(self.env.clone());
        self.env = self.merge(&ends);
        self.block(finalbody);
    }

    fn assign(&mut self, targets: &[Expr], value: &Expr) {
        if let [target] = targets {
            if let (ExprKind::Tuple(ts) | ExprKind::List(ts), ExprKind::Tuple(vs) | ExprKind::List(vs)) =
                (&target.kind, &value.kind)
            {
                let starred = |xs: &[Expr]| xs.iter().any(|x| matches!(x.kind, ExprKind::Starred(_)));
                if ts.len() == vs.len() && !starred(ts) && !starred(vs) {
                    let values: Vec<Vec<Ref>> = vs.iter().map(|v| self.expr(v)).collect();
                    for (t, refs) in ts.iter().zip(values) {
                        self.store(t, refs);
                    }
                    return;
                }
            }
        }
        let refs = self.expr(value);
        let refs = self.ensure(refs);
        for t in targets {
            self.store(t, refs.clone());
        }
    }

    /// Evaluates the non-literal indexes of an access chain for their side
    /// effects.
    fn eval_indexes(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Attribute { value, .. } => self.eval_indexes(value),
            ExprKind::Subscript { value, index } => {
                self.eval_indexes(value);
                self.eval_index(index);
            }
            _ => {}
        }
    }

    fn eval_index(&mut self, index: &Expr) {
        match &index.kind {
            ExprKind::Const(_) => {}
            ExprKind::Slice { lower, upper, step } => {
                for p in [lower, upper, step].into_iter().flatten() {
                    self.expr(p);
                }
            }
            _ => {
                self.expr(index);
            }
        }
    }

    fn store(&mut self, target: &Expr, refs: Vec<Ref>) {
        match &target.kind {
            ExprKind::Name(n) => {
                self.assign_name(n, refs);
            }
            ExprKind::Tuple(elts) | ExprKind::List(elts) => {
                for t in elts {
                    self.store(t, derived(refs.clone()));
                }
            }
            ExprKind::Starred(inner) => self.store(inner, refs),
            ExprKind::Attribute { .. } | ExprKind::Subscript { .. } => {
                self.eval_indexes(target);
                match chain_root(target) {
                    Some((root, step)) if !self.imports.contains_key(root) => {
                        let root = root.to_string();
                        let put = match step {
                            Some(Step::Select(f)) => Step::Put(f),
                            _ => Step::Reset,
                        };
                        let mut inputs = with_step(refs, put);
                        inputs.extend(derived(self.lookup(&root)));
                        self.assign_name(&root, inputs);
                    }
                    _ => {
                        self.diags.push(
                            Diagnostic::new(
                                DiagnosticKind::Opaque,
                                format!("store through {} is not tracked", unparse(target)),
                            )
                            .at(self.path.clone(), self.line),
                        );
                    }
                }
            }
            _ => {
                self.opaque("assignment target");
            }
        }
    }

    // ---- expressions ----

    fn expr(&mut self, e: &Expr) -> Vec<Ref> {
        match &e.kind {
            ExprKind::Name(n) => self.lookup(n),
            ExprKind::Const(c) => {
                let literal = match c {
                    Constant::Str(s) => Some(s.clone()),
                    _ => None,
                };
                vec![self.constant(literal, &unparse(e))]
            }
            ExprKind::FString(parts) => {
                let mut out = Vec::new();
                for p in parts {
                    if let FStringPart::Field { expr, .. } = p {
                        out.extend(self.expr(expr));
                    }
                }
                with_step(out, Step::Reset)
            }
            ExprKind::Attribute { value, attr } => {
                if self.is_module_ref(value) {
                    return Vec::new();
                }
                let base = self.expr(value);
                with_step(base, Step::Select(attr.clone()))
            }
            ExprKind::Subscript { value, index } => {
                let base = self.expr(value);
                self.eval_index(index);
                match index_step(index) {
                    Some(step) => with_step(base, step),
                    None => derived(base),
                }
            }
            ExprKind::Slice { lower, upper, step } => {
                let mut out = Vec::new();
                for p in [lower, upper, step].into_iter().flatten() {
                    out.extend(self.expr(p));
                }
                derived(out)
            }
            ExprKind::Call { func, args } => self.call(e, func, args, false),
            ExprKind::BinOp { left, right, .. } => {
                let mut out = self.expr(left);
                out.extend(self.expr(right));
                derived(out)
            }
            ExprKind::UnaryOp { operand, .. } => derived(self.expr(operand)),
            ExprKind::BoolOp { values, .. } => {
                let mut out = Vec::new();
                for v in values {
                    out.extend(self.expr(v));
                }
                derived(out)
            }
            ExprKind::Compare { left, comparators, .. } => {
                let mut out = self.expr(left);
                for c in comparators {
                    out.extend(self.expr(c));
                }
                with_step(out, Step::Reset)
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.expr(test);
                let mut out = self.expr(body);
                out.extend(self.expr(orelse));
                out
            }
            ExprKind::List(elts) | ExprKind::Tuple(elts) | ExprKind::Set(elts) => {
                let mut out = Vec::new();
                for x in elts {
                    out.extend(self.expr(x));
                }
                derived(out)
            }
            ExprKind::Dict(entries) => {
                let mut out = Vec::new();
                for (k, v) in entries {
                    match k {
                        None => out.extend(derived(self.expr(v))),
                        Some(key) => {
                            let put = match key.as_str_literal() {
                                Some(lit) => Step::Put(lit.to_string()),
                                None => {
                                    out.extend(with_step(self.expr(key), Step::Reset));
                                    Step::Reset
                                }
                            };
                            let vals = self.expr(v);
                            out.extend(with_step(vals, put));
                        }
                    }
                }
                out
            }
            ExprKind::Comp {
                elt, value, generators, ..
            } => self.comprehension(elt, value.as_deref(), generators),
            ExprKind::Lambda { .. } => self.opaque("lambda"),
            ExprKind::Starred(inner) => derived(self.expr(inner)),
            ExprKind::Await(inner) => self.expr(inner),
            ExprKind::Yield(v) => {
                if let Some(v) = v {
                    let refs = self.expr(v);
                    self.return_node(v, refs);
                }
                vec![self.constant(None, "<sent>")]
            }
            ExprKind::NamedExpr { target, value } => {
                let refs = self.expr(value);
                let id = self.assign_name(target, refs);
                vec![Ref::var(id, target)]
            }
        }
    }

    fn comprehension(&mut self, elt: &Expr, value: Option<&Expr>, generators: &[Comprehension]) -> Vec<Ref> {
        self.comp.push(BTreeMap::new());
        for g in generators {
            let items = derived(self.expr(&g.iter));
            let mut names = Vec::new();
            target_names(&g.target, &mut names);
            let scope = self.comp.last_mut().expect("comprehension scope");
            for n in names {
                scope.insert(n, items.clone());
            }
            for cond in &g.ifs {
                self.expr(cond);
            }
        }
        let out = match value {
            None => derived(self.expr(elt)),
            Some(v) => {
                let mut out = with_step(self.expr(elt), Step::Reset);
                out.extend(with_step(self.expr(v), Step::Reset));
                out
            }
        };
        self.comp.pop();
        out
    }

    fn is_module_ref(&self, e: &Expr) -> bool {
        match &e.kind {
            ExprKind::Name(n) => !self.is_local(n) && self.imports.get(n.as_str()).copied().unwrap_or(false),
            ExprKind::Attribute { value, .. } => self.is_module_ref(value),
            _ => false,
        }
    }

    fn call(&mut self, e: &Expr, func: &Expr, args: &[Arg], discard: bool) -> Vec<Ref> {
        let dotted = func.dotted_name();
        if let Some(method) = dotted.as_deref().and_then(|d| self.opts.logger.method_of(d)) {
            let method = method.to_string();
            self.log_call(e, &method, dotted.as_deref().unwrap_or_default(), args);
            return Vec::new();
        }
        let receiver = match &func.kind {
            ExprKind::Attribute { value, attr } if !self.is_module_ref(value) => Some((&**value, attr.as_str())),
            _ => None,
        };
        if let Some((recv, attr)) = receiver {
            if let Some(out) = self.modeled_method(recv, attr, args) {
                return out;
            }
        }
        let callee = dotted.clone().unwrap_or_else(|| unparse(func));
        let call_args: Vec<CallArg> = args.iter().map(call_arg).collect();
        let call = CallInfo {
            callee: callee.clone(),
            args: call_args,
            receiver: receiver.map(|(r, _)| unparse(r)),
        };
        let recv_refs = receiver.map(|(r, _)| self.expr(r));
        let func_refs = match &func.kind {
            ExprKind::Name(n) if self.is_local(n) || self.comp.iter().any(|s| s.contains_key(n)) => self.lookup(n),
            ExprKind::Name(_) | ExprKind::Attribute { .. } => Vec::new(),
            _ => self.expr(func),
        };
        let arg_refs: Vec<Vec<Ref>> = args.iter().map(|a| self.expr(&a.value)).collect();
        let kind = if self.opts.is_reader(&callee) {
            let source_key = key_arg_of(&call).and_then(|i| args[i].value.as_str_literal().map(String::from));
            NodeKind::SourceRead { call, source_key }
        } else {
            NodeKind::CallSite(call)
        };
        let is_reader = matches!(kind, NodeKind::SourceRead { .. });
        let id = self.add_node(kind, &callee);
        if let Some(r) = recv_refs {
            self.add_edges(r, id, None);
        }
        self.add_edges(func_refs, id, None);
        for (i, refs) in arg_refs.into_iter().enumerate() {
            let refs = self.ensure(refs);
            self.add_edges(refs, id, Some(i as u32));
        }
        if is_reader {
            return vec![Ref::node(id)];
        }
        // Receiver mutation by a method we cannot see.
        if let Some((recv, _)) = receiver {
            if discard {
                if let Some((root, step)) = chain_root(recv) {
                    if self.is_local(root) {
                        let root = root.to_string();
                        let mut inputs = derived(self.lookup(&root));
                        let mut out = Ref {
                            port: Port::Receiver,
                            copy: false,
                            ..Ref::node(id)
                        };
                        if let Some(s) = step {
                            out.effect.push(match s {
                                Step::Select(f) => Step::Put(f),
                                other => other,
                            });
                        }
                        inputs.push(out);
                        self.assign_name(&root, inputs);
                    }
                }
            }
        }
        // Arguments a project callee may mutate.
        if self.may_be_project_callee(func) {
            for (i, a) in args.iter().enumerate() {
                if matches!(a.kind, ArgKind::Star | ArgKind::DoubleStar) {
                    continue;
                }
                if let ExprKind::Name(n) = &a.value.kind {
                    if self.is_local(n) {
                        let mut inputs = derived(self.lookup(n));
                        inputs.push(Ref {
                            port: Port::ArgOut { arg: i as u32 },
                            copy: false,
                            ..Ref::node(id)
                        });
                        self.assign_name(n, inputs);
                    }
                }
            }
        }
        vec![Ref::node(id)]
    }

    /// Calls that can only reach builtins or external modules never mutate
    /// project values through arguments in the modeled subset.
    fn may_be_project_callee(&self, func: &Expr) -> bool {
        match &func.kind {
            ExprKind::Name(n) => {
                if self.is_local(n) {
                    return false;
                }
                if let Some(&is_module) = self.imports.get(n.as_str()) {
                    return !is_module;
                }
                !builtins::is_builtin_function(n)
            }
            ExprKind::Attribute { .. } => true,
            _ => false,
        }
    }

    /// Builtin container methods whose flow is summarized without a call
    /// node: `.get` with a literal key and in-place mutators.
    fn modeled_method(&mut self, recv: &Expr, attr: &str, args: &[Arg]) -> Option<Vec<Ref>> {
        let positional: Vec<&Expr> = args
            .iter()
            .filter(|a| a.kind == ArgKind::Positional)
            .map(|a| &a.value)
            .collect();
        if positional.len() != args.len() {
            return None;
        }
        if attr == "get" && (1..=2).contains(&positional.len()) {
            let key = positional[0].as_str_literal()?;
            let base = self.expr(recv);
            let mut out = with_step(base, Step::Select(key.to_string()));
            if let Some(d) = positional.get(1) {
                out.extend(derived(self.expr(d)));
            }
            return Some(out);
        }
        if !MUTATOR_METHODS.contains(&attr) {
            return None;
        }
        let (root, step) = chain_root(recv)?;
        if !self.is_local(root) {
            return None;
        }
        let root = root.to_string();
        let (value_args, key): (Vec<&Expr>, Option<&Expr>) = match (attr, positional.as_slice()) {
            ("append" | "add" | "extend" | "update", [x]) => (vec![*x], None),
            ("insert", [_, x]) => (vec![*x], None),
            ("setdefault", [k, x]) => (vec![*x], Some(*k)),
            _ => return None,
        };
        let mut inputs = Vec::new();
        let mut result = Vec::new();
        for x in value_args {
            let refs = self.expr(x);
            let put = match (&step, key) {
                (Some(Step::Select(f)), _) => Some(Step::Put(f.clone())),
                (Some(other), _) => Some(other.clone()),
                (None, Some(k)) => Some(match k.as_str_literal() {
                    Some(lit) => Step::Put(lit.to_string()),
                    None => Step::Reset,
                }),
                (None, None) => None,
            };
            if key.is_some() {
                result.extend(derived(refs.clone()));
            }
            inputs.extend(match put {
                Some(s) => with_step(refs, s),
                None => derived(refs),
            });
        }
        if let Some(k) = key {
            if k.as_str_literal().is_none() {
                self.expr(k);
            }
        }
        let old = derived(self.lookup(&root));
        if key.is_some() {
            result.extend(with_step(old.clone(), Step::Reset));
        }
        inputs.extend(old);
        self.assign_name(&root, inputs);
        Some(result)
    }

    // ---- log statements ----

    fn log_call(&mut self, e: &Expr, method: &str, callee: &str, args: &[Arg]) {
        let values: Vec<&Arg> = args.iter().filter(|a| !matches!(a.kind, ArgKind::Keyword(_))).collect();
        let msg = values.first().map(|a| &a.value);
        let rest: Vec<&Arg> = values.iter().skip(1).copied().collect();
        let plan = plan_template(msg, &rest);
        let opaque_before = self.count_opaque();
        let (mut template, slot_refs): (TemplateSource, Vec<Vec<Ref>>) = match plan {
            Plan::Template { template, slots } => {
                let refs = slots
                    .into_iter()
                    .map(|exprs| {
                        let mut out = Vec::new();
                        for x in exprs {
                            out.extend(self.expr(x));
                        }
                        out
                    })
                    .collect();
                (template, refs)
            }
            Plan::Whole(exprs, reason) => {
                if let Some(reason) = reason {
                    self.diags.push(
                        Diagnostic::new(DiagnosticKind::Template, reason).at(self.path.clone(), e.span.start_line),
                    );
                }
                let mut out = Vec::new();
                for x in exprs {
                    out.extend(self.expr(x));
                }
                (TemplateSource::Whole, vec![out])
            }
        };
        if template == TemplateSource::Whole && self.count_opaque() > opaque_before {
            template = TemplateSource::Opaque;
        }
        let info = LogInfo {
            method: method.to_string(),
            call: CallInfo {
                callee: callee.to_string(),
                args: args.iter().map(call_arg).collect(),
                receiver: None,
            },
            template,
            slot_count: slot_refs.len() as u32,
            end_line: e.span.end_line,
        };
        self.line = e.span.start_line;
        let id = self.add_node(NodeKind::LogStatement(info), callee);
        for (i, refs) in slot_refs.into_iter().enumerate() {
            let refs = self.ensure(refs);
            self.add_edges(refs, id, Some(i as u32));
        }
    }

    fn count_opaque(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Opaque { .. }))
            .count()
    }
}

/// Root name of an access chain and the first non-transparent field
/// operation on the way out from it.
fn chain_root(e: &Expr) -> Option<(&str, Option<Step>)> {
    match &e.kind {
        ExprKind::Name(n) => Some((n, None)),
        ExprKind::Attribute { value, attr } => {
            let (root, step) = chain_root(value)?;
            Some((root, step.or(Some(Step::Select(attr.clone())))))
        }
        ExprKind::Subscript { value, index } => {
            let (root, step) = chain_root(value)?;
            Some((root, step.or(index_step(index))))
        }
        _ => None,
    }
}

/// Field operation implied by a subscript index; `None` for transparent
/// (integer or slice) indexing.
fn index_step(index: &Expr) -> Option<Step> {
    match &index.kind {
        ExprKind::Const(Constant::Str(k)) => Some(Step::Select(k.clone())),
        ExprKind::Const(Constant::Int(_)) | ExprKind::Slice { .. } => None,
        _ => Some(Step::Reset),
    }
}

fn target_names(t: &Expr, out: &mut Vec<String>) {
    match &t.kind {
        ExprKind::Name(n) => out.push(n.clone()),
        ExprKind::Tuple(xs) | ExprKind::List(xs) => xs.iter().for_each(|x| target_names(x, out)),
        ExprKind::Starred(x) => target_names(x, out),
        _ => {}
    }
}

fn call_arg(a: &Arg) -> CallArg {
    CallArg {
        keyword: match &a.kind {
            ArgKind::Keyword(k) => Some(k.clone()),
            _ => None,
        },
        spread: matches!(a.kind, ArgKind::Star | ArgKind::DoubleStar),
        text: unparse(&a.value),
    }
}

/// Index of the argument naming the data source of a reader call: the first
/// positional argument, else the first argument.
pub fn key_arg_of(call: &CallInfo) -> Option<usize> {
    call.args
        .iter()
        .position(|a| a.keyword.is_none() && !a.spread)
        .or(if call.args.is_empty() { None } else { Some(0) })
}

fn whole<'e>(msg: &'e Expr, rest: &[&'e Arg], reason: Option<String>) -> Plan<'e> {
    let mut exprs = vec![msg];
    exprs.extend(rest.iter().map(|a| &a.value));
    Plan::Whole(exprs, reason)
}

/// Maps the message argument of a logger call (plus any extra positional
/// arguments) onto template slots.
fn plan_template<'e>(msg: Option<&'e Expr>, rest: &[&'e Arg]) -> Plan<'e> {
    let Some(msg) = msg else {
        return Plan::Template {
            template: TemplateSource::Literal { text: String::new() },
            slots: Vec::new(),
        };
    };
    if rest.iter().any(|a| a.kind != ArgKind::Positional) {
        return whole(msg, rest, Some("spread arguments to a logger call".into()));
    }
    let rest_exprs: Vec<&Expr> = rest.iter().map(|a| &a.value).collect();
    match &msg.kind {
        ExprKind::Const(Constant::Str(s)) => {
            if rest.is_empty() {
                return Plan::Template {
                    template: TemplateSource::Literal { text: s.clone() },
                    slots: Vec::new(),
                };
            }
            printf_plan(msg, s, rest_exprs, rest)
        }
        ExprKind::BinOp {
            op: BinOp::Mod,
            left,
            right,
        } if rest.is_empty() => match left.as_str_literal() {
            Some(s) => {
                let values: Vec<&Expr> = match &right.kind {
                    ExprKind::Tuple(xs) => xs.iter().collect(),
                    _ => vec![&**right],
                };
                if values.iter().any(|x| matches!(x.kind, ExprKind::Starred(_))) {
                    return whole(msg, rest, Some("starred printf arguments".into()));
                }
                let n_specs = printf_specs(s);
                if !matches!(right.kind, ExprKind::Tuple(_)) && n_specs != Some(1) {
                    return whole(msg, rest, None);
                }
                printf_plan(msg, s, values, rest)
            }
            None => whole(msg, rest, None),
        },
        ExprKind::Call { func, args } if rest.is_empty() => match &func.kind {
            ExprKind::Attribute { value, attr } if attr == "format" => match value.as_str_literal() {
                Some(s) => brace_plan(msg, s, args),
                None => whole(msg, rest, None),
            },
            _ => whole(msg, rest, None),
        },
        ExprKind::FString(parts) if rest.is_empty() => {
            let mut pieces = Vec::new();
            let mut slots = Vec::new();
            fstring_pieces(parts, &mut pieces, &mut slots);
            pieces_plan(pieces, slots)
        }
        ExprKind::BinOp { op: BinOp::Add, .. } if rest.is_empty() => {
            let mut operands = Vec::new();
            flatten_add(msg, &mut operands);
            let has_text = operands
                .iter()
                .any(|x| matches!(x.kind, ExprKind::Const(Constant::Str(_)) | ExprKind::FString(_)));
            if !has_text {
                return whole(msg, rest, None);
            }
            let mut pieces = Vec::new();
            let mut slots = Vec::new();
            for x in operands {
                match &x.kind {
                    ExprKind::Const(Constant::Str(s)) => pieces.push(TemplatePiece::Text { text: s.clone() }),
                    ExprKind::FString(parts) => fstring_pieces(parts, &mut pieces, &mut slots),
                    _ => {
                        pieces.push(TemplatePiece::Slot { kind: SlotKind::Text });
                        slots.push(vec![x]);
                    }
                }
            }
            pieces_plan(pieces, slots)
        }
        _ => whole(msg, rest, None),
    }
}

fn printf_specs(fmt: &str) -> Option<usize> {
    let pieces = parse_printf(fmt).ok()?;
    let specs: Vec<_> = pieces
        .iter()
        .filter_map(|p| match p {
            PrintfPiece::Spec(s) => Some(s),
            PrintfPiece::Literal(_) => None,
        })
        .collect();
    if specs.iter().any(|s| s.mapping_key.is_some() || s.star_args > 0) {
        return None;
    }
    Some(specs.len())
}

fn printf_plan<'e>(msg: &'e Expr, fmt: &str, values: Vec<&'e Expr>, rest: &[&'e Arg]) -> Plan<'e> {
    match printf_specs(fmt) {
        Some(n) if n == values.len() => Plan::Template {
            template: TemplateSource::Printf {
                format: fmt.to_string(),
            },
            slots: values.into_iter().map(|v| vec![v]).collect(),
        },
        Some(n) => whole(
            msg,
            rest,
            Some(format!(
                "format has {n} conversions but {} arguments are supplied",
                values.len()
            )),
        ),
        None => whole(msg, rest, Some(format!("unsupported printf format {fmt:?}"))),
    }
}

fn brace_plan<'e>(msg: &'e Expr, fmt: &str, args: &'e [Arg]) -> Plan<'e> {
    if args
        .iter()
        .any(|a| matches!(a.kind, ArgKind::Star | ArgKind::DoubleStar))
    {
        return whole(msg, &[], Some("spread arguments to str.format".into()));
    }
    let pieces = match parse_brace(fmt) {
        Ok(p) => p,
        Err(e) => return whole(msg, &[], Some(format!("unsupported format {fmt:?}: {e}"))),
    };
    let positional: Vec<&Expr> = args
        .iter()
        .filter(|a| a.kind == ArgKind::Positional)
        .map(|a| &a.value)
        .collect();
    let mut slots = Vec::new();
    for p in &pieces {
        if let BracePiece::Field(f) = p {
            let arg = match &f.arg {
                FieldRef::Index(i) => positional.get(*i).copied(),
                FieldRef::Name(n) => args
                    .iter()
                    .find(|a| matches!(&a.kind, ArgKind::Keyword(k) if k == n))
                    .map(|a| &a.value),
            };
            match arg {
                Some(x) => slots.push(vec![x]),
                None => {
                    return whole(
                        msg,
                        &[],
                        Some(format!("format field {:?} has no matching argument", f.arg)),
                    )
                }
            }
        }
    }
    Plan::Template {
        template: TemplateSource::Brace {
            format: fmt.to_string(),
        },
        slots,
    }
}

fn fstring_pieces<'e>(parts: &'e [FStringPart], pieces: &mut Vec<TemplatePiece>, slots: &mut Vec<Vec<&'e Expr>>) {
    for p in parts {
        match p {
            FStringPart::Literal(s) => pieces.push(TemplatePiece::Text { text: s.clone() }),
            FStringPart::Field {
                expr, conversion, spec, ..
            } => {
                pieces.push(TemplatePiece::Slot {
                    kind: spec_kind(spec.as_deref(), *conversion),
                });
                slots.push(vec![&**expr]);
            }
        }
    }
}

fn pieces_plan<'e>(pieces: Vec<TemplatePiece>, slots: Vec<Vec<&'e Expr>>) -> Plan<'e> {
    let mut merged: Vec<TemplatePiece> = Vec::new();
    for p in pieces {
        match (merged.last_mut(), p) {
            (Some(TemplatePiece::Text { text }), TemplatePiece::Text { text: t }) => text.push_str(&t),
            (_, p) => merged.push(p),
        }
    }
    if slots.is_empty() {
        let text = merged
            .into_iter()
            .map(|p| match p {
                TemplatePiece::Text { text } => text,
                TemplatePiece::Slot { .. } => String::new(),
            })
            .collect();
        return Plan::Template {
            template: TemplateSource::Literal { text },
            slots,
        };
    }
    Plan::Template {
        template: TemplateSource::Pieces { pieces: merged },
        slots,
    }
}

fn flatten_add<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match &e.kind {
        ExprKind::BinOp {
            op: BinOp::Add,
            left,
            right,
        } => {
            flatten_add(left, out);
            flatten_add(right, out);
        }
        _ => out.push(e),
    }
}
