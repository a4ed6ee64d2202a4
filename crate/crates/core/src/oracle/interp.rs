//! Tree-walking interpreter for the analyzed subset. Values read from
//! annotated sources carry `(source, attribute)` labels, labels follow
//! explicit data flow, and every logger call records which labels reach
//! each template slot.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use super::pyfmt::{
    convert, format_spec, parse_brace_format, percent_format, printf_arity, Accessor, BracePart, FieldArg,
};
use super::value::{repr, to_str, Body, Class, Closure, Dict, Instance, Key, LabelId, Labels, ModuleObj, Scope, TV, V};
use crate::annotations::{Annotations, DataSourceSpec};
use crate::dfg::BuildOptions;
use crate::frontend::{normalize_path, LoggerApi, ModuleIndex, SourceFile};
use crate::syntax::ast::*;
use crate::syntax::{LanguageAdapter, PythonSubset};

pub const DEFAULT_MAX_STEPS: u64 = 5_000_000;
const MAX_DEPTH: usize = 150;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: outside the supported subset: {message}")]
    Subset { path: String, line: u32, message: String },
    #[error("{path}:{line}: uncaught {message}")]
    Uncaught { path: String, line: u32, message: String },
    #[error("step limit exceeded")]
    StepLimit,
    #[error("no data for source key {0:?}")]
    Data(String),
    #[error("entry module {0} is not part of the program")]
    MissingEntry(String),
}

/// One logger call observed at run time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub level: String,
    pub path: String,
    pub line: u32,
    pub message: String,
    /// `(source, attribute)` labels reaching each slot.
    pub slots: Vec<BTreeSet<(String, String)>>,
}

impl Emission {
    /// The record in the default augmented format.
    pub fn render(&self) -> String {
        format!("{}|{}:{}|{}", self.level, self.path, self.line, self.message)
    }
}

/// What the interpreter needs to run a program.
pub struct Program<'a> {
    pub files: &'a [SourceFile],
    pub annotations: &'a Annotations,
    pub logger: LoggerApi,
    /// Contents of data files by source key.
    pub data: &'a BTreeMap<String, String>,
    /// Path of the module run as `__main__`.
    pub entry: &'a str,
    pub max_steps: u64,
}

pub fn run_program(p: &Program<'_>) -> Result<Vec<Emission>, OracleError> {
    let mut it = Interp::new(p);
    if !it.sources.contains_key(p.entry) {
        return Err(OracleError::MissingEntry(p.entry.to_string()));
    }
    match it.load_module(p.entry, Some("__main__")) {
        Ok(_) => Ok(it.emissions),
        Err(Exc::Fatal(e)) => Err(e),
        Err(Exc::Raise(v)) => Err(OracleError::Uncaught {
            path: it.at.0.clone(),
            line: it.at.1,
            message: exc_text(&v),
        }),
    }
}

fn exc_text(v: &TV) -> String {
    match &v.v {
        V::Instance(o) => format!("{}: {}", o.class.name, to_str(v)),
        _ => to_str(v),
    }
}

enum Exc {
    Raise(TV),
    Fatal(OracleError),
}

type R<T> = Result<T, Exc>;
/// Positional and keyword call arguments.
type Args = (Vec<TV>, Vec<(String, TV)>);

enum Flow {
    Normal,
    Return(TV),
    Break,
    Continue,
}

#[derive(Clone)]
struct Frame {
    module: Rc<ModuleObj>,
    scope: Option<Rc<Scope>>,
}

const BUILTIN_FUNCTIONS: &[&str] = &[
    "abs",
    "all",
    "any",
    "bool",
    "dict",
    "enumerate",
    "filter",
    "float",
    "format",
    "getattr",
    "hasattr",
    "int",
    "isinstance",
    "len",
    "list",
    "map",
    "max",
    "min",
    "print",
    "range",
    "repr",
    "reversed",
    "round",
    "set",
    "sorted",
    "str",
    "sum",
    "tuple",
    "zip",
];

const EXCEPTIONS: &[(&str, &str)] = &[
    ("Exception", "BaseException"),
    ("ArithmeticError", "Exception"),
    ("AssertionError", "Exception"),
    ("AttributeError", "Exception"),
    ("LookupError", "Exception"),
    ("NameError", "Exception"),
    ("RuntimeError", "Exception"),
    ("TypeError", "Exception"),
    ("ValueError", "Exception"),
    ("IndexError", "LookupError"),
    ("KeyError", "LookupError"),
    ("ZeroDivisionError", "ArithmeticError"),
];

struct Interp<'a> {
    sources: BTreeMap<String, &'a str>,
    index: ModuleIndex,
    annotations: &'a Annotations,
    opts: BuildOptions,
    data: &'a BTreeMap<String, String>,
    modules: BTreeMap<String, Rc<ModuleObj>>,
    classes: BTreeMap<&'static str, Rc<Class>>,
    labels: Vec<(String, String)>,
    label_ids: HashMap<(String, String), LabelId>,
    emissions: Vec<Emission>,
    steps: u64,
    max_steps: u64,
    depth: usize,
    at: (String, u32),
}

impl<'a> Interp<'a> {
    fn new(p: &Program<'a>) -> Self {
        let mut classes: BTreeMap<&'static str, Rc<Class>> = BTreeMap::new();
        classes.insert(
            "BaseException",
            Rc::new(Class {
                name: "BaseException".into(),
                base: None,
                attrs: RefCell::default(),
            }),
        );
        for (name, base) in EXCEPTIONS {
            let base = classes[base].clone();
            classes.insert(
                name,
                Rc::new(Class {
                    name: name.to_string(),
                    base: Some(base),
                    attrs: RefCell::default(),
                }),
            );
        }
        Self {
            sources: p.files.iter().map(|f| (f.path.clone(), f.content.as_str())).collect(),
            index: ModuleIndex::from_files(p.files),
            annotations: p.annotations,
            opts: BuildOptions {
                logger: p.logger.clone(),
                readers: p.annotations.readers.clone(),
            },
            data: p.data,
            modules: BTreeMap::new(),
            classes,
            labels: Vec::new(),
            label_ids: HashMap::new(),
            emissions: Vec::new(),
            steps: 0,
            max_steps: p.max_steps,
            depth: 0,
            at: (p.entry.to_string(), 0),
        }
    }

    // ---- errors ----

    fn subset<T>(&self, message: impl Into<String>) -> R<T> {
        Err(Exc::Fatal(OracleError::Subset {
            path: self.at.0.clone(),
            line: self.at.1,
            message: message.into(),
        }))
    }

    fn raise<T>(&self, kind: &str, message: impl Into<String>) -> R<T> {
        let class = self.classes.get(kind).cloned().expect("builtin exception");
        let inst = Instance {
            class,
            attrs: RefCell::new(BTreeMap::from([(
                "args".to_string(),
                TV::tuple(vec![TV::str(&message.into())]),
            )])),
        };
        Err(Exc::Raise(TV::new(V::Instance(Rc::new(inst)))))
    }

    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(Exc::Fatal(OracleError::StepLimit));
        }
        Ok(())
    }

    fn label(&mut self, src: &str, attr: &str) -> LabelId {
        let key = (src.to_string(), attr.to_string());
        if let Some(&id) = self.label_ids.get(&key) {
            return id;
        }
        let id = self.labels.len() as LabelId;
        self.labels.push(key.clone());
        self.label_ids.insert(key, id);
        id
    }

    // ---- modules ----

    fn load_module(&mut self, path: &str, name: Option<&str>) -> R<Rc<ModuleObj>> {
        if name.is_none() {
            if let Some(m) = self.modules.get(path) {
                return Ok(m.clone());
            }
        }
        let Some(src) = self.sources.get(path).copied() else {
            return self.subset(format!("no module at {path}"));
        };
        let module = PythonSubset.parse_module(path, src).map_err(|e| {
            Exc::Fatal(OracleError::Parse {
                path: path.to_string(),
                message: e.to_string(),
            })
        })?;
        let obj = Rc::new(ModuleObj {
            path: path.to_string(),
            name: name.map_or_else(|| ModuleIndex::module_name(path), str::to_string),
            globals: RefCell::default(),
        });
        obj.globals.borrow_mut().insert("__name__".into(), TV::str(&obj.name));
        if name.is_none() {
            self.modules.insert(path.to_string(), obj.clone());
        }
        let saved = self.at.clone();
        self.at = (path.to_string(), 1);
        let frame = Frame {
            module: obj.clone(),
            scope: None,
        };
        self.exec_block(&module.body, &frame)?;
        self.at = saved;
        Ok(obj)
    }

    // ---- names ----

    fn lookup(&self, name: &str, f: &Frame) -> R<TV> {
        let mut scope = f.scope.clone();
        let global = f.scope.as_ref().is_some_and(|s| s.globals.borrow().contains(name));
        while let (false, Some(s)) = (global, scope) {
            if let Some(v) = s.vars.borrow().get(name) {
                return Ok(v.clone());
            }
            scope = s.parent.clone();
        }
        if let Some(v) = f.module.globals.borrow().get(name) {
            return Ok(v.clone());
        }
        if let Some(c) = self.classes.get(name) {
            return Ok(TV::new(V::Class(c.clone())));
        }
        if BUILTIN_FUNCTIONS.contains(&name) {
            return Ok(TV::new(V::Builtin(name.into())));
        }
        match name {
            "True" => Ok(TV::new(V::Bool(true))),
            "False" => Ok(TV::new(V::Bool(false))),
            "None" => Ok(TV::none()),
            _ => self.raise("NameError", format!("name '{name}' is not defined")),
        }
    }

    fn assign_name(&self, name: &str, v: TV, f: &Frame) {
        let Some(scope) = &f.scope else {
            f.module.globals.borrow_mut().insert(name.to_string(), v);
            return;
        };
        if scope.globals.borrow().contains(name) {
            f.module.globals.borrow_mut().insert(name.to_string(), v);
            return;
        }
        if scope.nonlocals.borrow().contains(name) {
            let mut s = scope.parent.clone();
            while let Some(p) = s {
                if p.vars.borrow().contains_key(name) {
                    p.vars.borrow_mut().insert(name.to_string(), v);
                    return;
                }
                s = p.parent.clone();
            }
        }
        scope.vars.borrow_mut().insert(name.to_string(), v);
    }

    fn assign(&mut self, target: &Expr, v: TV, f: &Frame) -> R<()> {
        match &target.kind {
            ExprKind::Name(n) => {
                self.assign_name(n, v, f);
                Ok(())
            }
            ExprKind::Tuple(elts) | ExprKind::List(elts) => {
                let items = self.iterate(&v)?;
                let star = elts.iter().position(|e| matches!(e.kind, ExprKind::Starred(_)));
                match star {
                    None => {
                        if items.len() != elts.len() {
                            return self.raise(
                                "ValueError",
                                format!("expected {} values to unpack, got {}", elts.len(), items.len()),
                            );
                        }
                        for (t, x) in elts.iter().zip(items) {
                            self.assign(t, x, f)?;
                        }
                    }
                    Some(k) => {
                        let after = elts.len() - k - 1;
                        if items.len() < k + after {
                            return self.raise("ValueError", "not enough values to unpack");
                        }
                        let mid = items[k..items.len() - after].to_vec();
                        for (t, x) in elts[..k].iter().zip(&items[..k]) {
                            self.assign(t, x.clone(), f)?;
                        }
                        if let ExprKind::Starred(inner) = &elts[k].kind {
                            self.assign(inner, TV::list(mid), f)?;
                        }
                        for (t, x) in elts[k + 1..].iter().zip(&items[items.len() - after..]) {
                            self.assign(t, x.clone(), f)?;
                        }
                    }
                }
                Ok(())
            }
            ExprKind::Attribute { value, attr } => {
                let obj = self.eval(value, f)?;
                match &obj.v {
                    V::Instance(o) => {
                        o.attrs.borrow_mut().insert(attr.clone(), v);
                    }
                    V::Class(c) => {
                        c.attrs.borrow_mut().insert(attr.clone(), v);
                    }
                    V::Module(m) => {
                        m.globals.borrow_mut().insert(attr.clone(), v);
                    }
                    _ => return self.subset(format!("attribute assignment on {}", obj.type_name())),
                }
                Ok(())
            }
            ExprKind::Subscript { value, index } => {
                let c = self.eval(value, f)?;
                if matches!(index.kind, ExprKind::Slice { .. }) {
                    return self.subset("slice assignment");
                }
                let i = self.eval(index, f)?;
                self.set_item(&c, &i, v)
            }
            _ => self.subset("unsupported assignment target"),
        }
    }

    fn set_item(&mut self, c: &TV, i: &TV, v: TV) -> R<()> {
        match &c.v {
            V::List(xs) => {
                let n = xs.borrow().len();
                let k = self.index_of(i, n)?;
                xs.borrow_mut()[k] = v;
                Ok(())
            }
            V::Dict(d) => {
                let Some(key) = i.key() else {
                    return self.raise("TypeError", format!("unhashable type: '{}'", i.type_name()));
                };
                d.borrow_mut().insert(key, i.clone(), v);
                Ok(())
            }
            _ => self.raise(
                "TypeError",
                format!("'{}' object does not support item assignment", c.type_name()),
            ),
        }
    }

    fn index_of(&self, i: &TV, n: usize) -> R<usize> {
        let k = match &i.v {
            V::Int(k) => *k,
            V::Bool(b) => i64::from(*b),
            _ => return self.raise("TypeError", "indices must be integers"),
        };
        let k = if k < 0 { k + n as i64 } else { k };
        if k < 0 || k >= n as i64 {
            return self.raise("IndexError", "index out of range");
        }
        Ok(k as usize)
    }

    // ---- statements ----

    fn exec_block(&mut self, stmts: &[Stmt], f: &Frame) -> R<Flow> {
        for s in stmts {
            match self.exec(s, f)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn closure(&mut self, name: &str, params: &[Param], body: Body, f: &Frame) -> R<Rc<Closure>> {
        let mut defaults = Vec::new();
        for p in params {
            defaults.push(match &p.default {
                Some(d) => Some(self.eval(d, f)?),
                None => None,
            });
        }
        Ok(Rc::new(Closure {
            name: name.to_string(),
            params: params.to_vec(),
            defaults,
            body,
            module: f.module.clone(),
            scope: f.scope.clone(),
        }))
    }

    fn exec(&mut self, s: &Stmt, f: &Frame) -> R<Flow> {
        self.tick()?;
        self.at = (f.module.path.clone(), s.span.start_line);
        match &s.kind {
            StmtKind::FunctionDef(def) => {
                if !def.decorators.is_empty() || def.is_async {
                    return self.subset("decorated or async function");
                }
                let c = self.closure(&def.name, &def.params, Body::Def(def.clone()), f)?;
                self.assign_name(&def.name, TV::new(V::Func(c)), f);
            }
            StmtKind::ClassDef(cd) => {
                let mut base = None;
                for b in &cd.bases {
                    if b.as_name() == Some("object") {
                        continue;
                    }
                    match self.eval(b, f)?.v {
                        V::Class(c) if base.is_none() => base = Some(c),
                        _ => return self.subset("unsupported base class"),
                    }
                }
                let class = Rc::new(Class {
                    name: cd.name.clone(),
                    base,
                    attrs: RefCell::default(),
                });
                for st in &cd.body {
                    match &st.kind {
                        StmtKind::FunctionDef(def) => {
                            if !def.decorators.is_empty() {
                                return self.subset("decorated method");
                            }
                            let c = self.closure(&def.name, &def.params, Body::Def(def.clone()), f)?;
                            class.attrs.borrow_mut().insert(def.name.clone(), TV::new(V::Func(c)));
                        }
                        StmtKind::Assign { targets, value } => {
                            let v = self.eval(value, f)?;
                            for t in targets {
                                match t.as_name() {
                                    Some(n) => {
                                        class.attrs.borrow_mut().insert(n.to_string(), v.clone());
                                    }
                                    None => return self.subset("class attribute target"),
                                }
                            }
                        }
                        StmtKind::AnnAssign { target, value, .. } => {
                            if let (Some(n), Some(value)) = (target.as_name(), value) {
                                let v = self.eval(value, f)?;
                                class.attrs.borrow_mut().insert(n.to_string(), v);
                            }
                        }
                        StmtKind::Pass
                        | StmtKind::Expr(Expr {
                            kind: ExprKind::Const(_),
                            ..
                        }) => {}
                        _ => return self.subset("statement in class body"),
                    }
                }
                self.assign_name(&cd.name, TV::new(V::Class(class)), f);
            }
            StmtKind::Import(aliases) => {
                for a in aliases {
                    let v = match self.index.resolve(&a.name, &f.module.path, 0) {
                        Some(p) => {
                            if a.asname.is_none() && a.name.contains('.') {
                                return self.subset("dotted import without alias");
                            }
                            TV::new(V::Module(self.load_module(&p, None)?))
                        }
                        None => {
                            let root = if a.asname.is_some() {
                                a.name.as_str()
                            } else {
                                a.bound_name()
                            };
                            TV::new(V::External(root.into()))
                        }
                    };
                    self.assign_name(a.bound_name(), v, f);
                }
            }
            StmtKind::ImportFrom { module, names, level } => {
                let base = module.as_deref().unwrap_or("");
                let resolved = self.index.resolve(base, &f.module.path, *level);
                for a in names {
                    if a.name == "*" {
                        return self.subset("star import");
                    }
                    let v = match &resolved {
                        Some(p) => {
                            let m = self.load_module(p, None)?;
                            let found = m.globals.borrow().get(&a.name).cloned();
                            match found {
                                Some(v) => v,
                                None => {
                                    let sub = if base.is_empty() {
                                        a.name.clone()
                                    } else {
                                        format!("{base}.{}", a.name)
                                    };
                                    match self.index.resolve(&sub, &f.module.path, *level) {
                                        Some(sp) => TV::new(V::Module(self.load_module(&sp, None)?)),
                                        None => return self.subset(format!("cannot import {} from {base}", a.name)),
                                    }
                                }
                            }
                        }
                        None => TV::new(V::Method(
                            Rc::new(TV::new(V::External(base.into()))),
                            a.name.as_str().into(),
                        )),
                    };
                    self.assign_name(a.bound_name(), v, f);
                }
            }
            StmtKind::Assign { targets, value } => {
                let v = self.eval(value, f)?;
                for t in targets {
                    self.assign(t, v.clone(), f)?;
                }
            }
            StmtKind::AugAssign { target, op, value } => {
                let cur = self.eval(target, f)?;
                let rhs = self.eval(value, f)?;
                if let (BinOp::Add, V::List(xs)) = (op, &cur.v) {
                    let items = self.iterate(&rhs)?;
                    xs.borrow_mut().extend(items);
                } else {
                    let r = self.binop(*op, &cur, &rhs)?;
                    self.assign(target, r, f)?;
                }
            }
            StmtKind::AnnAssign { target, value, .. } => {
                if let Some(value) = value {
                    let v = self.eval(value, f)?;
                    self.assign(target, v, f)?;
                }
            }
            StmtKind::Expr(e) => {
                self.eval(e, f)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, f)?,
                    None => TV::none(),
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::If { test, body, orelse } => {
                let branch = if self.eval(test, f)?.truthy() { body } else { orelse };
                return self.exec_block(branch, f);
            }
            StmtKind::For {
                target,
                iter,
                body,
                orelse,
            } => {
                let it = self.eval(iter, f)?;
                let items = self.iterate(&it)?;
                for x in items {
                    self.tick()?;
                    self.assign(target, x, f)?;
                    match self.exec_block(body, f)? {
                        Flow::Break => return Ok(Flow::Normal),
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Continue | Flow::Normal => {}
                    }
                }
                return self.exec_block(orelse, f);
            }
            StmtKind::While { test, body, orelse } => {
                while self.eval(test, f)?.truthy() {
                    self.tick()?;
                    match self.exec_block(body, f)? {
                        Flow::Break => return Ok(Flow::Normal),
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Continue | Flow::Normal => {}
                    }
                }
                return self.exec_block(orelse, f);
            }
            StmtKind::With { items, body } => {
                for it in items {
                    let v = self.eval(&it.context, f)?;
                    if let Some(t) = &it.target {
                        self.assign(t, v, f)?;
                    }
                }
                return self.exec_block(body, f);
            }
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => {
                let result = match self.exec_block(body, f) {
                    Ok(Flow::Normal) => self.exec_block(orelse, f),
                    Ok(flow) => Ok(flow),
                    Err(Exc::Raise(exc)) => self.handle(exc, handlers, f),
                    Err(fatal) => Err(fatal),
                };
                if !finalbody.is_empty() {
                    match self.exec_block(finalbody, f)? {
                        Flow::Normal => {}
                        flow => return Ok(flow),
                    }
                }
                return result;
            }
            StmtKind::Raise { exc, .. } => {
                let Some(e) = exc else {
                    return self.subset("bare raise");
                };
                let v = self.eval(e, f)?;
                let v = match &v.v {
                    V::Class(_) => self.call(v.clone(), Vec::new(), Vec::new())?,
                    _ => v,
                };
                return Err(Exc::Raise(v));
            }
            StmtKind::Assert { test, msg } => {
                if !self.eval(test, f)?.truthy() {
                    let m = match msg {
                        Some(m) => to_str(&self.eval(m, f)?),
                        None => String::new(),
                    };
                    return self.raise("AssertionError", m);
                }
            }
            StmtKind::Delete(targets) => {
                for t in targets {
                    match &t.kind {
                        ExprKind::Subscript { value, index } => {
                            let c = self.eval(value, f)?;
                            let i = self.eval(index, f)?;
                            match &c.v {
                                V::Dict(d) => {
                                    let key = i.key();
                                    if key.and_then(|k| d.borrow_mut().remove(&k)).is_none() {
                                        return self.raise("KeyError", repr(&i));
                                    }
                                }
                                V::List(xs) => {
                                    let n = xs.borrow().len();
                                    let k = self.index_of(&i, n)?;
                                    xs.borrow_mut().remove(k);
                                }
                                _ => return self.subset("del on this value"),
                            }
                        }
                        ExprKind::Name(n) => {
                            if let Some(s) = &f.scope {
                                s.vars.borrow_mut().remove(n);
                            } else {
                                f.module.globals.borrow_mut().remove(n);
                            }
                        }
                        _ => return self.subset("del target"),
                    }
                }
            }
            StmtKind::Global(names) => {
                if let Some(s) = &f.scope {
                    s.globals.borrow_mut().extend(names.iter().cloned());
                }
            }
            StmtKind::Nonlocal(names) => {
                if let Some(s) = &f.scope {
                    s.nonlocals.borrow_mut().extend(names.iter().cloned());
                }
            }
            StmtKind::Pass => {}
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
        }
        Ok(Flow::Normal)
    }

    fn handle(&mut self, exc: TV, handlers: &[ExceptHandler], f: &Frame) -> R<Flow> {
        let class = match &exc.v {
            V::Instance(o) => Some(o.class.clone()),
            _ => None,
        };
        for h in handlers {
            let matches = match &h.typ {
                None => true,
                Some(t) => {
                    let t = self.eval(t, f)?;
                    let types: Vec<TV> = match &t.v {
                        V::Tuple(xs) => xs.to_vec(),
                        _ => vec![t.clone()],
                    };
                    types.iter().any(|t| match (&t.v, &class) {
                        (V::Class(want), Some(c)) => c.is_a(&want.name),
                        _ => false,
                    })
                }
            };
            if matches {
                if let Some(n) = &h.name {
                    self.assign_name(n, exc.clone(), f);
                }
                return self.exec_block(&h.body, f);
            }
        }
        Err(Exc::Raise(exc))
    }

    // ---- expressions ----

    fn eval(&mut self, e: &Expr, f: &Frame) -> R<TV> {
        match &e.kind {
            ExprKind::Name(n) => self.lookup(n, f),
            ExprKind::Const(c) => Ok(TV::new(match c {
                Constant::None => V::None,
                Constant::Bool(b) => V::Bool(*b),
                Constant::Int(i) => V::Int(*i),
                Constant::Float(x) => V::Float(*x),
                Constant::Str(s) => V::Str(s.as_str().into()),
                Constant::Bytes(_) | Constant::Ellipsis => return self.subset("bytes or ellipsis literal"),
            })),
            ExprKind::FString(parts) => {
                let (text, slots) = self.fstring(parts, f)?;
                let mut l = Labels::none();
                for s in &slots {
                    l.add(s);
                }
                Ok(TV::with(V::Str(text.into()), l))
            }
            ExprKind::Attribute { value, attr } => {
                let obj = self.eval(value, f)?;
                self.getattr(&obj, attr)
            }
            ExprKind::Subscript { value, index } => {
                let c = self.eval(value, f)?;
                if let ExprKind::Slice { lower, upper, step } = &index.kind {
                    let mut b = [None, None, None];
                    for (slot, x) in b.iter_mut().zip([lower, upper, step]) {
                        if let Some(x) = x {
                            *slot = match self.eval(x, f)?.v {
                                V::Int(i) => Some(i),
                                V::None => None,
                                _ => return self.raise("TypeError", "slice indices must be integers"),
                            };
                        }
                    }
                    return self.slice(&c, b[0], b[1], b[2]);
                }
                let i = self.eval(index, f)?;
                self.get_item(&c, &i)
            }
            ExprKind::Slice { .. } => self.subset("slice outside subscript"),
            ExprKind::Call { func, args } => {
                if let Some(d) = func.dotted_name() {
                    if let Some(method) = self.opts.logger.method_of(&d) {
                        let method = method.to_string();
                        return self.emit(&method, e, args, f);
                    }
                    if self.opts.is_reader(&d) {
                        return self.read_source(args, f);
                    }
                }
                let callee = self.eval(func, f)?;
                let (pos, kw) = self.eval_args(args, f)?;
                self.call(callee, pos, kw)
            }
            ExprKind::BinOp { op, left, right } => {
                let a = self.eval(left, f)?;
                let b = self.eval(right, f)?;
                self.binop(*op, &a, &b)
            }
            ExprKind::UnaryOp { op, operand } => {
                let a = self.eval(operand, f)?;
                let v = match (op, &a.v) {
                    (UnaryOp::Not, _) => V::Bool(!a.truthy()),
                    (UnaryOp::Neg, V::Int(i)) => V::Int(i.checked_neg().ok_or_else(|| self.overflow())?),
                    (UnaryOp::Neg, V::Bool(b)) => V::Int(-i64::from(*b)),
                    (UnaryOp::Neg, V::Float(x)) => V::Float(-x),
                    (UnaryOp::Pos, V::Int(_) | V::Float(_)) => a.v.clone(),
                    (UnaryOp::Pos, V::Bool(b)) => V::Int(i64::from(*b)),
                    (UnaryOp::Invert, V::Int(i)) => V::Int(!i),
                    _ => {
                        return self.raise(
                            "TypeError",
                            format!("bad operand type for unary op: '{}'", a.type_name()),
                        )
                    }
                };
                Ok(TV::with(v, a.l.clone()))
            }
            ExprKind::BoolOp { op, values } => {
                let mut last = TV::none();
                for x in values {
                    last = self.eval(x, f)?;
                    let t = last.truthy();
                    if (*op == BoolOp::And && !t) || (*op == BoolOp::Or && t) {
                        return Ok(last);
                    }
                }
                Ok(last)
            }
            ExprKind::Compare { left, ops, comparators } => {
                let mut a = self.eval(left, f)?;
                let mut l = Labels::none();
                for (op, c) in ops.iter().zip(comparators) {
                    let b = self.eval(c, f)?;
                    l.add(&a.l);
                    l.add(&b.l);
                    if !self.compare(*op, &a, &b)? {
                        return Ok(TV::with(V::Bool(false), l));
                    }
                    a = b;
                }
                Ok(TV::with(V::Bool(true), l))
            }
            ExprKind::IfExp { test, body, orelse } => {
                if self.eval(test, f)?.truthy() {
                    self.eval(body, f)
                } else {
                    self.eval(orelse, f)
                }
            }
            ExprKind::List(xs) | ExprKind::Tuple(xs) | ExprKind::Set(xs) => {
                let mut items = Vec::new();
                for x in xs {
                    if let ExprKind::Starred(inner) = &x.kind {
                        let v = self.eval(inner, f)?;
                        items.extend(self.iterate(&v)?);
                    } else {
                        items.push(self.eval(x, f)?);
                    }
                }
                match &e.kind {
                    ExprKind::List(_) => Ok(TV::list(items)),
                    ExprKind::Tuple(_) => Ok(TV::tuple(items)),
                    _ => self.make_set(items),
                }
            }
            ExprKind::Dict(entries) => {
                let mut d = Dict::default();
                for (k, v) in entries {
                    match k {
                        Some(k) => {
                            let kv = self.eval(k, f)?;
                            let vv = self.eval(v, f)?;
                            let Some(key) = kv.key() else {
                                return self.raise("TypeError", "unhashable dict key");
                            };
                            d.insert(key, kv, vv);
                        }
                        None => {
                            let other = self.eval(v, f)?;
                            let V::Dict(o) = &other.v else {
                                return self.raise("TypeError", "** argument must be a mapping");
                            };
                            for (k, x) in o.borrow().entries.iter() {
                                d.insert(k.key().expect("dict key"), k.clone(), x.clone());
                            }
                        }
                    }
                }
                Ok(TV::new(V::Dict(Rc::new(RefCell::new(d)))))
            }
            ExprKind::Comp {
                kind,
                elt,
                value,
                generators,
            } => {
                let scope = Rc::new(Scope {
                    parent: f.scope.clone(),
                    ..Default::default()
                });
                let inner = Frame {
                    module: f.module.clone(),
                    scope: Some(scope),
                };
                let mut out = Vec::new();
                self.comprehension(elt, value.as_deref(), generators, 0, &inner, &mut out)?;
                match kind {
                    CompKind::List | CompKind::Generator => Ok(TV::list(out.into_iter().map(|(k, _)| k).collect())),
                    CompKind::Set => self.make_set(out.into_iter().map(|(k, _)| k).collect()),
                    CompKind::Dict => {
                        let mut d = Dict::default();
                        for (k, v) in out {
                            let Some(key) = k.key() else {
                                return self.raise("TypeError", "unhashable dict key");
                            };
                            d.insert(key, k, v.expect("dict comprehension value"));
                        }
                        Ok(TV::new(V::Dict(Rc::new(RefCell::new(d)))))
                    }
                }
            }
            ExprKind::Lambda { params, body } => {
                let c = self.closure("<lambda>", params, Body::Lambda(body.clone()), f)?;
                Ok(TV::new(V::Func(c)))
            }
            ExprKind::NamedExpr { target, value } => {
                let v = self.eval(value, f)?;
                self.assign_name(target, v.clone(), f);
                Ok(v)
            }
            ExprKind::Starred(_) => self.subset("starred expression"),
            ExprKind::Yield(_) | ExprKind::Await(_) => self.subset("generators and coroutines"),
        }
    }

    fn comprehension(
        &mut self,
        elt: &Expr,
        value: Option<&Expr>,
        gens: &[Comprehension],
        i: usize,
        f: &Frame,
        out: &mut Vec<(TV, Option<TV>)>,
    ) -> R<()> {
        if i == gens.len() {
            let k = self.eval(elt, f)?;
            let v = match value {
                Some(v) => Some(self.eval(v, f)?),
                None => None,
            };
            out.push((k, v));
            return Ok(());
        }
        let g = &gens[i];
        let it = self.eval(&g.iter, f)?;
        for x in self.iterate(&it)? {
            self.tick()?;
            self.assign(&g.target, x, f)?;
            let mut keep = true;
            for cond in &g.ifs {
                if !self.eval(cond, f)?.truthy() {
                    keep = false;
                    break;
                }
            }
            if keep {
                self.comprehension(elt, value, gens, i + 1, f, out)?;
            }
        }
        Ok(())
    }

    fn make_set(&self, items: Vec<TV>) -> R<TV> {
        let mut d = Dict::default();
        for x in items {
            let Some(key) = x.key() else {
                return self.raise("TypeError", format!("unhashable type: '{}'", x.type_name()));
            };
            d.insert(key, x, TV::none());
        }
        Ok(TV::new(V::Set(Rc::new(RefCell::new(d)))))
    }

    fn overflow(&self) -> Exc {
        Exc::Fatal(OracleError::Subset {
            path: self.at.0.clone(),
            line: self.at.1,
            message: "integer overflow".into(),
        })
    }

    fn fstring(&mut self, parts: &[FStringPart], f: &Frame) -> R<(String, Vec<Labels>)> {
        let mut text = String::new();
        let mut slots = Vec::new();
        for p in parts {
            match p {
                FStringPart::Literal(s) => text.push_str(s),
                FStringPart::Field {
                    expr, conversion, spec, ..
                } => {
                    let v = self.eval(expr, f)?;
                    let spec = spec.as_deref().unwrap_or("");
                    if spec.contains('{') {
                        return self.subset("nested replacement field in format spec");
                    }
                    let shown = convert(&v, *conversion);
                    match format_spec(&shown, spec) {
                        Ok(s) => text.push_str(&s),
                        Err(m) => return self.raise("ValueError", m),
                    }
                    slots.push(v.deep_labels());
                }
            }
        }
        Ok((text, slots))
    }

    fn eval_args(&mut self, args: &[Arg], f: &Frame) -> R<Args> {
        let mut pos = Vec::new();
        let mut kw = Vec::new();
        for a in args {
            let v = self.eval(&a.value, f)?;
            match &a.kind {
                ArgKind::Positional => pos.push(v),
                ArgKind::Keyword(k) => kw.push((k.clone(), v)),
                ArgKind::Star => pos.extend(self.iterate(&v)?),
                ArgKind::DoubleStar => {
                    let V::Dict(d) = &v.v else {
                        return self.raise("TypeError", "** argument must be a mapping");
                    };
                    for (k, x) in d.borrow().entries.iter() {
                        let V::Str(name) = &k.v else {
                            return self.raise("TypeError", "keywords must be strings");
                        };
                        kw.push((name.to_string(), x.clone()));
                    }
                }
            }
        }
        Ok((pos, kw))
    }

    // ---- calls ----

    fn call(&mut self, callee: TV, mut pos: Vec<TV>, kw: Vec<(String, TV)>) -> R<TV> {
        match &callee.v {
            V::Func(c) => self.call_closure(c.clone(), pos, kw),
            V::Bound(recv, c) => {
                pos.insert(0, (**recv).clone());
                self.call_closure(c.clone(), pos, kw)
            }
            V::Class(cls) => {
                let inst = TV::new(V::Instance(Rc::new(Instance {
                    class: cls.clone(),
                    attrs: RefCell::default(),
                })));
                match cls.lookup("__init__") {
                    Some(TV { v: V::Func(init), .. }) => {
                        pos.insert(0, inst.clone());
                        self.call_closure(init, pos, kw)?;
                    }
                    _ if cls.is_exception() => {
                        if let V::Instance(o) = &inst.v {
                            o.attrs.borrow_mut().insert("args".into(), TV::tuple(pos));
                        }
                    }
                    _ if !pos.is_empty() || !kw.is_empty() => {
                        return self.raise("TypeError", format!("{}() takes no arguments", cls.name));
                    }
                    _ => {}
                }
                Ok(inst)
            }
            V::Builtin(name) => self.builtin(&name.clone(), pos, kw),
            V::Method(recv, name) => self.method(&recv.clone(), &name.clone(), pos, kw),
            _ => self.raise("TypeError", format!("'{}' object is not callable", callee.type_name())),
        }
    }

    fn call_closure(&mut self, c: Rc<Closure>, pos: Vec<TV>, mut kw: Vec<(String, TV)>) -> R<TV> {
        if self.depth >= MAX_DEPTH {
            return self.subset("recursion too deep");
        }
        let scope = Rc::new(Scope {
            parent: c.scope.clone(),
            ..Default::default()
        });
        let mut take_kw = |name: &str| kw.iter().position(|(k, _)| k == name).map(|i| kw.remove(i).1);
        let mut pi = 0;
        let mut vars = BTreeMap::new();
        let mut kwargs_param = None;
        for (i, p) in c.params.iter().enumerate() {
            let v = match p.kind {
                ParamKind::Normal => {
                    if pi < pos.len() {
                        pi += 1;
                        pos[pi - 1].clone()
                    } else if let Some(v) = take_kw(&p.name) {
                        v
                    } else if let Some(d) = &c.defaults[i] {
                        d.clone()
                    } else {
                        return self.raise("TypeError", format!("{}() missing argument '{}'", c.name, p.name));
                    }
                }
                ParamKind::VarArgs => {
                    let rest = pos[pi.min(pos.len())..].to_vec();
                    pi = pos.len();
                    TV::tuple(rest)
                }
                ParamKind::KeywordOnly => match take_kw(&p.name) {
                    Some(v) => v,
                    None => match &c.defaults[i] {
                        Some(d) => d.clone(),
                        None => return self.raise("TypeError", format!("{}() missing argument '{}'", c.name, p.name)),
                    },
                },
                ParamKind::KwArgs => {
                    kwargs_param = Some(p.name.clone());
                    continue;
                }
            };
            vars.insert(p.name.clone(), v);
        }
        if pi < pos.len() {
            return self.raise("TypeError", format!("{}() takes {pi} positional arguments", c.name));
        }
        match kwargs_param {
            Some(name) => {
                let mut d = Dict::default();
                for (k, v) in kw.drain(..) {
                    let kv = TV::str(&k);
                    d.insert(kv.key().expect("str key"), kv, v);
                }
                vars.insert(name, TV::new(V::Dict(Rc::new(RefCell::new(d)))));
            }
            None => {
                if let Some((k, _)) = kw.first() {
                    return self.raise(
                        "TypeError",
                        format!("{}() got an unexpected keyword argument '{k}'", c.name),
                    );
                }
            }
        }
        *scope.vars.borrow_mut() = vars;
        let frame = Frame {
            module: c.module.clone(),
            scope: Some(scope),
        };
        self.depth += 1;
        let saved = self.at.clone();
        let r = match &c.body {
            Body::Def(def) => self.exec_block(&def.body, &frame).map(|flow| match flow {
                Flow::Return(v) => v,
                _ => TV::none(),
            }),
            Body::Lambda(body) => self.eval(body, &frame),
        };
        self.depth -= 1;
        if r.is_ok() {
            self.at = saved;
        }
        r
    }

    fn getattr(&mut self, obj: &TV, attr: &str) -> R<TV> {
        match &obj.v {
            V::Instance(o) => {
                if let Some(v) = o.attrs.borrow().get(attr) {
                    return Ok(v.clone());
                }
                match o.class.lookup(attr) {
                    Some(TV { v: V::Func(c), .. }) => Ok(TV::new(V::Bound(Rc::new(obj.clone()), c))),
                    Some(v) => Ok(v),
                    None => self.raise(
                        "AttributeError",
                        format!("'{}' object has no attribute '{attr}'", o.class.name),
                    ),
                }
            }
            V::Class(c) => match c.lookup(attr) {
                Some(v) => Ok(v),
                None => self.raise(
                    "AttributeError",
                    format!("type object '{}' has no attribute '{attr}'", c.name),
                ),
            },
            V::Module(m) => {
                let found = m.globals.borrow().get(attr).cloned();
                match found {
                    Some(v) => Ok(v),
                    None => self.raise(
                        "AttributeError",
                        format!("module '{}' has no attribute '{attr}'", m.name),
                    ),
                }
            }
            V::External(m) => match (&**m, attr) {
                ("math", "pi") => Ok(TV::new(V::Float(std::f64::consts::PI))),
                ("math", "e") => Ok(TV::new(V::Float(std::f64::consts::E))),
                _ => Ok(TV::new(V::Method(Rc::new(obj.clone()), attr.into()))),
            },
            V::Str(_) | V::List(_) | V::Dict(_) | V::Set(_) | V::Logger => {
                Ok(TV::new(V::Method(Rc::new(obj.clone()), attr.into())))
            }
            _ => self.raise(
                "AttributeError",
                format!("'{}' object has no attribute '{attr}'", obj.type_name()),
            ),
        }
    }

    fn get_item(&mut self, c: &TV, i: &TV) -> R<TV> {
        match &c.v {
            V::List(xs) => {
                let n = xs.borrow().len();
                let k = self.index_of(i, n)?;
                Ok(xs.borrow()[k].clone().labeled(&c.l))
            }
            V::Tuple(xs) => {
                let k = self.index_of(i, xs.len())?;
                Ok(xs[k].clone().labeled(&c.l))
            }
            V::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let k = self.index_of(i, chars.len())?;
                Ok(TV::with(V::Str(chars[k].to_string().into()), c.l.clone()))
            }
            V::Dict(d) => {
                let Some(key) = i.key() else {
                    return self.raise("TypeError", format!("unhashable type: '{}'", i.type_name()));
                };
                let found = d.borrow().get(&key).cloned();
                match found {
                    Some(v) => Ok(v.labeled(&c.l)),
                    None => self.raise("KeyError", repr(i)),
                }
            }
            _ => self.raise("TypeError", format!("'{}' object is not subscriptable", c.type_name())),
        }
    }

    fn slice(&mut self, c: &TV, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> R<TV> {
        let step = step.unwrap_or(1);
        if step == 0 {
            return self.raise("ValueError", "slice step cannot be zero");
        }
        let pick = |n: usize| -> Vec<usize> {
            let n = n as i64;
            let norm = |x: i64, lo_b: i64, hi_b: i64| {
                let x = if x < 0 { x + n } else { x };
                x.clamp(lo_b, hi_b)
            };
            let mut out = Vec::new();
            if step > 0 {
                let (s, e) = (norm(lo.unwrap_or(0), 0, n), norm(hi.unwrap_or(n), 0, n));
                let mut k = s;
                while k < e {
                    out.push(k as usize);
                    k += step;
                }
            } else {
                let s = lo.map_or(n - 1, |x| norm(x, -1, n - 1));
                let e = hi.map_or(-1, |x| norm(x, -1, n - 1));
                let mut k = s;
                while k > e {
                    out.push(k as usize);
                    k += step;
                }
            }
            out
        };
        match &c.v {
            V::List(xs) => {
                let xs = xs.borrow();
                let items = pick(xs.len()).into_iter().map(|k| xs[k].clone()).collect();
                Ok(TV::list(items).labeled(&c.l))
            }
            V::Tuple(xs) => Ok(TV::tuple(pick(xs.len()).into_iter().map(|k| xs[k].clone()).collect()).labeled(&c.l)),
            V::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let out: String = pick(chars.len()).into_iter().map(|k| chars[k]).collect();
                Ok(TV::with(V::Str(out.into()), c.l.clone()))
            }
            _ => self.raise("TypeError", format!("'{}' object is not subscriptable", c.type_name())),
        }
    }

    fn iterate(&mut self, v: &TV) -> R<Vec<TV>> {
        Ok(match &v.v {
            V::List(xs) => xs.borrow().clone(),
            V::Tuple(xs) => xs.to_vec(),
            V::Str(s) => s
                .chars()
                .map(|c| TV::with(V::Str(c.to_string().into()), v.l.clone()))
                .collect(),
            V::Dict(d) | V::Set(d) => d.borrow().entries.iter().map(|(k, _)| k.clone()).collect(),
            _ => return self.raise("TypeError", format!("'{}' object is not iterable", v.type_name())),
        })
    }

    // ---- operators ----

    fn binop(&mut self, op: BinOp, a: &TV, b: &TV) -> R<TV> {
        let l = a.l.union(&b.l);
        let v = match (op, &a.v, &b.v) {
            (BinOp::Mod, V::Str(fmt), _) => {
                let args = match &b.v {
                    V::Tuple(xs) => xs.to_vec(),
                    _ => vec![b.clone()],
                };
                return match percent_format(fmt, &args) {
                    Ok(s) => Ok(TV::with(V::Str(s.into()), a.l.union(&b.deep_labels()))),
                    Err(m) => self.raise("TypeError", m),
                };
            }
            (BinOp::Add, V::Str(x), V::Str(y)) => V::Str(format!("{x}{y}").into()),
            (BinOp::Add, V::List(x), V::List(y)) => {
                let mut items = x.borrow().clone();
                items.extend(y.borrow().iter().cloned());
                return Ok(TV::list(items).labeled(&l));
            }
            (BinOp::Add, V::Tuple(x), V::Tuple(y)) => {
                let mut items = x.to_vec();
                items.extend(y.iter().cloned());
                return Ok(TV::tuple(items).labeled(&l));
            }
            (BinOp::Mult, V::Str(s), V::Int(n)) | (BinOp::Mult, V::Int(n), V::Str(s)) => {
                V::Str(s.repeat((*n).max(0) as usize).into())
            }
            (BinOp::Mult, V::List(xs), V::Int(n)) => {
                let xs = xs.borrow();
                let mut items = Vec::new();
                for _ in 0..(*n).max(0) {
                    items.extend(xs.iter().cloned());
                }
                return Ok(TV::list(items).labeled(&l));
            }
            _ => match (num(&a.v), num(&b.v)) {
                (Some(Num::I(x)), Some(Num::I(y))) => self.int_op(op, x, y)?,
                (Some(x), Some(y)) => self.float_op(op, x.f(), y.f())?,
                _ => {
                    return self.raise(
                        "TypeError",
                        format!(
                            "unsupported operand type(s) for {}: '{}' and '{}'",
                            op.symbol(),
                            a.type_name(),
                            b.type_name()
                        ),
                    )
                }
            },
        };
        Ok(TV::with(v, l))
    }

    fn int_op(&mut self, op: BinOp, x: i64, y: i64) -> R<V> {
        let of = || self.overflow();
        Ok(match op {
            BinOp::Add => V::Int(x.checked_add(y).ok_or_else(of)?),
            BinOp::Sub => V::Int(x.checked_sub(y).ok_or_else(of)?),
            BinOp::Mult => V::Int(x.checked_mul(y).ok_or_else(of)?),
            BinOp::Div => {
                if y == 0 {
                    return self.raise("ZeroDivisionError", "division by zero");
                }
                V::Float(x as f64 / y as f64)
            }
            BinOp::FloorDiv | BinOp::Mod => {
                if y == 0 {
                    return self.raise("ZeroDivisionError", "integer division or modulo by zero");
                }
                let (mut q, mut r) = (x / y, x % y);
                if r != 0 && ((r < 0) != (y < 0)) {
                    q -= 1;
                    r += y;
                }
                V::Int(if op == BinOp::FloorDiv { q } else { r })
            }
            BinOp::Pow => {
                if y >= 0 {
                    V::Int(x.checked_pow(u32::try_from(y).map_err(|_| of())?).ok_or_else(of)?)
                } else {
                    V::Float((x as f64).powf(y as f64))
                }
            }
            BinOp::LShift => V::Int(x.checked_shl(u32::try_from(y).map_err(|_| of())?).ok_or_else(of)?),
            BinOp::RShift => V::Int(x >> y.clamp(0, 63)),
            BinOp::BitAnd => V::Int(x & y),
            BinOp::BitOr => V::Int(x | y),
            BinOp::BitXor => V::Int(x ^ y),
            BinOp::MatMult => return self.raise("TypeError", "unsupported operand type(s) for @"),
        })
    }

    fn float_op(&mut self, op: BinOp, x: f64, y: f64) -> R<V> {
        Ok(V::Float(match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mult => x * y,
            BinOp::Div | BinOp::FloorDiv | BinOp::Mod if y == 0.0 => {
                return self.raise("ZeroDivisionError", "float division by zero")
            }
            BinOp::Div => x / y,
            BinOp::FloorDiv => (x / y).floor(),
            BinOp::Mod => {
                let r = x % y;
                if r != 0.0 && ((r < 0.0) != (y < 0.0)) {
                    r + y
                } else {
                    r
                }
            }
            BinOp::Pow => x.powf(y),
            _ => {
                return self.raise(
                    "TypeError",
                    format!("unsupported operand type(s) for {}: 'float'", op.symbol()),
                )
            }
        }))
    }

    fn compare(&mut self, op: CmpOp, a: &TV, b: &TV) -> R<bool> {
        Ok(match op {
            CmpOp::Eq => py_eq(a, b),
            CmpOp::NotEq => !py_eq(a, b),
            CmpOp::Is => is_same(a, b),
            CmpOp::IsNot => !is_same(a, b),
            CmpOp::In => self.contains(b, a)?,
            CmpOp::NotIn => !self.contains(b, a)?,
            _ => {
                let Some(ord) = py_cmp(a, b) else {
                    return self.raise(
                        "TypeError",
                        format!(
                            "'{}' not supported between instances of '{}' and '{}'",
                            op.symbol(),
                            a.type_name(),
                            b.type_name()
                        ),
                    );
                };
                match op {
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::LtE => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    _ => ord != Ordering::Less,
                }
            }
        })
    }

    fn contains(&mut self, c: &TV, x: &TV) -> R<bool> {
        Ok(match &c.v {
            V::Str(s) => match &x.v {
                V::Str(t) => s.contains(&**t),
                _ => return self.raise("TypeError", "'in <string>' requires string as left operand"),
            },
            V::List(xs) => xs.borrow().iter().any(|y| py_eq(x, y)),
            V::Tuple(xs) => xs.iter().any(|y| py_eq(x, y)),
            V::Dict(d) | V::Set(d) => x.key().is_some_and(|k| d.borrow().get(&k).is_some()),
            _ => {
                return self.raise(
                    "TypeError",
                    format!("argument of type '{}' is not iterable", c.type_name()),
                )
            }
        })
    }

    // ---- logging and sources ----

    fn emit(&mut self, method: &str, call: &Expr, args: &[Arg], f: &Frame) -> R<TV> {
        let level = match method {
            "debug" => "DEBUG",
            "info" => "INFO",
            "warning" | "warn" => "WARNING",
            "error" | "exception" => "ERROR",
            "critical" | "fatal" => "CRITICAL",
            other => return self.subset(format!("logger method {other}")),
        };
        let values: Vec<&Arg> = args.iter().filter(|a| !matches!(a.kind, ArgKind::Keyword(_))).collect();
        let (message, slots) = match values.split_first() {
            None => (String::new(), Vec::new()),
            Some((first, rest)) => self.log_message(first, rest, f)?,
        };
        for a in args {
            if matches!(a.kind, ArgKind::Keyword(_)) {
                self.eval(&a.value, f)?;
            }
        }
        let slots = slots
            .into_iter()
            .map(|l| l.iter().map(|id| self.labels[id as usize].clone()).collect())
            .collect();
        self.emissions.push(Emission {
            level: level.to_string(),
            path: f.module.path.clone(),
            line: call.span.start_line,
            message,
            slots,
        });
        Ok(TV::none())
    }

    /// Renders a logger message and the labels reaching each template slot.
    fn log_message(&mut self, first: &Arg, rest: &[&Arg], f: &Frame) -> R<(String, Vec<Labels>)> {
        let msg = &first.value;
        let positional = first.kind == ArgKind::Positional && rest.iter().all(|a| a.kind == ArgKind::Positional);
        if positional {
            match &msg.kind {
                ExprKind::Const(Constant::Str(s)) if rest.is_empty() => return Ok((s.clone(), Vec::new())),
                ExprKind::Const(Constant::Str(s)) if printf_arity(s) == Some(rest.len()) => {
                    let mut vals = Vec::new();
                    for a in rest {
                        vals.push(self.eval(&a.value, f)?);
                    }
                    return match percent_format(s, &vals) {
                        Ok(m) => Ok((m, vals.iter().map(TV::deep_labels).collect())),
                        Err(m) => self.raise("TypeError", m),
                    };
                }
                ExprKind::BinOp {
                    op: BinOp::Mod,
                    left,
                    right,
                } if rest.is_empty() => {
                    if let Some(s) = left.as_str_literal() {
                        let arity = printf_arity(s);
                        match &right.kind {
                            ExprKind::Tuple(xs)
                                if !xs.iter().any(|x| matches!(x.kind, ExprKind::Starred(_)))
                                    && arity == Some(xs.len()) =>
                            {
                                let mut vals = Vec::new();
                                for x in xs {
                                    vals.push(self.eval(x, f)?);
                                }
                                return match percent_format(s, &vals) {
                                    Ok(m) => Ok((m, vals.iter().map(TV::deep_labels).collect())),
                                    Err(m) => self.raise("TypeError", m),
                                };
                            }
                            ExprKind::Tuple(_) => {}
                            _ if arity == Some(1) => {
                                let v = self.eval(right, f)?;
                                let fmt = TV::str(s);
                                let out = self.binop(BinOp::Mod, &fmt, &v)?;
                                return Ok((to_str(&out), vec![v.deep_labels()]));
                            }
                            _ => {}
                        }
                    }
                }
                ExprKind::Call { func, args: fargs } if rest.is_empty() => {
                    if let ExprKind::Attribute { value, attr } = &func.kind {
                        if let (Some(s), "format") = (value.as_str_literal(), attr.as_str()) {
                            if let Some(r) = self.brace_message(s, fargs, f)? {
                                return Ok(r);
                            }
                        }
                    }
                }
                ExprKind::FString(parts) if rest.is_empty() => return self.fstring(parts, f),
                ExprKind::BinOp { op: BinOp::Add, .. } if rest.is_empty() => {
                    let mut operands = Vec::new();
                    flatten_add(msg, &mut operands);
                    let has_text = operands
                        .iter()
                        .any(|x| matches!(x.kind, ExprKind::Const(Constant::Str(_)) | ExprKind::FString(_)));
                    if has_text {
                        let mut text = String::new();
                        let mut slots = Vec::new();
                        for x in operands {
                            match &x.kind {
                                ExprKind::Const(Constant::Str(s)) => text.push_str(s),
                                ExprKind::FString(parts) => {
                                    let (t, s) = self.fstring(parts, f)?;
                                    text.push_str(&t);
                                    slots.extend(s);
                                }
                                _ => {
                                    let v = self.eval(x, f)?;
                                    match &v.v {
                                        V::Str(s) => text.push_str(s),
                                        _ => {
                                            return self.raise(
                                                "TypeError",
                                                format!("can only concatenate str (not \"{}\") to str", v.type_name()),
                                            )
                                        }
                                    }
                                    slots.push(v.l.clone());
                                }
                            }
                        }
                        return Ok((text, slots));
                    }
                }
                _ => {}
            }
        }
        // Whole message: one slot fed by everything.
        let v = self.eval(msg, f)?;
        let mut vals = Vec::new();
        for a in rest {
            let x = self.eval(&a.value, f)?;
            match a.kind {
                ArgKind::Star => vals.extend(self.iterate(&x)?),
                _ => vals.push(x),
            }
        }
        let mut l = v.deep_labels();
        for x in &vals {
            l.add(&x.deep_labels());
        }
        let text = if vals.is_empty() {
            to_str(&v)
        } else {
            match percent_format(&to_str(&v), &vals) {
                Ok(m) => m,
                Err(m) => return self.raise("TypeError", m),
            }
        };
        Ok((text, vec![l]))
    }

    fn brace_message(&mut self, fmt: &str, fargs: &[Arg], f: &Frame) -> R<Option<(String, Vec<Labels>)>> {
        if fargs
            .iter()
            .any(|a| matches!(a.kind, ArgKind::Star | ArgKind::DoubleStar))
        {
            return Ok(None);
        }
        let Ok(parts) = parse_brace_format(fmt) else {
            return Ok(None);
        };
        let (pos, kw) = self.eval_args(fargs, f)?;
        let mut text = String::new();
        let mut slots = Vec::new();
        for p in parts {
            match p {
                BracePart::Text(t) => text.push_str(&t),
                BracePart::Field {
                    arg,
                    accessors,
                    conversion,
                    spec,
                } => {
                    let found = match &arg {
                        FieldArg::Index(i) => pos.get(*i).cloned(),
                        FieldArg::Name(n) => kw.iter().find(|(k, _)| k == n).map(|(_, v)| v.clone()),
                    };
                    let Some(mut v) = found else {
                        return self.raise("IndexError", format!("format field {arg:?} has no argument"));
                    };
                    for a in &accessors {
                        v = match a {
                            Accessor::Attr(name) => self.getattr(&v, name)?,
                            Accessor::Item(k) => {
                                let key = match k.parse::<i64>() {
                                    Ok(i) => TV::new(V::Int(i)),
                                    Err(_) => TV::str(k),
                                };
                                self.get_item(&v, &key)?
                            }
                        };
                    }
                    let shown = convert(&v, conversion);
                    match format_spec(&shown, &spec) {
                        Ok(s) => text.push_str(&s),
                        Err(m) => return self.raise("ValueError", m),
                    }
                    slots.push(v.deep_labels());
                }
            }
        }
        Ok(Some((text, slots)))
    }

    fn read_source(&mut self, args: &[Arg], f: &Frame) -> R<TV> {
        let (pos, kw) = self.eval_args(args, f)?;
        let key = pos.first().or_else(|| kw.first().map(|(_, v)| v));
        let Some(TV { v: V::Str(key), .. }) = key else {
            return self.subset("data source key is not a string");
        };
        let specs: Vec<DataSourceSpec> = match self.annotations.match_source(key) {
            Ok(Some(s)) => vec![s.clone()],
            Ok(None) => Vec::new(),
            Err(amb) => amb
                .candidates
                .iter()
                .filter_map(|c| self.annotations.spec(c).cloned())
                .collect(),
        };
        let text = self
            .data
            .get(&**key)
            .or_else(|| normalize_path(key).and_then(|k| self.data.get(&k)))
            .ok_or_else(|| Exc::Fatal(OracleError::Data(key.to_string())))?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = match reader.headers() {
            Ok(h) => h.iter().map(str::to_string).collect(),
            Err(e) => return Err(Exc::Fatal(OracleError::Data(format!("{key}: {e}")))),
        };
        let col_labels: Vec<Labels> = headers
            .iter()
            .map(|h| {
                let mut l = Labels::none();
                for s in &specs {
                    if s.attribute(h).is_some() {
                        l.add(&Labels::one(self.label(&s.source_id, h)));
                    }
                }
                l
            })
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Exc::Fatal(OracleError::Data(format!("{key}: {e}"))))?;
            let mut d = Dict::default();
            for ((h, cell), l) in headers.iter().zip(rec.iter()).zip(&col_labels) {
                let k = TV::str(h);
                d.insert(k.key().expect("str key"), k, TV::with(cell_value(cell), l.clone()));
            }
            rows.push(TV::new(V::Dict(Rc::new(RefCell::new(d)))));
        }
        Ok(TV::list(rows))
    }

    // ---- builtins ----

    fn builtin(&mut self, name: &str, pos: Vec<TV>, kw: Vec<(String, TV)>) -> R<TV> {
        let kwarg = |n: &str| kw.iter().find(|(k, _)| k == n).map(|(_, v)| v.clone());
        let arg = |i: usize| -> R<TV> {
            pos.get(i).cloned().ok_or_else(|| {
                self.raise::<()>("TypeError", format!("{name}() missing argument"))
                    .unwrap_err()
            })
        };
        match name {
            "len" => {
                let x = arg(0)?;
                let n = match &x.v {
                    V::Str(s) => s.chars().count(),
                    V::List(xs) => xs.borrow().len(),
                    V::Tuple(xs) => xs.len(),
                    V::Dict(d) | V::Set(d) => d.borrow().len(),
                    _ => return self.raise("TypeError", format!("object of type '{}' has no len()", x.type_name())),
                };
                Ok(TV::with(V::Int(n as i64), x.l.clone()))
            }
            "str" => match pos.first() {
                None => Ok(TV::str("")),
                Some(x) => Ok(TV::with(V::Str(to_str(x).into()), x.deep_labels())),
            },
            "repr" => {
                let x = arg(0)?;
                Ok(TV::with(V::Str(repr(&x).into()), x.deep_labels()))
            }
            "format" => {
                let x = arg(0)?;
                let spec = pos.get(1).map(to_str).unwrap_or_default();
                match format_spec(&x, &spec) {
                    Ok(s) => Ok(TV::with(V::Str(s.into()), x.deep_labels())),
                    Err(m) => self.raise("ValueError", m),
                }
            }
            "int" => {
                let Some(x) = pos.first() else {
                    return Ok(TV::new(V::Int(0)));
                };
                let v = match &x.v {
                    V::Int(i) => V::Int(*i),
                    V::Bool(b) => V::Int(i64::from(*b)),
                    V::Float(f) if f.is_finite() => V::Int(f.trunc() as i64),
                    V::Str(s) => match s.trim().replace('_', "").parse::<i64>() {
                        Ok(i) => V::Int(i),
                        Err(_) => return self.raise("ValueError", format!("invalid literal for int(): {}", repr(x))),
                    },
                    _ => {
                        return self.raise(
                            "TypeError",
                            format!("int() argument must be a number, not '{}'", x.type_name()),
                        )
                    }
                };
                Ok(TV::with(v, x.l.clone()))
            }
            "float" => {
                let Some(x) = pos.first() else {
                    return Ok(TV::new(V::Float(0.0)));
                };
                let v = match &x.v {
                    V::Int(i) => V::Float(*i as f64),
                    V::Bool(b) => V::Float(f64::from(u8::from(*b))),
                    V::Float(f) => V::Float(*f),
                    V::Str(s) => match s.trim().to_ascii_lowercase().parse::<f64>() {
                        Ok(f) => V::Float(f),
                        Err(_) => {
                            return self.raise("ValueError", format!("could not convert string to float: {}", repr(x)))
                        }
                    },
                    _ => {
                        return self.raise(
                            "TypeError",
                            format!("float() argument must be a number, not '{}'", x.type_name()),
                        )
                    }
                };
                Ok(TV::with(v, x.l.clone()))
            }
            "bool" => Ok(match pos.first() {
                None => TV::new(V::Bool(false)),
                Some(x) => TV::with(V::Bool(x.truthy()), x.l.clone()),
            }),
            "abs" => {
                let x = arg(0)?;
                let v = match &x.v {
                    V::Int(i) => V::Int(i.checked_abs().ok_or_else(|| self.overflow())?),
                    V::Bool(b) => V::Int(i64::from(*b)),
                    V::Float(f) => V::Float(f.abs()),
                    _ => return self.raise("TypeError", "bad operand type for abs()"),
                };
                Ok(TV::with(v, x.l.clone()))
            }
            "round" => {
                let x = arg(0)?;
                let nd = pos
                    .get(1)
                    .or(kw.first().map(|(_, v)| v))
                    .filter(|v| !matches!(v.v, V::None));
                let mut l = x.l.clone();
                let v = match (&x.v, nd) {
                    (V::Int(i), _) => V::Int(*i),
                    (V::Bool(b), _) => V::Int(i64::from(*b)),
                    (V::Float(f), None) => V::Int(f.round_ties_even() as i64),
                    (V::Float(f), Some(n)) => {
                        l.add(&n.l);
                        let V::Int(n) = n.v else {
                            return self.raise("TypeError", "ndigits must be an integer");
                        };
                        if n >= 0 {
                            V::Float(format!("{:.*}", n as usize, f).parse().expect("formatted float"))
                        } else {
                            let m = 10f64.powi(-n as i32);
                            V::Float((f / m).round_ties_even() * m)
                        }
                    }
                    _ => return self.raise("TypeError", "type doesn't define __round__"),
                };
                Ok(TV::with(v, l))
            }
            "min" | "max" => {
                let items = if pos.len() == 1 {
                    self.iterate(&pos[0])?
                } else {
                    pos.clone()
                };
                if items.is_empty() {
                    return match kwarg("default") {
                        Some(d) => Ok(d),
                        None => self.raise("ValueError", format!("{name}() arg is an empty sequence")),
                    };
                }
                let keys = self.keys_of(&items, kwarg("key"))?;
                let mut best = 0;
                for i in 1..items.len() {
                    let Some(ord) = py_cmp(&keys[i], &keys[best]) else {
                        return self.raise("TypeError", format!("'{name}' of unorderable values"));
                    };
                    if (name == "max" && ord == Ordering::Greater) || (name == "min" && ord == Ordering::Less) {
                        best = i;
                    }
                }
                Ok(items[best].clone())
            }
            "sum" => {
                let it = arg(0)?;
                let mut acc = pos.get(1).cloned().or(kwarg("start")).unwrap_or(TV::new(V::Int(0)));
                for x in self.iterate(&it)? {
                    acc = self.binop(BinOp::Add, &acc, &x)?;
                }
                Ok(acc.labeled(&it.l))
            }
            "sorted" => {
                let it = arg(0)?;
                let items = self.iterate(&it)?;
                let sorted = self.sort(items, kwarg("key"), kwarg("reverse").is_some_and(|r| r.truthy()))?;
                Ok(TV::list(sorted).labeled(&it.l))
            }
            "reversed" => {
                let it = arg(0)?;
                let mut items = self.iterate(&it)?;
                items.reverse();
                Ok(TV::list(items).labeled(&it.l))
            }
            "list" | "tuple" | "set" => {
                let (items, l) = match pos.first() {
                    Some(x) => (self.iterate(x)?, x.l.clone()),
                    None => (Vec::new(), Labels::none()),
                };
                Ok(match name {
                    "list" => TV::list(items),
                    "tuple" => TV::tuple(items),
                    _ => self.make_set(items)?,
                }
                .labeled(&l))
            }
            "dict" => {
                let mut d = Dict::default();
                let mut l = Labels::none();
                if let Some(x) = pos.first() {
                    l = x.l.clone();
                    match &x.v {
                        V::Dict(o) => {
                            for (k, v) in o.borrow().entries.iter() {
                                d.insert(k.key().expect("dict key"), k.clone(), v.clone());
                            }
                        }
                        _ => {
                            for pair in self.iterate(x)? {
                                let kv = self.iterate(&pair)?;
                                if kv.len() != 2 {
                                    return self
                                        .raise("ValueError", "dictionary update sequence element has wrong length");
                                }
                                let Some(key) = kv[0].key() else {
                                    return self.raise("TypeError", "unhashable dict key");
                                };
                                d.insert(key, kv[0].clone(), kv[1].clone());
                            }
                        }
                    }
                }
                for (k, v) in &kw {
                    let kv = TV::str(k);
                    d.insert(kv.key().expect("str key"), kv, v.clone());
                }
                Ok(TV::with(V::Dict(Rc::new(RefCell::new(d))), l))
            }
            "enumerate" => {
                let it = arg(0)?;
                let start = match pos.get(1).cloned().or(kwarg("start")) {
                    Some(TV { v: V::Int(i), .. }) => i,
                    _ => 0,
                };
                let items = self.iterate(&it)?;
                Ok(TV::list(
                    items
                        .into_iter()
                        .enumerate()
                        .map(|(i, x)| TV::tuple(vec![TV::new(V::Int(start + i as i64)), x]))
                        .collect(),
                ))
            }
            "zip" => {
                let mut cols = Vec::new();
                for x in &pos {
                    cols.push(self.iterate(x)?);
                }
                let n = cols.iter().map(Vec::len).min().unwrap_or(0);
                Ok(TV::list(
                    (0..n)
                        .map(|i| TV::tuple(cols.iter().map(|c| c[i].clone()).collect()))
                        .collect(),
                ))
            }
            "range" => {
                let mut l = Labels::none();
                let mut ints = Vec::new();
                for x in &pos {
                    l.add(&x.l);
                    match x.v {
                        V::Int(i) => ints.push(i),
                        V::Bool(b) => ints.push(i64::from(b)),
                        _ => return self.raise("TypeError", "range() arguments must be integers"),
                    }
                }
                let (start, stop, step) = match ints[..] {
                    [stop] => (0, stop, 1),
                    [start, stop] => (start, stop, 1),
                    [start, stop, step] if step != 0 => (start, stop, step),
                    _ => return self.raise("ValueError", "bad range() arguments"),
                };
                let mut out = Vec::new();
                let mut k = start;
                while (step > 0 && k < stop) || (step < 0 && k > stop) {
                    self.tick()?;
                    out.push(TV::with(V::Int(k), l.clone()));
                    k += step;
                }
                Ok(TV::list(out))
            }
            "isinstance" => {
                let (x, t) = (arg(0)?, arg(1)?);
                let types = match &t.v {
                    V::Tuple(xs) => xs.to_vec(),
                    _ => vec![t.clone()],
                };
                let ok = types.iter().any(|t| match (&t.v, &x.v) {
                    (V::Class(c), V::Instance(o)) => o.class.is_a(&c.name),
                    (V::Builtin(n), _) => match &**n {
                        "int" => matches!(x.v, V::Int(_) | V::Bool(_)),
                        "float" => matches!(x.v, V::Float(_)),
                        "str" => matches!(x.v, V::Str(_)),
                        "bool" => matches!(x.v, V::Bool(_)),
                        "list" => matches!(x.v, V::List(_)),
                        "tuple" => matches!(x.v, V::Tuple(_)),
                        "dict" => matches!(x.v, V::Dict(_)),
                        "set" => matches!(x.v, V::Set(_)),
                        _ => false,
                    },
                    _ => false,
                });
                Ok(TV::new(V::Bool(ok)))
            }
            "print" => Ok(TV::none()),
            "any" | "all" => {
                let it = arg(0)?;
                let mut l = it.l.clone();
                let want = name == "any";
                for x in self.iterate(&it)? {
                    l.add(&x.l);
                    if x.truthy() == want {
                        return Ok(TV::with(V::Bool(want), l));
                    }
                }
                Ok(TV::with(V::Bool(!want), l))
            }
            "map" | "filter" => {
                let (func, it) = (arg(0)?, arg(1)?);
                let mut out = Vec::new();
                for x in self.iterate(&it)? {
                    if name == "map" {
                        out.push(self.call(func.clone(), vec![x], Vec::new())?);
                    } else {
                        let keep = match func.v {
                            V::None => x.truthy(),
                            _ => self.call(func.clone(), vec![x.clone()], Vec::new())?.truthy(),
                        };
                        if keep {
                            out.push(x);
                        }
                    }
                }
                Ok(TV::list(out))
            }
            "getattr" | "hasattr" => {
                let (obj, n) = (arg(0)?, arg(1)?);
                let V::Str(attr) = &n.v else {
                    return self.raise("TypeError", "attribute name must be string");
                };
                match (self.getattr(&obj, attr), name, pos.get(2)) {
                    (Ok(v), "getattr", _) => Ok(v),
                    (Ok(_), _, _) => Ok(TV::new(V::Bool(true))),
                    (Err(Exc::Raise(_)), "getattr", Some(d)) => Ok(d.clone()),
                    (Err(Exc::Raise(_)), "hasattr", _) => Ok(TV::new(V::Bool(false))),
                    (Err(e), _, _) => Err(e),
                }
            }
            _ => self.subset(format!("builtin {name}")),
        }
    }

    fn keys_of(&mut self, items: &[TV], key: Option<TV>) -> R<Vec<TV>> {
        match key {
            None => Ok(items.to_vec()),
            Some(k) if matches!(k.v, V::None) => Ok(items.to_vec()),
            Some(k) => {
                let mut out = Vec::new();
                for x in items {
                    out.push(self.call(k.clone(), vec![x.clone()], Vec::new())?);
                }
                Ok(out)
            }
        }
    }

    fn sort(&mut self, items: Vec<TV>, key: Option<TV>, reverse: bool) -> R<Vec<TV>> {
        let keys = self.keys_of(&items, key)?;
        let mut idx: Vec<usize> = (0..items.len()).collect();
        let mut bad = false;
        idx.sort_by(|&a, &b| {
            let o = py_cmp(&keys[a], &keys[b]).unwrap_or_else(|| {
                bad = true;
                Ordering::Equal
            });
            if reverse {
                o.reverse()
            } else {
                o
            }
        });
        if bad {
            return self.raise("TypeError", "'<' not supported between these values");
        }
        Ok(idx.into_iter().map(|i| items[i].clone()).collect())
    }

    // ---- methods ----

    fn method(&mut self, recv: &TV, name: &str, pos: Vec<TV>, kw: Vec<(String, TV)>) -> R<TV> {
        match &recv.v {
            V::Str(s) => self.str_method(recv, s, name, pos, kw),
            V::List(xs) => self.list_method(recv, xs, name, pos, kw),
            V::Dict(d) => self.dict_method(recv, d, name, pos, kw),
            V::Set(d) => {
                let arg = pos.first().cloned().unwrap_or_else(TV::none);
                match name {
                    "add" => {
                        let Some(k) = arg.key() else {
                            return self.raise("TypeError", "unhashable set member");
                        };
                        d.borrow_mut().insert(k, arg, TV::none());
                        Ok(TV::none())
                    }
                    "discard" | "remove" => {
                        let removed = arg.key().and_then(|k| d.borrow_mut().remove(&k));
                        if removed.is_none() && name == "remove" {
                            return self.raise("KeyError", repr(&arg));
                        }
                        Ok(TV::none())
                    }
                    "update" => {
                        for x in self.iterate(&arg)? {
                            let Some(k) = x.key() else {
                                return self.raise("TypeError", "unhashable set member");
                            };
                            d.borrow_mut().insert(k, x, TV::none());
                        }
                        Ok(TV::none())
                    }
                    "copy" => {
                        let items = self.iterate(recv)?;
                        Ok(self.make_set(items)?.labeled(&recv.l))
                    }
                    _ => self.subset(format!("set.{name}")),
                }
            }
            V::External(m) => self.external(m, name, pos),
            V::Logger => match name {
                "setLevel" | "addHandler" | "propagate" => Ok(TV::none()),
                _ => self.subset(format!("indirect logger call {name}")),
            },
            _ => self.subset(format!("method {name} on {}", recv.type_name())),
        }
    }

    fn external(&mut self, module: &str, name: &str, pos: Vec<TV>) -> R<TV> {
        match (module, name) {
            ("logging", "getLogger") => Ok(TV::new(V::Logger)),
            ("logging", "basicConfig") => Ok(TV::none()),
            ("math", f @ ("sqrt" | "log" | "exp" | "floor" | "ceil" | "fabs" | "log10")) => {
                let Some(x) = pos.first() else {
                    return self.raise("TypeError", format!("math.{f} expects an argument"));
                };
                let Some(n) = num(&x.v) else {
                    return self.raise("TypeError", "must be real number");
                };
                let v = n.f();
                let r = match f {
                    "sqrt" if v < 0.0 => return self.raise("ValueError", "math domain error"),
                    "log" | "log10" if v <= 0.0 => return self.raise("ValueError", "math domain error"),
                    "sqrt" => V::Float(v.sqrt()),
                    "log" => V::Float(v.ln()),
                    "log10" => V::Float(v.log10()),
                    "exp" => V::Float(v.exp()),
                    "fabs" => V::Float(v.abs()),
                    "floor" => V::Int(v.floor() as i64),
                    _ => V::Int(v.ceil() as i64),
                };
                Ok(TV::with(r, x.l.clone()))
            }
            _ => self.subset(format!("call to external {module}.{name}")),
        }
    }

    fn str_method(&mut self, recv: &TV, s: &str, name: &str, pos: Vec<TV>, kw: Vec<(String, TV)>) -> R<TV> {
        let mut l = recv.l.clone();
        for x in &pos {
            l.add(&x.deep_labels());
        }
        for (_, x) in &kw {
            l.add(&x.deep_labels());
        }
        let sarg = |i: usize| -> Option<String> {
            pos.get(i).and_then(|x| match &x.v {
                V::Str(t) => Some(t.to_string()),
                _ => None,
            })
        };
        let iarg = |i: usize| -> Option<i64> {
            pos.get(i).and_then(|x| match x.v {
                V::Int(n) => Some(n),
                _ => None,
            })
        };
        let text = |v: String| Ok(TV::with(V::Str(v.into()), l.clone()));
        let boolean = |b: bool| Ok(TV::with(V::Bool(b), l.clone()));
        match name {
            "upper" => text(s.to_uppercase()),
            "lower" | "casefold" => text(s.to_lowercase()),
            "swapcase" => text(
                s.chars()
                    .map(|c| {
                        if c.is_uppercase() {
                            c.to_lowercase().collect::<String>()
                        } else {
                            c.to_uppercase().collect()
                        }
                    })
                    .collect(),
            ),
            "title" => {
                let mut out = String::new();
                let mut prev_cased = false;
                for c in s.chars() {
                    if prev_cased {
                        out.extend(c.to_lowercase());
                    } else {
                        out.extend(c.to_uppercase());
                    }
                    prev_cased = c.is_alphabetic();
                }
                text(out)
            }
            "capitalize" => {
                let mut cs = s.chars();
                text(match cs.next() {
                    Some(c) => c.to_uppercase().chain(cs.flat_map(char::to_lowercase)).collect(),
                    None => String::new(),
                })
            }
            "strip" | "lstrip" | "rstrip" => {
                let chars: Option<Vec<char>> = sarg(0).map(|c| c.chars().collect());
                let pred = |c: char| match &chars {
                    Some(set) => set.contains(&c),
                    None => c.is_whitespace(),
                };
                text(match name {
                    "strip" => s.trim_matches(pred).to_string(),
                    "lstrip" => s.trim_start_matches(pred).to_string(),
                    _ => s.trim_end_matches(pred).to_string(),
                })
            }
            "replace" => {
                let (Some(old), Some(new)) = (sarg(0), sarg(1)) else {
                    return self.raise("TypeError", "replace() arguments must be str");
                };
                text(match iarg(2) {
                    Some(n) if n >= 0 => s.replacen(&old, &new, n as usize),
                    _ => s.replace(&old, &new),
                })
            }
            "split" | "rsplit" => {
                let sep = sarg(0).or_else(|| {
                    kw.iter().find(|(k, _)| k == "sep").and_then(|(_, v)| match &v.v {
                        V::Str(t) => Some(t.to_string()),
                        _ => None,
                    })
                });
                let maxsplit = iarg(1)
                    .or_else(|| {
                        kw.iter().find(|(k, _)| k == "maxsplit").and_then(|(_, v)| match v.v {
                            V::Int(n) => Some(n),
                            _ => None,
                        })
                    })
                    .unwrap_or(-1);
                let parts: Vec<String> = match (&sep, maxsplit) {
                    (Some(sep), _) if sep.is_empty() => return self.raise("ValueError", "empty separator"),
                    (Some(sep), n) if n < 0 => s.split(sep.as_str()).map(str::to_string).collect(),
                    (Some(sep), n) if name == "split" => {
                        s.splitn(n as usize + 1, sep.as_str()).map(str::to_string).collect()
                    }
                    (Some(sep), n) => {
                        let mut v: Vec<String> = s.rsplitn(n as usize + 1, sep.as_str()).map(str::to_string).collect();
                        v.reverse();
                        v
                    }
                    (None, n) if n < 0 => s.split_whitespace().map(str::to_string).collect(),
                    (None, _) => return self.subset("whitespace split with maxsplit"),
                };
                Ok(TV::list(
                    parts
                        .into_iter()
                        .map(|p| TV::with(V::Str(p.into()), l.clone()))
                        .collect(),
                ))
            }
            "splitlines" => Ok(TV::list(
                s.lines().map(|p| TV::with(V::Str(p.into()), l.clone())).collect(),
            )),
            "join" => {
                let Some(it) = pos.first() else {
                    return self.raise("TypeError", "join() takes one argument");
                };
                let mut parts = Vec::new();
                for x in self.iterate(it)? {
                    match &x.v {
                        V::Str(t) => parts.push(t.to_string()),
                        _ => {
                            return self.raise(
                                "TypeError",
                                format!("sequence item: expected str instance, {} found", x.type_name()),
                            )
                        }
                    }
                }
                text(parts.join(s))
            }
            "format" => {
                let parts = match parse_brace_format(s) {
                    Ok(p) => p,
                    Err(m) => return self.raise("ValueError", m),
                };
                let mut out = String::new();
                for p in parts {
                    match p {
                        BracePart::Text(t) => out.push_str(&t),
                        BracePart::Field {
                            arg,
                            accessors,
                            conversion,
                            spec,
                        } => {
                            let found = match &arg {
                                FieldArg::Index(i) => pos.get(*i).cloned(),
                                FieldArg::Name(n) => kw.iter().find(|(k, _)| k == n).map(|(_, v)| v.clone()),
                            };
                            let Some(mut v) = found else {
                                return self.raise("IndexError", "format field has no argument");
                            };
                            for a in &accessors {
                                v = match a {
                                    Accessor::Attr(n) => self.getattr(&v, n)?,
                                    Accessor::Item(k) => {
                                        let key = match k.parse::<i64>() {
                                            Ok(i) => TV::new(V::Int(i)),
                                            Err(_) => TV::str(k),
                                        };
                                        self.get_item(&v, &key)?
                                    }
                                };
                            }
                            match format_spec(&convert(&v, conversion), &spec) {
                                Ok(t) => out.push_str(&t),
                                Err(m) => return self.raise("ValueError", m),
                            }
                        }
                    }
                }
                text(out)
            }
            "startswith" | "endswith" => {
                let cands: Vec<String> = match pos.first().map(|x| &x.v) {
                    Some(V::Str(t)) => vec![t.to_string()],
                    Some(V::Tuple(xs)) => xs.iter().map(to_str).collect(),
                    _ => return self.raise("TypeError", format!("{name} arg must be str or tuple")),
                };
                boolean(cands.iter().any(|c| {
                    if name == "startswith" {
                        s.starts_with(c.as_str())
                    } else {
                        s.ends_with(c.as_str())
                    }
                }))
            }
            "find" | "rfind" | "index" | "count" => {
                let Some(sub) = sarg(0) else {
                    return self.raise("TypeError", "must be str");
                };
                let found = if name == "rfind" { s.rfind(&sub) } else { s.find(&sub) };
                let v = match name {
                    "count" => s.matches(&sub).count() as i64,
                    "index" => match found {
                        Some(b) => s[..b].chars().count() as i64,
                        None => return self.raise("ValueError", "substring not found"),
                    },
                    _ => found.map_or(-1, |b| s[..b].chars().count() as i64),
                };
                Ok(TV::with(V::Int(v), l))
            }
            "zfill" | "ljust" | "rjust" | "center" => {
                let width = iarg(0).unwrap_or(0).max(0) as usize;
                let fill = sarg(1).and_then(|f| f.chars().next()).unwrap_or(' ');
                let n = s.chars().count();
                if n >= width {
                    return text(s.to_string());
                }
                let pad = width - n;
                let fills = |k: usize| fill.to_string().repeat(k);
                text(match name {
                    "zfill" => {
                        let (sign, digits) = match s.strip_prefix(['-', '+']) {
                            Some(d) => (&s[..1], d),
                            None => ("", s),
                        };
                        format!("{sign}{}{digits}", "0".repeat(pad))
                    }
                    "ljust" => format!("{s}{}", fills(pad)),
                    "rjust" => format!("{}{s}", fills(pad)),
                    _ => {
                        let left = pad / 2 + (pad & width & 1);
                        format!("{}{s}{}", fills(left), fills(pad - left))
                    }
                })
            }
            "isdigit" | "isnumeric" => boolean(!s.is_empty() && s.chars().all(|c| c.is_ascii_digit())),
            "isalpha" => boolean(!s.is_empty() && s.chars().all(char::is_alphabetic)),
            "isalnum" => boolean(!s.is_empty() && s.chars().all(char::is_alphanumeric)),
            "isspace" => boolean(!s.is_empty() && s.chars().all(char::is_whitespace)),
            "islower" => boolean(s.chars().any(char::is_lowercase) && !s.chars().any(char::is_uppercase)),
            "isupper" => boolean(s.chars().any(char::is_uppercase) && !s.chars().any(char::is_lowercase)),
            _ => self.subset(format!("str.{name}")),
        }
    }

    fn list_method(
        &mut self,
        recv: &TV,
        xs: &Rc<RefCell<Vec<TV>>>,
        name: &str,
        pos: Vec<TV>,
        kw: Vec<(String, TV)>,
    ) -> R<TV> {
        let arg = pos.first().cloned();
        match name {
            "append" => {
                xs.borrow_mut().push(arg.unwrap_or_else(TV::none));
                Ok(TV::none())
            }
            "extend" => {
                let items = self.iterate(&arg.unwrap_or_else(|| TV::list(Vec::new())))?;
                xs.borrow_mut().extend(items);
                Ok(TV::none())
            }
            "insert" => {
                let (Some(TV { v: V::Int(i), .. }), Some(x)) = (pos.first(), pos.get(1)) else {
                    return self.raise("TypeError", "insert() expects an index and a value");
                };
                let n = xs.borrow().len() as i64;
                let k = if *i < 0 { (i + n).max(0) } else { (*i).min(n) };
                xs.borrow_mut().insert(k as usize, x.clone());
                Ok(TV::none())
            }
            "pop" => {
                let n = xs.borrow().len();
                if n == 0 {
                    return self.raise("IndexError", "pop from empty list");
                }
                let k = match &arg {
                    Some(i) => self.index_of(i, n)?,
                    None => n - 1,
                };
                Ok(xs.borrow_mut().remove(k))
            }
            "remove" | "index" | "count" => {
                let x = arg.unwrap_or_else(TV::none);
                let found: Vec<usize> = xs
                    .borrow()
                    .iter()
                    .enumerate()
                    .filter(|(_, y)| py_eq(&x, y))
                    .map(|(i, _)| i)
                    .collect();
                match (name, found.first()) {
                    ("count", _) => Ok(TV::with(V::Int(found.len() as i64), x.l.union(&recv.l))),
                    ("index", Some(&i)) => Ok(TV::with(V::Int(i as i64), x.l.union(&recv.l))),
                    ("remove", Some(&i)) => {
                        xs.borrow_mut().remove(i);
                        Ok(TV::none())
                    }
                    _ => self.raise("ValueError", "value is not in list"),
                }
            }
            "sort" => {
                let items = xs.borrow().clone();
                let key = kw.iter().find(|(k, _)| k == "key").map(|(_, v)| v.clone());
                let reverse = kw.iter().any(|(k, v)| k == "reverse" && v.truthy());
                let sorted = self.sort(items, key, reverse)?;
                *xs.borrow_mut() = sorted;
                Ok(TV::none())
            }
            "reverse" => {
                xs.borrow_mut().reverse();
                Ok(TV::none())
            }
            "copy" => Ok(TV::list(xs.borrow().clone()).labeled(&recv.l)),
            "clear" => {
                xs.borrow_mut().clear();
                Ok(TV::none())
            }
            _ => self.subset(format!("list.{name}")),
        }
    }

    fn dict_method(
        &mut self,
        recv: &TV,
        d: &Rc<RefCell<Dict>>,
        name: &str,
        pos: Vec<TV>,
        kw: Vec<(String, TV)>,
    ) -> R<TV> {
        let key_of = |this: &Self, x: &TV| -> R<Key> {
            x.key().ok_or_else(|| {
                this.raise::<()>("TypeError", format!("unhashable type: '{}'", x.type_name()))
                    .unwrap_err()
            })
        };
        match name {
            "get" => {
                let k = pos.first().cloned().unwrap_or_else(TV::none);
                let key = key_of(self, &k)?;
                let found = d.borrow().get(&key).cloned();
                Ok(match found {
                    Some(v) => v.labeled(&recv.l),
                    None => pos.get(1).cloned().unwrap_or_else(TV::none),
                })
            }
            "keys" => Ok(TV::list(d.borrow().entries.iter().map(|(k, _)| k.clone()).collect()).labeled(&recv.l)),
            "values" => Ok(TV::list(d.borrow().entries.iter().map(|(_, v)| v.clone()).collect()).labeled(&recv.l)),
            "items" => Ok(TV::list(
                d.borrow()
                    .entries
                    .iter()
                    .map(|(k, v)| TV::tuple(vec![k.clone(), v.clone()]))
                    .collect(),
            )
            .labeled(&recv.l)),
            "setdefault" => {
                let k = pos.first().cloned().unwrap_or_else(TV::none);
                let key = key_of(self, &k)?;
                let existing = d.borrow().get(&key).cloned();
                Ok(match existing {
                    Some(v) => v,
                    None => {
                        let v = pos.get(1).cloned().unwrap_or_else(TV::none);
                        d.borrow_mut().insert(key, k, v.clone());
                        v
                    }
                })
            }
            "update" => {
                if let Some(other) = pos.first() {
                    match &other.v {
                        V::Dict(o) => {
                            let entries = o.borrow().entries.clone();
                            for (k, v) in entries {
                                let key = key_of(self, &k)?;
                                d.borrow_mut().insert(key, k, v);
                            }
                        }
                        _ => return self.subset("dict.update from a non-dict"),
                    }
                }
                for (k, v) in kw {
                    let kv = TV::str(&k);
                    d.borrow_mut().insert(kv.key().expect("str key"), kv, v);
                }
                Ok(TV::none())
            }
            "pop" => {
                let k = pos.first().cloned().unwrap_or_else(TV::none);
                let key = key_of(self, &k)?;
                let removed = d.borrow_mut().remove(&key);
                match (removed, pos.get(1)) {
                    (Some(v), _) => Ok(v),
                    (None, Some(default)) => Ok(default.clone()),
                    (None, None) => self.raise("KeyError", repr(&k)),
                }
            }
            "copy" => {
                let mut c = Dict::default();
                for (k, v) in d.borrow().entries.iter() {
                    c.insert(k.key().expect("dict key"), k.clone(), v.clone());
                }
                Ok(TV::with(V::Dict(Rc::new(RefCell::new(c))), recv.l.clone()))
            }
            "clear" => {
                *d.borrow_mut() = Dict::default();
                Ok(TV::none())
            }
            _ => self.subset(format!("dict.{name}")),
        }
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

fn cell_value(cell: &str) -> V {
    if let Ok(i) = cell.parse::<i64>() {
        return V::Int(i);
    }
    if cell.chars().any(|c| c.is_ascii_digit()) {
        if let Ok(f) = cell.parse::<f64>() {
            return V::Float(f);
        }
    }
    V::Str(cell.into())
}

#[derive(Clone, Copy)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn f(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

fn num(v: &V) -> Option<Num> {
    match v {
        V::Int(i) => Some(Num::I(*i)),
        V::Bool(b) => Some(Num::I(i64::from(*b))),
        V::Float(f) => Some(Num::F(*f)),
        _ => None,
    }
}

fn is_same(a: &TV, b: &TV) -> bool {
    match (&a.v, &b.v) {
        (V::None, V::None) => true,
        (V::Bool(x), V::Bool(y)) => x == y,
        (V::List(x), V::List(y)) => Rc::ptr_eq(x, y),
        (V::Dict(x), V::Dict(y)) | (V::Set(x), V::Set(y)) => Rc::ptr_eq(x, y),
        (V::Instance(x), V::Instance(y)) => Rc::ptr_eq(x, y),
        (V::Class(x), V::Class(y)) => Rc::ptr_eq(x, y),
        (V::Func(x), V::Func(y)) => Rc::ptr_eq(x, y),
        (V::None, _) | (_, V::None) => false,
        _ => py_eq(a, b),
    }
}

fn py_eq(a: &TV, b: &TV) -> bool {
    match (&a.v, &b.v) {
        (V::None, V::None) => true,
        (V::Str(x), V::Str(y)) => x == y,
        (V::List(x), V::List(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q))
        }
        (V::Tuple(x), V::Tuple(y)) => x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q)),
        (V::Dict(x), V::Dict(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len()
                && x.entries
                    .iter()
                    .all(|(k, v)| k.key().and_then(|k| y.get(&k)).is_some_and(|w| py_eq(v, w)))
        }
        (V::Set(x), V::Set(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len()
                && x.entries
                    .iter()
                    .all(|(k, _)| k.key().is_some_and(|k| y.get(&k).is_some()))
        }
        (V::Instance(x), V::Instance(y)) => Rc::ptr_eq(x, y),
        (V::Class(x), V::Class(y)) => Rc::ptr_eq(x, y),
        (V::Func(x), V::Func(y)) => Rc::ptr_eq(x, y),
        (V::Logger, V::Logger) => true,
        _ => match (num(&a.v), num(&b.v)) {
            (Some(Num::I(x)), Some(Num::I(y))) => x == y,
            (Some(x), Some(y)) => x.f() == y.f(),
            _ => false,
        },
    }
}

fn py_cmp(a: &TV, b: &TV) -> Option<Ordering> {
    match (&a.v, &b.v) {
        (V::Str(x), V::Str(y)) => Some(x.cmp(y)),
        (V::List(x), V::List(y)) => seq_cmp(&x.borrow(), &y.borrow()),
        (V::Tuple(x), V::Tuple(y)) => seq_cmp(x, y),
        _ => match (num(&a.v), num(&b.v)) {
            (Some(Num::I(x)), Some(Num::I(y))) => Some(x.cmp(&y)),
            (Some(x), Some(y)) => x.f().partial_cmp(&y.f()),
            _ => None,
        },
    }
}

fn seq_cmp(x: &[TV], y: &[TV]) -> Option<Ordering> {
    for (p, q) in x.iter().zip(y) {
        if !py_eq(p, q) {
            return py_cmp(p, q);
        }
    }
    Some(x.len().cmp(&y.len()))
}
