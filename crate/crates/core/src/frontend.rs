//! Project scanning and function-unit extraction.
//!
//! A project is scanned into [`SourceFile`]s, each file is parsed and split
//! into one [`FunctionUnit`] per function or method definition plus a
//! synthetic `__main__` unit holding the module-level statements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Component, Path};
use std::str::FromStr;
use std::sync::Arc;

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::diag::{Diagnostic, DiagnosticKind};
use crate::syntax::ast::{ClassDef, Expr, ExprKind, FunctionDef, ParamKind, Span, Stmt, StmtKind};
use crate::syntax::{unparse, LanguageAdapter, ParseError};

/// Qualified name of the synthetic unit holding module-level code.
pub const MODULE_UNIT: &str = "__main__";

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("project root {0} does not exist or is not a directory")]
    RootMissing(String),
    #[error("invalid exclusion glob {pattern:?}: {message}")]
    BadGlob { pattern: String, message: String },
}

/// Names that identify logger calls: `<receiver>.<method>(...)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggerApi {
    /// Last segment of the receiver expression (`log`, `self.logger`, ...).
    pub receivers: Vec<String>,
    pub methods: Vec<String>,
}

impl Default for LoggerApi {
    fn default() -> Self {
        Self {
            receivers: ["log", "logger", "logging", "LOG", "LOGGER", "_log", "_logger"]
                .map(String::from)
                .to_vec(),
            methods: [
                "debug",
                "info",
                "warning",
                "warn",
                "error",
                "critical",
                "exception",
                "fatal",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl LoggerApi {
    /// Returns the logger method when `callee` (dotted text) is a logger call.
    pub fn method_of<'a>(&self, callee: &'a str) -> Option<&'a str> {
        let (recv, method) = callee.rsplit_once('.')?;
        let recv_last = recv.rsplit('.').next().unwrap_or(recv);
        (self.receivers.iter().any(|r| r == recv_last) && self.methods.iter().any(|m| m == method)).then_some(method)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Extensions without the leading dot.
    pub extensions: Vec<String>,
    /// Globs matched against project-relative paths.
    pub exclude: Vec<String>,
    pub logger: LoggerApi,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            extensions: vec!["py".into()],
            exclude: Vec::new(),
            logger: LoggerApi::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
    pub language: String,
}

#[derive(Debug, Default)]
pub struct ScanOutcome {
    pub files: Vec<SourceFile>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Normalizes a path to forward slashes with `.` and `..` resolved lexically.
/// Returns `None` when the path escapes its root.
pub fn normalize_path(p: &str) -> Option<String> {
    let unified = p.replace('\\', "/");
    let mut parts: Vec<&str> = Vec::new();
    for comp in Path::new(&unified).components() {
        match comp {
            Component::Normal(s) => parts.push(s.to_str()?),
            Component::ParentDir => {
                parts.pop()?;
            }
            Component::CurDir | Component::RootDir | Component::Prefix(_) => {}
        }
    }
    Some(parts.join("/"))
}

fn build_globset(patterns: &[String]) -> Result<GlobSet, ScanError> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let g = Glob::new(p).map_err(|e| ScanError::BadGlob {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        b.add(g);
    }
    b.build().map_err(|e| ScanError::BadGlob {
        pattern: patterns.join(","),
        message: e.to_string(),
    })
}

/// Collects matching source files under `root`, sorted by path.
pub fn scan_project(root: &Path, config: &ScanConfig, adapter: &dyn LanguageAdapter) -> Result<ScanOutcome, ScanError> {
    if !root.is_dir() {
        return Err(ScanError::RootMissing(root.display().to_string()));
    }
    let excludes = build_globset(&config.exclude)?;
    let mut out = ScanOutcome::default();
    let walker = WalkDir::new(root).follow_links(false).sort_by_file_name();
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e
                    .path()
                    .and_then(|p| p.strip_prefix(root).ok())
                    .map(|p| p.display().to_string());
                let mut d = Diagnostic::new(DiagnosticKind::Io, e.to_string());
                d.path = path;
                out.diagnostics.push(d);
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        let Some(rel) = rel.to_str().and_then(normalize_path) else {
            out.diagnostics.push(
                Diagnostic::new(DiagnosticKind::Io, "path is not valid UTF-8")
                    .in_file(entry.path().display().to_string()),
            );
            continue;
        };
        let ext_ok = Path::new(&rel)
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| config.extensions.iter().any(|x| x == e));
        if !ext_ok || excludes.is_match(&rel) {
            continue;
        }
        match std::fs::read(entry.path()) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(content) => out.files.push(SourceFile {
                    path: rel,
                    content,
                    language: adapter.language().to_string(),
                }),
                Err(_) => out
                    .diagnostics
                    .push(Diagnostic::new(DiagnosticKind::Io, "file is not valid UTF-8").in_file(rel)),
            },
            Err(e) => out
                .diagnostics
                .push(Diagnostic::new(DiagnosticKind::Io, e.to_string()).in_file(rel)),
        }
    }
    out.files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Identity of a function unit: `path::qualified_name@start_line`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionId {
    pub path: String,
    pub qualified_name: String,
    pub start_line: u32,
}

impl FunctionId {
    pub fn new(path: impl Into<String>, qualified_name: impl Into<String>, start_line: u32) -> Self {
        Self {
            path: path.into(),
            qualified_name: qualified_name.into(),
            start_line,
        }
    }

    pub fn module_unit(path: impl Into<String>) -> Self {
        Self::new(path, MODULE_UNIT, 1)
    }

    pub fn is_module_unit(&self) -> bool {
        self.qualified_name == MODULE_UNIT
    }

    /// Last component of the qualified name.
    pub fn short_name(&self) -> &str {
        self.qualified_name.rsplit('.').next().unwrap_or(&self.qualified_name)
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}@{}", self.path, self.qualified_name, self.start_line)
    }
}

impl FromStr for FunctionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, line) = s
            .rsplit_once('@')
            .ok_or_else(|| format!("missing '@line' in function id {s:?}"))?;
        let (path, qn) = head
            .rsplit_once("::")
            .ok_or_else(|| format!("missing '::' in function id {s:?}"))?;
        let start_line = line
            .parse()
            .map_err(|_| format!("bad line number in function id {s:?}"))?;
        Ok(Self::new(path, qn, start_line))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    /// Rendered annotation, `None` when undeclared.
    pub declared_type: Option<String>,
    pub kind: ParamKind,
    pub has_default: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImportTarget {
    Project { path: String },
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImportBinding {
    /// Name bound in the importing scope.
    pub name: String,
    /// Dotted module the binding comes from.
    pub module: String,
    /// Imported member for `from m import x` when `x` is not itself a module.
    pub member: Option<String>,
    pub target: ImportTarget,
}

impl ImportBinding {
    pub fn project_path(&self) -> Option<&str> {
        match &self.target {
            ImportTarget::Project { path } => Some(path),
            ImportTarget::External => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionMetadata {
    pub id: FunctionId,
    pub params: Vec<ParamInfo>,
    /// Rendered returned expressions, one per `return <expr>`.
    pub returns: Vec<String>,
    pub imports: Vec<ImportBinding>,
    pub class_name: Option<String>,
    /// Lines covered by the unit (the whole file for `__main__`).
    pub span: Span,
    /// Qualified name of the enclosing function when nested.
    pub enclosing: Option<String>,
    /// Names of functions and classes defined directly inside this unit.
    pub local_defs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitBody {
    Function(Arc<FunctionDef>),
    Module(Arc<Vec<Stmt>>),
}

impl UnitBody {
    pub fn statements(&self) -> &[Stmt] {
        match self {
            UnitBody::Function(f) => &f.body,
            UnitBody::Module(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionUnit {
    pub metadata: FunctionMetadata,
    pub body: UnitBody,
}

/// Known project files, used to resolve import statements.
#[derive(Debug, Clone, Default)]
pub struct ModuleIndex {
    paths: BTreeSet<String>,
}

impl ModuleIndex {
    pub fn new<I, S>(paths: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            paths: paths.into_iter().map(Into::into).collect(),
        }
    }

    pub fn from_files(files: &[SourceFile]) -> Self {
        Self::new(files.iter().map(|f| f.path.clone()))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.paths.contains(path)
    }

    fn lookup(&self, base: &str, dotted: &str) -> Option<String> {
        let rel = dotted.replace('.', "/");
        let prefix = if base.is_empty() {
            String::new()
        } else {
            format!("{base}/")
        };
        [format!("{prefix}{rel}.py"), format!("{prefix}{rel}/__init__.py")]
            .into_iter()
            .find(|c| self.paths.contains(c))
    }

    /// Resolves a dotted module imported from `from_path`, trying the project
    /// root first and then the importer's directory. `level` > 0 is a
    /// relative import.
    pub fn resolve(&self, dotted: &str, from_path: &str, level: u32) -> Option<String> {
        let dir = parent_dir(from_path);
        if level > 0 {
            let mut base = dir;
            for _ in 1..level {
                base = parent_dir(&base);
            }
            if dotted.is_empty() {
                let init = if base.is_empty() {
                    "__init__.py".to_string()
                } else {
                    format!("{base}/__init__.py")
                };
                return self.paths.contains(&init).then_some(init);
            }
            return self.lookup(&base, dotted);
        }
        self.lookup("", dotted).or_else(|| {
            if dir.is_empty() {
                None
            } else {
                self.lookup(&dir, dotted)
            }
        })
    }

    /// Dotted module name under which `path` is importable from the root.
    pub fn module_name(path: &str) -> String {
        let trimmed = path.strip_suffix(".py").unwrap_or(path);
        let trimmed = trimmed.strip_suffix("/__init__").unwrap_or(trimmed);
        trimmed.replace('/', ".")
    }
}

fn parent_dir(path: &str) -> String {
    match path.rsplit_once('/') {
        Some((d, _)) => d.to_string(),
        None => String::new(),
    }
}

/// Import bindings introduced by one statement.
fn import_bindings(stmt: &Stmt, path: &str, modules: &ModuleIndex) -> Vec<ImportBinding> {
    let target_of = |resolved: Option<String>| match resolved {
        Some(path) => ImportTarget::Project { path },
        None => ImportTarget::External,
    };
    match &stmt.kind {
        StmtKind::Import(aliases) => aliases
            .iter()
            .map(|a| {
                // `import a.b` binds `a`; `import a.b as c` binds the full module.
                let module = if a.asname.is_some() {
                    a.name.clone()
                } else {
                    a.bound_name().to_string()
                };
                ImportBinding {
                    name: a.bound_name().to_string(),
                    target: target_of(modules.resolve(&module, path, 0)),
                    module,
                    member: None,
                }
            })
            .collect(),
        StmtKind::ImportFrom { module, names, level } => {
            let base = module.clone().unwrap_or_default();
            names
                .iter()
                .filter(|a| a.name != "*")
                .map(|a| {
                    let sub = if base.is_empty() {
                        a.name.clone()
                    } else {
                        format!("{base}.{}", a.name)
                    };
                    if let Some(p) = modules.resolve(&sub, path, *level) {
                        ImportBinding {
                            name: a.bound_name().to_string(),
                            module: sub,
                            member: None,
                            target: ImportTarget::Project { path: p },
                        }
                    } else {
                        ImportBinding {
                            name: a.bound_name().to_string(),
                            target: target_of(modules.resolve(&base, path, *level)),
                            module: base.clone(),
                            member: Some(a.name.clone()),
                        }
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Visits statements of one scope, descending into compound statements but
/// not into nested function or class bodies.
pub fn walk_scope<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { body, orelse, .. }
            | StmtKind::For { body, orelse, .. }
            | StmtKind::While { body, orelse, .. } => {
                walk_scope(body, f);
                walk_scope(orelse, f);
            }
            StmtKind::With { body, .. } => walk_scope(body, f),
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => {
                walk_scope(body, f);
                for h in handlers {
                    walk_scope(&h.body, f);
                }
                walk_scope(orelse, f);
                walk_scope(finalbody, f);
            }
            _ => {}
        }
    }
}

/// Scope facts needed by [`extract_metadata`] that come from outside the unit.
#[derive(Debug, Clone, Default)]
pub struct UnitContext {
    pub qualified_name: String,
    pub class_name: Option<String>,
    pub enclosing: Option<String>,
    /// Imports visible from the enclosing module.
    pub module_imports: Vec<ImportBinding>,
}

/// Extracts metadata for a function definition or the module body.
pub fn extract_metadata(
    body: &UnitBody,
    path: &str,
    ctx: &UnitContext,
    modules: &ModuleIndex,
    last_line: u32,
) -> FunctionMetadata {
    let (params, span, stmts): (Vec<ParamInfo>, Span, &[Stmt]) = match body {
        UnitBody::Function(def) => (
            def.params
                .iter()
                .map(|p| ParamInfo {
                    name: p.name.clone(),
                    declared_type: p.annotation.as_ref().map(unparse),
                    kind: p.kind,
                    has_default: p.default.is_some(),
                })
                .collect(),
            def.span,
            &def.body,
        ),
        UnitBody::Module(stmts) => (Vec::new(), Span::new(1, last_line.max(1)), stmts),
    };
    let mut returns = Vec::new();
    let mut imports = ctx.module_imports.clone();
    let mut local_defs = Vec::new();
    let is_module = matches!(body, UnitBody::Module(_));
    walk_scope(stmts, &mut |s| match &s.kind {
        StmtKind::Return(Some(e)) if !is_none_literal(e) => returns.push(unparse(e)),
        StmtKind::Import(_) | StmtKind::ImportFrom { .. } if !is_module => {
            imports.extend(import_bindings(s, path, modules))
        }
        StmtKind::FunctionDef(d) => local_defs.push(d.name.clone()),
        StmtKind::ClassDef(c) => local_defs.push(c.name.clone()),
        _ => {}
    });
    let qualified_name = if is_module {
        MODULE_UNIT.to_string()
    } else {
        ctx.qualified_name.clone()
    };
    FunctionMetadata {
        id: FunctionId::new(path, qualified_name, span.start_line),
        params,
        returns,
        imports,
        class_name: ctx.class_name.clone(),
        span,
        enclosing: ctx.enclosing.clone(),
        local_defs,
    }
}

fn is_none_literal(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Const(crate::syntax::ast::Constant::None))
}

/// Module-level import bindings of a parsed file.
pub fn module_imports(stmts: &[Stmt], path: &str, modules: &ModuleIndex) -> Vec<ImportBinding> {
    let mut imports = Vec::new();
    walk_scope(stmts, &mut |s| imports.extend(import_bindings(s, path, modules)));
    imports
}

/// Parses one file into its function units: every definition plus the
/// `__main__` unit, ordered by start line.
pub fn parse_file(
    file: &SourceFile,
    adapter: &dyn LanguageAdapter,
    modules: &ModuleIndex,
) -> Result<Vec<FunctionUnit>, ParseError> {
    let module = adapter.parse_module(&file.path, &file.content)?;
    let imports = module_imports(&module.body, &file.path, modules);
    let mut units = Vec::new();
    let main_body = UnitBody::Module(Arc::new(module.body.clone()));
    let main_ctx = UnitContext {
        qualified_name: MODULE_UNIT.into(),
        module_imports: imports.clone(),
        ..Default::default()
    };
    units.push(FunctionUnit {
        metadata: extract_metadata(&main_body, &file.path, &main_ctx, modules, module.last_line),
        body: main_body,
    });
    let mut collector = DefCollector {
        path: &file.path,
        modules,
        imports: &imports,
        last_line: module.last_line,
        units: &mut units,
    };
    collector.scope(&module.body, "", None, None);
    units.sort_by(|a, b| {
        (a.metadata.id.start_line, &a.metadata.id.qualified_name)
            .cmp(&(b.metadata.id.start_line, &b.metadata.id.qualified_name))
    });
    Ok(units)
}

struct DefCollector<'a> {
    path: &'a str,
    modules: &'a ModuleIndex,
    imports: &'a [ImportBinding],
    last_line: u32,
    units: &'a mut Vec<FunctionUnit>,
}

impl DefCollector<'_> {
    /// `prefix` is the qualified-name prefix, `class_name` the innermost class,
    /// `enclosing` the innermost enclosing function.
    fn scope(&mut self, stmts: &[Stmt], prefix: &str, class_name: Option<&str>, enclosing: Option<&str>) {
        let mut defs: Vec<&Arc<FunctionDef>> = Vec::new();
        let mut classes: Vec<&Arc<ClassDef>> = Vec::new();
        walk_scope(stmts, &mut |s| match &s.kind {
            StmtKind::FunctionDef(d) => defs.push(d),
            StmtKind::ClassDef(c) => classes.push(c),
            _ => {}
        });
        for def in defs {
            let qn = join_name(prefix, &def.name);
            let ctx = UnitContext {
                qualified_name: qn.clone(),
                class_name: class_name.map(String::from),
                enclosing: enclosing.map(String::from),
                module_imports: self.imports.to_vec(),
            };
            let body = UnitBody::Function(def.clone());
            let metadata = extract_metadata(&body, self.path, &ctx, self.modules, self.last_line);
            self.units.push(FunctionUnit { metadata, body });
            self.scope(&def.body, &qn, None, Some(&qn));
        }
        for class in classes {
            let qn = join_name(prefix, &class.name);
            self.scope(&class.body, &qn, Some(&class.name), enclosing);
        }
    }
}

fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Parses every file, collecting per-file failures instead of aborting.
pub fn parse_project(
    files: &[SourceFile],
    adapter: &dyn LanguageAdapter,
) -> (BTreeMap<String, Vec<FunctionUnit>>, Vec<ParseError>) {
    use rayon::prelude::*;
    let modules = ModuleIndex::from_files(files);
    let results: Vec<(String, Result<Vec<FunctionUnit>, ParseError>)> = files
        .par_iter()
        .map(|f| (f.path.clone(), parse_file(f, adapter, &modules)))
        .collect();
    let mut units = BTreeMap::new();
    let mut failures = Vec::new();
    for (path, r) in results {
        match r {
            Ok(u) => {
                units.insert(path, u);
            }
            Err(e) => failures.push(e),
        }
    }
    (units, failures)
}
