use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::format::SlotKind;
use crate::frontend::FunctionId;
use crate::syntax::ast::ParamKind;

pub type NodeId = u32;

/// One argument expression at a call site, as written in source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallArg {
    /// Keyword name for `k=v` arguments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
    /// `*args` / `**kwargs` spreading.
    #[serde(default, skip_serializing_if = "is_false")]
    pub spread: bool,
    pub text: String,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallInfo {
    /// Dotted callee text (`helpers.load`, `self.score`, `Model`).
    pub callee: String,
    pub args: Vec<CallArg>,
    /// Receiver text for method calls on a value (not on a module alias).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<String>,
}

impl CallInfo {
    pub fn arity(&self) -> u32 {
        self.args.len() as u32
    }

    /// Last segment of the callee.
    pub fn method_name(&self) -> &str {
        self.callee.rsplit('.').next().unwrap_or(&self.callee)
    }
}

/// A piece of a concatenated or interpolated message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "piece", rename_all = "snake_case")]
pub enum TemplatePiece {
    Text { text: String },
    Slot { kind: SlotKind },
}

/// How a log statement builds its message, as recorded at build time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TemplateSource {
    /// Literal message printed as-is.
    Literal { text: String },
    /// printf-style format filled from arguments.
    Printf { format: String },
    /// `str.format` template.
    Brace { format: String },
    /// Interpolated literal or `+` concatenation, already split into pieces.
    Pieces { pieces: Vec<TemplatePiece> },
    /// Message is a single computed value with no recoverable constant text.
    Whole,
    /// Message built by a construct that cannot be templated.
    Opaque,
}

impl TemplateSource {
    /// Human-readable template text, with `{}` marking slots for piece-based
    /// forms.
    pub fn display(&self) -> String {
        match self {
            TemplateSource::Literal { text } => text.clone(),
            TemplateSource::Printf { format } | TemplateSource::Brace { format } => format.clone(),
            TemplateSource::Pieces { pieces } => pieces
                .iter()
                .map(|p| match p {
                    TemplatePiece::Text { text } => text.replace('{', "{{").replace('}', "}}"),
                    TemplatePiece::Slot { .. } => "{}".to_string(),
                })
                .collect(),
            TemplateSource::Whole => "{}".to_string(),
            TemplateSource::Opaque => "<opaque>".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogInfo {
    /// Logger method (`info`, `warning`, ...).
    pub method: String,
    pub call: CallInfo,
    pub template: TemplateSource,
    pub slot_count: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NodeKind {
    Parameter {
        index: u32,
        param_kind: ParamKind,
    },
    /// `version == 0` is the incoming value of a free (global or enclosing)
    /// variable.
    VariableVersion {
        version: u32,
    },
    Constant {
        /// String value when the constant is a plain string literal.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        literal: Option<String>,
    },
    CallSite(CallInfo),
    LogStatement(LogInfo),
    Return,
    SourceRead {
        call: CallInfo,
        /// Literal key argument; `None` when it must be resolved by tracing
        /// the key argument edge.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_key: Option<String>,
    },
    /// Values leaving the unit other than through `return`: module globals,
    /// variables captured by nested definitions, and mutated parameters
    /// (`param` set).
    Export {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        param: Option<u32>,
    },
    /// Construct outside the analyzed subset; consumes every in-scope variable.
    Opaque {
        construct: String,
    },
}

/// Discriminant of [`NodeKind`], handy for filters and counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeTag {
    Parameter,
    VariableVersion,
    Constant,
    CallSite,
    LogStatement,
    Return,
    SourceRead,
    Export,
    Opaque,
}

impl NodeKind {
    pub fn tag(&self) -> NodeTag {
        match self {
            NodeKind::Parameter { .. } => NodeTag::Parameter,
            NodeKind::VariableVersion { .. } => NodeTag::VariableVersion,
            NodeKind::Constant { .. } => NodeTag::Constant,
            NodeKind::CallSite(_) => NodeTag::CallSite,
            NodeKind::LogStatement(_) => NodeTag::LogStatement,
            NodeKind::Return => NodeTag::Return,
            NodeKind::SourceRead { .. } => NodeTag::SourceRead,
            NodeKind::Export { .. } => NodeTag::Export,
            NodeKind::Opaque { .. } => NodeTag::Opaque,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Variable, parameter or callee name; rendered expression for returns.
    pub name: String,
    pub line: u32,
}

impl DfgNode {
    pub fn version(&self) -> Option<u32> {
        match self.kind {
            NodeKind::VariableVersion { version } => Some(version),
            _ => None,
        }
    }

    pub fn arity(&self) -> Option<u32> {
        match &self.kind {
            NodeKind::CallSite(c) | NodeKind::SourceRead { call: c, .. } => Some(c.arity()),
            NodeKind::LogStatement(l) => Some(l.slot_count),
            _ => None,
        }
    }

    /// Sinks anchor pruning: values that reach them leave the unit.
    pub fn is_sink(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::LogStatement(_) | NodeKind::Return | NodeKind::Export { .. }
        )
    }

    /// Nodes where provenance can originate.
    pub fn is_origin(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Parameter { .. }
                | NodeKind::SourceRead { .. }
                | NodeKind::Constant { .. }
                | NodeKind::VariableVersion { version: 0 }
        )
    }
}

/// One field operation between producer and consumer. Fields are string
/// keys or attribute names; lists, tuples and sets are transparent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", content = "field", rename_all = "snake_case")]
pub enum Step {
    /// Consumer is the producer's field (`row["name"]`, `obj.name`).
    Select(String),
    /// Consumer holds the producer at a field (`{"name": v}`, `obj.name = v`).
    Put(String),
    /// Field structure is lost (non-literal keys, rendering to text).
    Reset,
}

/// Field path still wanted from a value, outermost field first. Empty
/// means the whole value.
pub type FieldPath = Vec<String>;

/// Pending field path after walking `steps` backwards from a consumer whose
/// `pending` path is of interest. Paths longer than `max_len` keep their
/// prefix, which widens the query to a whole enclosing field. Returns `None`
/// when the producer cannot contribute.
pub fn path_backward(steps: &[Step], pending: &[String], max_len: usize) -> Option<FieldPath> {
    let mut p: FieldPath = pending.to_vec();
    for step in steps.iter().rev() {
        match step {
            Step::Select(f) => {
                p.insert(0, f.clone());
                p.truncate(max_len.max(1));
            }
            Step::Put(f) => {
                if let Some(first) = p.first() {
                    if first != f {
                        return None;
                    }
                    p.remove(0);
                }
            }
            Step::Reset => p.clear(),
        }
    }
    Some(p)
}

/// Single-field view of [`path_backward`].
pub fn steps_backward(steps: &[Step], pending: Option<&str>) -> Option<Option<String>> {
    let start: Vec<String> = pending.map(String::from).into_iter().collect();
    path_backward(steps, &start, 1).map(|p| p.into_iter().next())
}

/// Which output of the producer the edge carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "port", rename_all = "snake_case")]
pub enum Port {
    /// The produced value.
    Value,
    /// The receiver object after a method call may have mutated it.
    Receiver,
    /// Argument `arg` after the callee may have mutated it.
    ArgOut { arg: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DfgEdge {
    pub from: NodeId,
    pub to: NodeId,
    /// Argument position (call sites) or format slot (log statements).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u32>,
    /// Field operations applied along the edge, producer side first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effect: Vec<Step>,
    pub port: Port,
    /// The consumer receives the producer's value unchanged.
    #[serde(default, skip_serializing_if = "is_false")]
    pub copy: bool,
}

impl DfgEdge {
    pub fn plain(from: NodeId, to: NodeId) -> Self {
        Self {
            from,
            to,
            slot: None,
            effect: Vec::new(),
            port: Port::Value,
            copy: false,
        }
    }

    pub fn with_slot(mut self, slot: u32) -> Self {
        self.slot = Some(slot);
        self
    }
}

/// Data-flow graph of one function unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDfg {
    pub id: FunctionId,
    /// Sorted by id.
    pub nodes: Vec<DfgNode>,
    /// Sorted and deduplicated.
    pub edges: Vec<DfgEdge>,
}

impl FunctionDfg {
    pub fn new(id: FunctionId, mut nodes: Vec<DfgNode>, mut edges: Vec<DfgEdge>) -> Self {
        nodes.sort_by_key(|n| n.id);
        edges.sort();
        edges.dedup();
        Self { id, nodes, edges }
    }

    pub fn node(&self, id: NodeId) -> Option<&DfgNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn entry(&self) -> impl Iterator<Item = &DfgNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Parameter { .. }))
    }

    pub fn sinks(&self) -> impl Iterator<Item = &DfgNode> {
        self.nodes.iter().filter(|n| n.is_sink())
    }

    pub fn parameter(&self, index: u32) -> Option<&DfgNode> {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Parameter { index: i, .. } if i == index))
    }

    pub fn log_statements(&self) -> impl Iterator<Item = (&DfgNode, &LogInfo)> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            NodeKind::LogStatement(info) => Some((n, info)),
            _ => None,
        })
    }

    /// Edges grouped by consumer.
    pub fn inbound(&self) -> BTreeMap<NodeId, Vec<&DfgEdge>> {
        let mut map: BTreeMap<NodeId, Vec<&DfgEdge>> = BTreeMap::new();
        for e in &self.edges {
            map.entry(e.to).or_default().push(e);
        }
        map
    }

    pub fn count(&self, tag: NodeTag) -> usize {
        self.nodes.iter().filter(|n| n.kind.tag() == tag).count()
    }
}

impl fmt::Display for FunctionDfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.id)?;
        for n in &self.nodes {
            let extra = match &n.kind {
                NodeKind::VariableVersion { version } => format!("#{version}"),
                NodeKind::Parameter { index, .. } => format!("[{index}]"),
                NodeKind::LogStatement(l) => format!(" {:?} slots={}", l.template.display(), l.slot_count),
                NodeKind::SourceRead { source_key, .. } => format!(" key={source_key:?}"),
                _ => String::new(),
            };
            writeln!(f, "  n{} {:?} {}{} @{}", n.id, n.kind.tag(), n.name, extra, n.line)?;
        }
        for e in &self.edges {
            let slot = e.slot.map(|s| format!(" slot={s}")).unwrap_or_default();
            let eff: String = e
                .effect
                .iter()
                .map(|s| match s {
                    Step::Select(f) => format!(" .{f}"),
                    Step::Put(f) => format!(" ->{f}"),
                    Step::Reset => " *".to_string(),
                })
                .collect();
            let port = match e.port {
                Port::Value => String::new(),
                Port::Receiver => " recv".to_string(),
                Port::ArgOut { arg } => format!(" out{arg}"),
            };
            writeln!(f, "  n{} -> n{}{slot}{eff}{port}", e.from, e.to)?;
        }
        Ok(())
    }
}
