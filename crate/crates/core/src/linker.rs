//! Splits an augmented log into records and links each record to the log
//! statement that produced it.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dfg::{NodeId, NodeKind, TemplateSource};
use crate::frontend::{normalize_path, FunctionId};
use crate::repository::{Repository, RepositoryError};

pub const DEFAULT_LOG_PATTERN: &str = r"^(?P<level>[A-Z]+)\|(?P<path>[^|:]+):(?P<line>\d+)\|(?P<message>.*)$";

const GROUPS: [&str; 4] = ["level", "path", "line", "message"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("invalid log pattern: {0}")]
    BadPattern(String),
    #[error("no function found for {0}")]
    NotFound(String),
    #[error("no log statement at {path}:{line} in {function}")]
    LineMismatch {
        path: String,
        line: u32,
        function: FunctionId,
    },
}

/// Compiled record pattern with `level`, `path`, `line` and `message`
/// capture groups.
#[derive(Debug, Clone)]
pub struct LogPattern {
    regex: Regex,
}

impl Default for LogPattern {
    fn default() -> Self {
        Self::new(DEFAULT_LOG_PATTERN).expect("default pattern compiles")
    }
}

impl LogPattern {
    pub fn new(pattern: &str) -> Result<Self, LinkError> {
        let regex = Regex::new(pattern).map_err(|e| LinkError::BadPattern(e.to_string()))?;
        let names: Vec<&str> = regex.capture_names().flatten().collect();
        let missing: Vec<&str> = GROUPS.iter().copied().filter(|g| !names.contains(g)).collect();
        if !missing.is_empty() {
            return Err(LinkError::BadPattern(format!(
                "missing capture group(s): {}",
                missing.join(", ")
            )));
        }
        Ok(Self { regex })
    }

    pub fn as_str(&self) -> &str {
        self.regex.as_str()
    }
}

/// One log record: a prefixed line plus any continuation lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// All physical lines of the record joined with `\n`.
    pub raw: String,
    pub level: String,
    pub path: String,
    pub line: u32,
    /// Message payload, continuation lines included.
    pub message: String,
    /// Byte offset of the message inside `raw`.
    pub message_start: usize,
    /// 1-based line number of the first physical line.
    pub line_no: usize,
    /// Number of physical lines.
    pub line_count: usize,
}

impl LogRecord {
    pub fn prefix(&self) -> &str {
        &self.raw[..self.message_start]
    }

    /// The first physical line of the message.
    pub fn head(&self) -> &str {
        self.message.split('\n').next().unwrap_or("")
    }

    pub fn has_continuation(&self) -> bool {
        self.line_count > 1
    }
}

/// A physical line that matched no pattern and follows no record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlinkableLine {
    pub raw: String,
    pub line_no: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogEntry {
    Record(LogRecord),
    Unlinkable(UnlinkableLine),
}

impl LogEntry {
    pub fn line_no(&self) -> usize {
        match self {
            LogEntry::Record(r) => r.line_no,
            LogEntry::Unlinkable(u) => u.line_no,
        }
    }

    pub fn line_count(&self) -> usize {
        match self {
            LogEntry::Record(r) => r.line_count,
            LogEntry::Unlinkable(_) => 1,
        }
    }

    pub fn raw(&self) -> &str {
        match self {
            LogEntry::Record(r) => &r.raw,
            LogEntry::Unlinkable(u) => &u.raw,
        }
    }
}

static EXCEPTION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[A-Za-z_][A-Za-z0-9_.]*(Error|Exception|Warning|Interrupt|Exit)(:.*)?$").expect("exception regex")
});

fn is_continuation(line: &str) -> bool {
    line.starts_with([' ', '\t'])
        || line.starts_with("Traceback (most recent call last):")
        || EXCEPTION_LINE.is_match(line)
}

/// Parses one physical line; `None` when it does not match the pattern.
pub fn parse_log_line(line: &str, line_no: usize, pattern: &LogPattern) -> Option<LogRecord> {
    let caps = pattern.regex.captures(line)?;
    let message = caps.name("message")?;
    let line_num: u32 = caps.name("line")?.as_str().parse().ok()?;
    Some(LogRecord {
        raw: line.to_string(),
        level: caps.name("level")?.as_str().to_string(),
        path: caps.name("path")?.as_str().to_string(),
        line: line_num,
        message: message.as_str().to_string(),
        message_start: message.start(),
        line_no,
        line_count: 1,
    })
}

/// Physical lines of a log text. A trailing newline does not start an
/// extra empty line.
pub fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n').collect()
}

/// Groups physical lines into records. Continuation lines attach to the
/// preceding record only when its message is the last part of its line.
pub fn group_lines(text: &str, pattern: &LogPattern) -> Vec<LogEntry> {
    let mut out: Vec<LogEntry> = Vec::new();
    for (i, line) in split_lines(text).into_iter().enumerate() {
        let line_no = i + 1;
        if let Some(rec) = parse_log_line(line, line_no, pattern) {
            out.push(LogEntry::Record(rec));
            continue;
        }
        if !line.is_empty() && is_continuation(line) {
            if let Some(LogEntry::Record(prev)) = out.last_mut() {
                if prev.message_start + prev.message.len() == prev.raw.len() {
                    prev.raw.push('\n');
                    prev.raw.push_str(line);
                    prev.message.push('\n');
                    prev.message.push_str(line);
                    prev.line_count += 1;
                    continue;
                }
            }
        }
        out.push(LogEntry::Unlinkable(UnlinkableLine {
            raw: line.to_string(),
            line_no,
        }));
    }
    out
}

/// Project-relative form of a path printed by the logger.
pub fn normalize_log_path(path: &str, root: Option<&Path>) -> String {
    let p = Path::new(path);
    if let Some(root) = root {
        if let Ok(rel) = p.strip_prefix(root) {
            if let Some(s) = rel.to_str().and_then(normalize_path) {
                return s;
            }
        }
    }
    normalize_path(path).unwrap_or_else(|| path.to_string())
}

/// The statement a record was produced by.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogStatementRef {
    pub function: FunctionId,
    pub node_id: NodeId,
    /// Human-readable template text.
    pub format_string: String,
    pub template: TemplateSource,
    pub slot_count: u32,
}

/// Finds the log statement whose source lines include the record's line.
pub fn resolve_statement(path: &str, line: u32, repo: &Repository) -> Result<LogStatementRef, LinkError> {
    let fid = repo.resolve_location(path, line).map_err(|e| match e {
        RepositoryError::NotFound(what) => LinkError::NotFound(what),
        other => LinkError::NotFound(other.to_string()),
    })?;
    let rec = repo.get(fid).map_err(|e| LinkError::NotFound(e.to_string()))?;
    rec.graph
        .nodes
        .iter()
        .filter_map(|n| match &n.kind {
            NodeKind::LogStatement(info) if n.line <= line && line <= info.end_line => Some((n, info)),
            _ => None,
        })
        .min_by_key(|(n, _)| (n.line, n.id))
        .map(|(n, info)| LogStatementRef {
            function: fid.clone(),
            node_id: n.id,
            format_string: info.template.display(),
            template: info.template.clone(),
            slot_count: info.slot_count,
        })
        .ok_or_else(|| LinkError::LineMismatch {
            path: path.to_string(),
            line,
            function: fid.clone(),
        })
}
