//! End-to-end run: scan, build or open the repository, link records, trace,
//! bind and redact.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationError, Annotations};
use crate::config::{FailPolicy, ProjectConfig};
use crate::dfg::BuildOptions;
use crate::diag::Diagnostic;
use crate::frontend::{scan_project, ScanError, SourceFile};
use crate::linker::{
    group_lines, normalize_log_path, resolve_statement, split_lines, LinkError, LogEntry, LogPattern, LogRecord,
    LogStatementRef,
};
use crate::redactor::{
    bind_message, derive_template, is_tombstone, redact_message, tombstone, ConservativeAction, Redacted, SlotDecision,
};
use crate::repository::{project_fingerprint, BuildReport, Repository, RepositoryError};
use crate::syntax::PythonSubset;
use crate::tracer::{Confidence, Finding, ProvenanceReport, Tracer};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Annotations(#[from] AnnotationError),
    #[error(transparent)]
    Repository(#[from] RepositoryError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("cannot start worker pool: {0}")]
    Threads(String),
}

/// Scanned sources plus validated annotations for one configured project.
#[derive(Debug)]
pub struct Project {
    pub config: ProjectConfig,
    pub annotations: Annotations,
    pub files: Vec<SourceFile>,
    pub scan_diagnostics: Vec<Diagnostic>,
    pub fingerprint: String,
}

impl Project {
    pub fn load(config: ProjectConfig) -> Result<Self, PipelineError> {
        let mut annotations = Annotations::load(&config.annotations_path)?;
        if let Some(d) = config.redaction.digest {
            annotations.digest = d;
        }
        let scan = scan_project(&config.root, &config.scan, &PythonSubset)?;
        let fingerprint = project_fingerprint(&scan.files);
        Ok(Self {
            config,
            annotations,
            files: scan.files,
            scan_diagnostics: scan.diagnostics,
            fingerprint,
        })
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            logger: self.config.scan.logger.clone(),
            readers: self.annotations.readers.clone(),
        }
    }

    /// Builds a repository, reusing unchanged records from `previous`.
    pub fn build(&self, previous: Option<&Repository>) -> (Repository, BuildReport) {
        Repository::build(&self.files, &PythonSubset, &self.build_options(), previous)
    }

    /// Opens the stored repository, failing when it no longer matches the
    /// sources or the build options.
    pub fn open_repository(&self) -> Result<Repository, PipelineError> {
        let repo = Repository::open_checked(&self.config.repository_path, &self.fingerprint)?;
        if !repo.matches_options(&self.build_options()) {
            return Err(RepositoryError::StaleRepository {
                stored: format!("{} (other build options)", repo.fingerprint()),
                current: self.fingerprint.clone(),
            }
            .into());
        }
        Ok(repo)
    }

    /// The stored repository when one exists, else a fresh in-memory build.
    pub fn repository(&self) -> Result<Repository, PipelineError> {
        if self.config.repository_path.join(crate::repository::INDEX_FILE).exists() {
            self.open_repository()
        } else {
            Ok(self.build(None).0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// At least one slot rewritten.
    Redacted,
    /// Linked and bound; nothing to rewrite.
    Unchanged,
    DroppedByRule,
    DroppedByPolicy,
    PassedByPolicy,
    /// Already a tombstone from an earlier run.
    AlreadyDropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Unlinkable,
    NotFound,
    LineMismatch,
    NoTemplate,
    BindFailure,
    AmbiguousBinding,
    Truncated,
    ReportOnlyFindings,
    /// Continuation lines pass through without slot analysis.
    UnscannedContinuation,
}

impl Flag {
    fn is_link_failure(self) -> bool {
        matches!(
            self,
            Flag::Unlinkable | Flag::NotFound | Flag::LineMismatch | Flag::NoTemplate | Flag::BindFailure
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingSummary {
    pub label: String,
    pub confidence: Confidence,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: u32,
    pub decision: SlotDecision,
    pub findings: Vec<FindingSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordReport {
    pub line_no: usize,
    pub line_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<SlotReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RecordReport {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub lines_in: usize,
    pub lines_out: usize,
    pub records: usize,
    pub redacted: usize,
    pub unchanged: usize,
    pub dropped_by_rule: usize,
    pub dropped_by_policy: usize,
    pub passed_by_policy: usize,
    pub already_dropped: usize,
    /// Output lines that are tombstones written by this run.
    pub tombstone_lines: usize,
    pub ambiguous: usize,
    pub truncated: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: Summary,
    pub records: Vec<RecordReport>,
}

impl RunReport {
    pub fn has_flagged(&self) -> bool {
        self.summary.flagged > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub text: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Include source-to-statement paths in the report.
    pub explain: bool,
}

/// Redacts log text against one repository.
pub struct Redactor<'a> {
    repo: &'a Repository,
    annotations: &'a Annotations,
    tracer: Tracer<'a>,
    pattern: LogPattern,
    root: PathBuf,
    fail_policy: FailPolicy,
    conservative: ConservativeAction,
    threads: usize,
}

struct Processed {
    lines: Vec<String>,
    report: RecordReport,
}

impl<'a> Redactor<'a> {
    pub fn new(
        repo: &'a Repository,
        annotations: &'a Annotations,
        config: &ProjectConfig,
    ) -> Result<Self, PipelineError> {
        Ok(Self {
            repo,
            annotations,
            tracer: Tracer::new(repo, annotations, config.limits),
            pattern: LogPattern::new(&config.log_pattern)?,
            root: config.root.clone(),
            fail_policy: config.fail_policy,
            conservative: config.redaction.conservative_findings,
            threads: config.threads,
        })
    }

    pub fn tracer(&self) -> &Tracer<'a> {
        &self.tracer
    }

    /// Statement and provenance for a `path:line` location.
    pub fn explain_location(
        &self,
        path: &str,
        line: u32,
    ) -> Result<(LogStatementRef, Arc<ProvenanceReport>), LinkError> {
        let path = normalize_log_path(path, Some(&self.root));
        let stmt = resolve_statement(&path, line, self.repo)?;
        let report = self.tracer.trace(&stmt);
        Ok((stmt, report))
    }

    pub fn run(&self, input: &str, opts: RunOptions) -> Result<RunOutput, PipelineError> {
        let entries = group_lines(input, &self.pattern);
        let work = || -> Vec<Processed> { entries.par_iter().map(|e| self.process(e, opts)).collect() };
        let processed = if self.threads == 0 {
            work()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .map_err(|e| PipelineError::Threads(e.to_string()))?
                .install(work)
        };
        let mut out_lines: Vec<String> = Vec::new();
        let mut report = RunReport::default();
        report.summary.lines_in = split_lines(input).len();
        for p in processed {
            let s = &mut report.summary;
            match p.report.outcome {
                Outcome::Redacted => s.redacted += 1,
                Outcome::Unchanged => s.unchanged += 1,
                Outcome::DroppedByRule => s.dropped_by_rule += 1,
                Outcome::DroppedByPolicy => s.dropped_by_policy += 1,
                Outcome::PassedByPolicy => s.passed_by_policy += 1,
                Outcome::AlreadyDropped => s.already_dropped += 1,
            }
            if matches!(p.report.outcome, Outcome::DroppedByRule | Outcome::DroppedByPolicy) {
                s.tombstone_lines += p.lines.len();
            }
            s.records += 1;
            s.ambiguous += usize::from(p.report.flags.contains(&Flag::AmbiguousBinding));
            s.truncated += usize::from(p.report.flags.contains(&Flag::Truncated));
            s.flagged += usize::from(p.report.is_flagged());
            out_lines.extend(p.lines);
            report.records.push(p.report);
        }
        report.summary.lines_out = out_lines.len();
        let mut text = out_lines.join("\n");
        if input.ends_with('\n') && !out_lines.is_empty() {
            text.push('\n');
        }
        Ok(RunOutput { text, report })
    }

    fn process(&self, entry: &LogEntry, opts: RunOptions) -> Processed {
        let raw_lines = || entry.raw().split('\n').map(str::to_string).collect::<Vec<_>>();
        let mut report = RecordReport {
            line_no: entry.line_no(),
            line_count: entry.line_count(),
            location: None,
            statement: None,
            outcome: Outcome::Unchanged,
            flags: Vec::new(),
            slots: Vec::new(),
            detail: None,
        };
        if entry.line_count() == 1 && is_tombstone(entry.raw()) {
            report.outcome = Outcome::AlreadyDropped;
            return Processed {
                lines: raw_lines(),
                report,
            };
        }
        let rec = match entry {
            LogEntry::Unlinkable(_) => {
                report.flags.push(Flag::Unlinkable);
                return self.fail(report, None, entry, "line does not match the log pattern".into());
            }
            LogEntry::Record(r) => r,
        };
        let location = format!("{}:{}", rec.path, rec.line);
        report.location = Some(location.clone());
        match self.process_record(rec, &mut report, opts) {
            Ok(lines) => Processed { lines, report },
            Err((flag, detail)) => {
                report.flags.push(flag);
                report.slots.clear();
                self.fail(report, Some(&location), entry, detail)
            }
        }
    }

    fn process_record(
        &self,
        rec: &LogRecord,
        report: &mut RecordReport,
        opts: RunOptions,
    ) -> Result<Vec<String>, (Flag, String)> {
        let path = normalize_log_path(&rec.path, Some(&self.root));
        let stmt = resolve_statement(&path, rec.line, self.repo).map_err(|e| match e {
            LinkError::LineMismatch { .. } => (Flag::LineMismatch, e.to_string()),
            other => (Flag::NotFound, other.to_string()),
        })?;
        report.statement = Some(format!("{}#{}", stmt.function, stmt.node_id));
        let tmpl = derive_template(&stmt.template).map_err(|e| (Flag::NoTemplate, e.to_string()))?;
        let binding = bind_message(&tmpl, rec.head()).map_err(|e| (Flag::BindFailure, e.to_string()))?;
        let prov = self.tracer.trace(&stmt);
        if binding.ambiguous {
            report.flags.push(Flag::AmbiguousBinding);
        }
        if prov.truncated {
            report.flags.push(Flag::Truncated);
        }
        let (redacted, decisions) = redact_message(rec.head(), &binding, &prov, self.annotations, self.conservative)
            .map_err(|e| (Flag::NoTemplate, e.to_string()))?;
        if decisions.iter().any(|d| !d.report_only.is_empty()) {
            report.flags.push(Flag::ReportOnlyFindings);
        }
        report.slots = decisions
            .into_iter()
            .zip(&prov.slots)
            .map(|(decision, findings)| SlotReport {
                slot: decision.slot,
                decision,
                findings: findings.iter().map(|f| self.summarize(f, opts)).collect(),
            })
            .collect();
        let head_len = rec.head().len();
        match redacted {
            Redacted::Dropped => {
                report.outcome = Outcome::DroppedByRule;
                Ok(vec![
                    tombstone(Some(&format!("{}:{}", rec.path, rec.line)));
                    rec.line_count
                ])
            }
            Redacted::Message(head) => {
                if rec.has_continuation() {
                    report.flags.push(Flag::UnscannedContinuation);
                }
                let full = format!("{}{}{}", rec.prefix(), head, &rec.message[head_len..]);
                report.outcome = if full == rec.raw {
                    Outcome::Unchanged
                } else {
                    Outcome::Redacted
                };
                Ok(full.split('\n').map(str::to_string).collect())
            }
        }
    }

    fn summarize(&self, f: &Finding, opts: RunOptions) -> FindingSummary {
        FindingSummary {
            label: format!("{}.{}", f.source_id, f.attribute),
            confidence: f.confidence,
            path: opts.explain.then(|| {
                f.path
                    .iter()
                    .map(|s| {
                        let line = self
                            .repo
                            .get(&s.function)
                            .ok()
                            .and_then(|r| r.graph.node(s.node).map(|n| n.line));
                        match line {
                            Some(l) => format!("{}:{} {}#{}", s.function.path, l, s.function.qualified_name, s.node),
                            None => format!("{}#{}", s.function, s.node),
                        }
                    })
                    .collect()
            }),
        }
    }

    fn fail(&self, mut report: RecordReport, location: Option<&str>, entry: &LogEntry, detail: String) -> Processed {
        debug_assert!(report.flags.iter().any(|f| f.is_link_failure()));
        report.detail = Some(detail);
        let lines = match self.fail_policy {
            FailPolicy::Conservative => {
                report.outcome = Outcome::DroppedByPolicy;
                vec![tombstone(location); entry.line_count()]
            }
            FailPolicy::Permissive => {
                report.outcome = Outcome::PassedByPolicy;
                entry.raw().split('\n').map(str::to_string).collect()
            }
        };
        Processed { lines, report }
    }
}

/// Redacts a log file end to end with a freshly loaded project.
pub fn run_pipeline(config: ProjectConfig, input: &str, opts: RunOptions) -> Result<RunOutput, PipelineError> {
    let project = Project::load(config)?;
    let repo = project.repository()?;
    let redactor = Redactor::new(&repo, &project.annotations, &project.config)?;
    redactor.run(input, opts)
}

/// Loads the config at `path`, or `flowredact.toml` inside a directory.
pub fn config_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(crate::config::DEFAULT_CONFIG_FILE)
    } else {
        path.to_path_buf()
    }
}
