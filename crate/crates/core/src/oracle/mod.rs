//! Dynamic ground truth. Runs a program of the analyzed subset on concrete
//! data, tracking which annotated attributes reach each logged value. The
//! resulting log and labels are independent of the static analysis and
//! serve as its reference.

mod generator;
mod interp;
mod pyfmt;
mod value;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::annotations::{Annotations, RuleKind};
use crate::dfg::BuildOptions;
use crate::eval::{group_labels, GoldLabel, LabelKey};
use crate::frontend::{LoggerApi, SourceFile};
use crate::linker::resolve_statement;
use crate::pipeline::Project;
use crate::repository::Repository;
use crate::syntax::PythonSubset;
use crate::tracer::{TraceLimits, Tracer};

pub use generator::{generate_program, GeneratedProgram, GENERATED_ENTRY};
pub use interp::{Emission, OracleError, Program, DEFAULT_MAX_STEPS};
pub use pyfmt::{format_spec, percent_format, printf_arity};
pub use value::float_repr;

/// Everything one execution produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleRun {
    pub emissions: Vec<Emission>,
}

impl OracleRun {
    /// One record per emission in the default augmented format.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for e in &self.emissions {
            out.push_str(&e.render());
            out.push('\n');
        }
        out
    }

    /// All `(source, attribute)` pairs that reached any slot.
    pub fn flows(&self) -> BTreeSet<(String, String)> {
        self.emissions
            .iter()
            .flat_map(|e| e.slots.iter().flatten().cloned())
            .collect()
    }

    /// Gold labels for [`Self::log_text`]: attributes whose rule acts on
    /// the value. Log line numbers start at 1.
    pub fn gold(&self, annotations: &Annotations) -> Vec<GoldLabel> {
        let acts = |src: &str, attr: &str| {
            annotations
                .spec(src)
                .and_then(|s| s.attribute(attr))
                .is_some_and(|a| a.rule.kind != RuleKind::Keep)
        };
        let mut keys: Vec<LabelKey> = Vec::new();
        for (i, e) in self.emissions.iter().enumerate() {
            for (slot, labels) in e.slots.iter().enumerate() {
                for (src, attr) in labels {
                    if acts(src, attr) {
                        keys.push((i + 1, slot as u32, src.clone(), attr.clone()));
                    }
                }
            }
        }
        group_labels(keys)
    }
}

/// Runs `entry` as the main module.
pub fn run(
    files: &[SourceFile],
    annotations: &Annotations,
    logger: &LoggerApi,
    data: &BTreeMap<String, String>,
    entry: &str,
) -> Result<OracleRun, OracleError> {
    let program = Program {
        files,
        annotations,
        logger: logger.clone(),
        data,
        entry,
        max_steps: DEFAULT_MAX_STEPS,
    };
    Ok(OracleRun {
        emissions: interp::run_program(&program)?,
    })
}

/// Every `.csv` file under `root`, keyed by its root-relative path.
pub fn load_data(root: &Path) -> Result<BTreeMap<String, String>, OracleError> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| OracleError::Data(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().map_or(true, |x| x != "csv") {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path);
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let text = std::fs::read_to_string(path).map_err(|e| OracleError::Data(format!("{key}: {e}")))?;
        out.insert(key, text);
    }
    Ok(out)
}

/// Runs a scanned project with the data files found under its root.
pub fn run_project(project: &Project, entry: &str) -> Result<OracleRun, OracleError> {
    let data = load_data(&project.config.root)?;
    run(
        &project.files,
        &project.annotations,
        &project.config.scan.logger,
        &data,
        entry,
    )
}

/// An observed flow the static analysis did not report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissedFlow {
    /// 1-based record number in [`OracleRun::log_text`].
    pub record: usize,
    pub location: String,
    pub slot: u32,
    pub source_id: String,
    pub attribute: String,
    /// Why nothing was found: an unresolved statement or a missing finding.
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Soundness {
    /// Observed `(record, slot, source, attribute)` flows.
    pub observed: usize,
    pub missed: Vec<MissedFlow>,
}

impl Soundness {
    pub fn is_sound(&self) -> bool {
        self.missed.is_empty()
    }
}

/// Checks every observed flow against the static provenance of the
/// statement that emitted it.
pub fn check_soundness(run: &OracleRun, repo: &Repository, tracer: &Tracer<'_>) -> Soundness {
    let mut out = Soundness::default();
    for (i, e) in run.emissions.iter().enumerate() {
        let location = format!("{}:{}", e.path, e.line);
        if e.slots.iter().all(BTreeSet::is_empty) {
            continue;
        }
        let found: Result<Vec<BTreeSet<(String, String)>>, String> = resolve_statement(&e.path, e.line, repo)
            .map(|stmt| {
                tracer
                    .trace(&stmt)
                    .slots
                    .iter()
                    .map(|fs| fs.iter().map(|f| (f.source_id.clone(), f.attribute.clone())).collect())
                    .collect()
            })
            .map_err(|err| err.to_string());
        for (slot, labels) in e.slots.iter().enumerate() {
            for (src, attr) in labels {
                out.observed += 1;
                let reason = match &found {
                    Err(err) => err.clone(),
                    Ok(slots)
                        if slots
                            .get(slot)
                            .is_some_and(|s| s.contains(&(src.clone(), attr.clone()))) =>
                    {
                        continue
                    }
                    Ok(slots) => format!("static analysis reports {} slot(s) without this flow", slots.len()),
                };
                out.missed.push(MissedFlow {
                    record: i + 1,
                    location: location.clone(),
                    slot: slot as u32,
                    source_id: src.clone(),
                    attribute: attr.clone(),
                    reason,
                });
            }
        }
    }
    out
}

/// Runs a program under the interpreter and checks every observed flow
/// against a fresh static build of the same files.
pub fn check_program(
    files: &[SourceFile],
    annotations: &Annotations,
    logger: &LoggerApi,
    data: &BTreeMap<String, String>,
    entry: &str,
    limits: TraceLimits,
) -> Result<(OracleRun, Soundness), OracleError> {
    let run = run(files, annotations, logger, data, entry)?;
    let opts = BuildOptions {
        logger: logger.clone(),
        readers: annotations.readers.clone(),
    };
    let (repo, _) = Repository::build(files, &PythonSubset, &opts, None);
    let tracer = Tracer::new(&repo, annotations, limits);
    let soundness = check_soundness(&run, &repo, &tracer);
    Ok((run, soundness))
}
