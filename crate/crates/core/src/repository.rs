//! On-disk store of per-function graphs.
//!
//! A repository directory holds two files: `index`, a JSON document mapping
//! each function to the offset of its record, and `records`, a sequence of
//! length-prefixed frames. See `docs/repository-format.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dfg::{build_dfg, prune_dfg, BuildOptions, FunctionDfg, NodeKind};
use crate::diag::Diagnostic;
use crate::frontend::{normalize_path, parse_file, FunctionId, FunctionMetadata, ModuleIndex, SourceFile};
use crate::syntax::ast::Span;
use crate::syntax::{LanguageAdapter, ParseError};

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index";
pub const RECORDS_FILE: &str = "records";
const FRAME_HEADER: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum RepositoryError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("repository is corrupt: {0}")]
    Corrupt(String),
    #[error("repository format version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("repository is stale: built for fingerprint {stored}, sources now hash to {current}")]
    StaleRepository { stored: String, current: String },
    #[error("function {0} is already stored")]
    DuplicateFunction(FunctionId),
    #[error("not found in repository: {0}")]
    NotFound(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RepositoryError + '_ {
    move |source| RepositoryError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What one record holds: the unit's metadata and its pruned graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub metadata: FunctionMetadata,
    pub graph: FunctionDfg,
}

/// Location of a stored record inside the records file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHandle {
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: FunctionId,
    pub span: Span,
    pub offset: u64,
    pub length: u64,
    /// Last name segment of every callee invoked by the function.
    pub callees: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub digest: String,
    pub functions: Vec<FunctionId>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryIndex {
    pub format_version: u32,
    pub project_fingerprint: String,
    /// Digest of the build options and analyzer version the records were
    /// produced with.
    pub options_digest: String,
    pub files: BTreeMap<String, FileEntry>,
    pub parse_failures: Vec<ParseError>,
    pub functions: Vec<IndexEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest over every scanned file's path and content.
pub fn project_fingerprint(files: &[SourceFile]) -> String {
    let mut sorted: Vec<&SourceFile> = files.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut h = Sha256::new();
    for f in sorted {
        h.update(f.path.as_bytes());
        h.update([0]);
        h.update((f.content.len() as u64).to_le_bytes());
        h.update(f.content.as_bytes());
    }
    hex::encode(h.finalize())
}

fn options_digest(opts: &BuildOptions) -> String {
    let json = serde_json::to_string(opts).expect("options serialize");
    sha256_hex(format!("{}|{FORMAT_VERSION}|{json}", env!("CARGO_PKG_VERSION")).as_bytes())
}

fn checksum(payload: &[u8]) -> u64 {
    let d = Sha256::digest(payload);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn encode_frame(record: &FunctionRecord) -> Vec<u8> {
    let payload = serde_json::to_vec(record).expect("record serialize");
    let mut frame = Vec::with_capacity(FRAME_HEADER + payload.len());
    frame.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    frame.extend_from_slice(&checksum(&payload).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

fn callees_of(g: &FunctionDfg) -> BTreeSet<String> {
    g.nodes
        .iter()
        .filter_map(|n| match &n.kind {
            NodeKind::CallSite(c) => Some(c.method_name().to_string()),
            _ => None,
        })
        .collect()
}

/// Accumulates records for a new repository. Single writer.
#[derive(Debug, Default)]
pub struct RepositoryBuilder {
    records: Vec<u8>,
    functions: Vec<IndexEntry>,
    ids: BTreeSet<FunctionId>,
    files: BTreeMap<String, FileEntry>,
    parse_failures: Vec<ParseError>,
}

impl RepositoryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record. The graph should already be pruned.
    pub fn put(&mut self, record: &FunctionRecord) -> Result<RecordHandle, RepositoryError> {
        let frame = encode_frame(record);
        self.put_frame(&record.metadata, callees_of(&record.graph), &frame)
    }

    fn put_frame(
        &mut self,
        meta: &FunctionMetadata,
        callees: BTreeSet<String>,
        frame: &[u8],
    ) -> Result<RecordHandle, RepositoryError> {
        if !self.ids.insert(meta.id.clone()) {
            return Err(RepositoryError::DuplicateFunction(meta.id.clone()));
        }
        let handle = RecordHandle {
            offset: self.records.len() as u64,
            length: frame.len() as u64,
        };
        self.records.extend_from_slice(frame);
        self.functions.push(IndexEntry {
            id: meta.id.clone(),
            span: meta.span,
            offset: handle.offset,
            length: handle.length,
            callees,
        });
        Ok(handle)
    }

    pub fn add_file(&mut self, path: &str, content: &str, diagnostics: Vec<Diagnostic>) {
        let functions = self
            .functions
            .iter()
            .filter(|f| f.id.path == path)
            .map(|f| f.id.clone())
            .collect();
        self.files.insert(
            path.to_string(),
            FileEntry {
                digest: sha256_hex(content.as_bytes()),
                functions,
                diagnostics,
            },
        );
    }

    pub fn add_parse_failure(&mut self, e: ParseError) {
        self.parse_failures.push(e);
    }

    pub fn finish(mut self, project_fingerprint: String, opts: &BuildOptions) -> Repository {
        self.functions.sort_by(|a, b| a.id.cmp(&b.id));
        self.parse_failures
            .sort_by(|a, b| (&a.path, a.line).cmp(&(&b.path, b.line)));
        let index = RepositoryIndex {
            format_version: FORMAT_VERSION,
            project_fingerprint,
            options_digest: options_digest(opts),
            files: self.files,
            parse_failures: self.parse_failures,
            functions: self.functions,
        };
        Repository::assemble(index, self.records)
    }
}

/// Counts from a build.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub files_built: usize,
    pub files_reused: usize,
    pub functions: usize,
    pub parse_failures: usize,
}

type Slot = OnceLock<Result<Arc<FunctionRecord>, String>>;
/// Metadata, callees and encoded frame of a stored unit.
type StoredUnit = (FunctionMetadata, BTreeSet<String>, Vec<u8>);

/// An opened repository. Immutable; safe to share across threads.
#[derive(Debug)]
pub struct Repository {
    index: RepositoryIndex,
    records: Vec<u8>,
    by_id: BTreeMap<FunctionId, usize>,
    /// Per file: (span, function) pairs.
    by_file: BTreeMap<String, Vec<(Span, usize)>>,
    decoded: Vec<Slot>,
}

impl Repository {
    fn assemble(index: RepositoryIndex, records: Vec<u8>) -> Self {
        let mut by_id = BTreeMap::new();
        let mut by_file: BTreeMap<String, Vec<(Span, usize)>> = BTreeMap::new();
        for path in index.files.keys() {
            by_file.entry(path.clone()).or_default();
        }
        for (i, f) in index.functions.iter().enumerate() {
            by_id.insert(f.id.clone(), i);
            by_file.entry(f.id.path.clone()).or_default().push((f.span, i));
        }
        let decoded = index.functions.iter().map(|_| OnceLock::new()).collect();
        Self {
            index,
            records,
            by_id,
            by_file,
            decoded,
        }
    }

    /// Scans nothing: parses and builds every file from `files`, reusing
    /// records from `previous` for files whose content is unchanged.
    pub fn build(
        files: &[SourceFile],
        adapter: &dyn LanguageAdapter,
        opts: &BuildOptions,
        previous: Option<&Repository>,
    ) -> (Repository, BuildReport) {
        let modules = ModuleIndex::from_files(files);
        let opts_digest = options_digest(opts);
        // Import resolution depends on which files exist, so a changed file
        // set invalidates every record.
        let reusable = previous.filter(|p| {
            p.index.options_digest == opts_digest && p.index.files.keys().eq(files.iter().map(|f| &f.path))
        });
        enum Outcome {
            Reused(Vec<(FunctionMetadata, BTreeSet<String>, Vec<u8>)>, Vec<Diagnostic>),
            Built(Vec<FunctionRecord>, Vec<Diagnostic>),
            Failed(ParseError),
        }
        let outcomes: Vec<Outcome> = files
            .par_iter()
            .map(|file| {
                if let Some(prev) = reusable {
                    if let Some(frames) = prev.reusable_frames(file) {
                        let diags = prev.index.files[&file.path].diagnostics.clone();
                        return Outcome::Reused(frames, diags);
                    }
                }
                match parse_file(file, adapter, &modules) {
                    Ok(units) => {
                        let mut diags = Vec::new();
                        let records = units
                            .iter()
                            .map(|u| {
                                let (g, d) = build_dfg(u, opts);
                                diags.extend(d);
                                FunctionRecord {
                                    metadata: u.metadata.clone(),
                                    graph: prune_dfg(&g),
                                }
                            })
                            .collect();
                        Outcome::Built(records, diags)
                    }
                    Err(e) => Outcome::Failed(e),
                }
            })
            .collect();
        let mut b = RepositoryBuilder::new();
        let mut report = BuildReport::default();
        for (file, outcome) in files.iter().zip(outcomes) {
            let diags = match outcome {
                Outcome::Reused(frames, diags) => {
                    report.files_reused += 1;
                    for (meta, callees, frame) in frames {
                        b.put_frame(&meta, callees, &frame)
                            .expect("function ids are unique within a file");
                    }
                    diags
                }
                Outcome::Built(records, diags) => {
                    report.files_built += 1;
                    for r in &records {
                        b.put(r).expect("function ids are unique within a file");
                    }
                    diags
                }
                Outcome::Failed(e) => {
                    report.parse_failures += 1;
                    b.add_parse_failure(e);
                    continue;
                }
            };
            b.add_file(&file.path, &file.content, diags);
        }
        report.functions = b.functions.len();
        (b.finish(project_fingerprint(files), opts), report)
    }

    fn reusable_frames(&self, file: &SourceFile) -> Option<Vec<StoredUnit>> {
        let entry = self.index.files.get(&file.path)?;
        if entry.digest != sha256_hex(file.content.as_bytes()) {
            return None;
        }
        entry
            .functions
            .iter()
            .map(|id| {
                let i = *self.by_id.get(id)?;
                let rec = self.record_at(i).ok()?;
                let f = &self.index.functions[i];
                let frame = self.records[f.offset as usize..(f.offset + f.length) as usize].to_vec();
                Some((rec.metadata.clone(), f.callees.clone(), frame))
            })
            .collect()
    }

    /// Writes `index` and `records` into `dir`, replacing any previous
    /// contents only once both files are complete.
    pub fn save(&self, dir: &Path) -> Result<(), RepositoryError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let write = |name: &str, bytes: &[u8]| -> Result<PathBuf, RepositoryError> {
            let tmp = dir.join(format!("{name}.tmp"));
            let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
            Ok(tmp)
        };
        let index = serde_json::to_vec_pretty(&self.index).expect("index serialize");
        let rec_tmp = write(RECORDS_FILE, &self.records)?;
        let idx_tmp = write(INDEX_FILE, &index)?;
        let rec = dir.join(RECORDS_FILE);
        let idx = dir.join(INDEX_FILE);
        std::fs::rename(&rec_tmp, &rec).map_err(io_err(&rec))?;
        std::fs::rename(&idx_tmp, &idx).map_err(io_err(&idx))?;
        Ok(())
    }

    /// Opens without checking freshness.
    pub fn open(dir: &Path) -> Result<Repository, RepositoryError> {
        let idx_path = dir.join(INDEX_FILE);
        let rec_path = dir.join(RECORDS_FILE);
        let index_bytes = std::fs::read(&idx_path).map_err(io_err(&idx_path))?;
        let index: RepositoryIndex =
            serde_json::from_slice(&index_bytes).map_err(|e| RepositoryError::Corrupt(format!("index: {e}")))?;
        if index.format_version != FORMAT_VERSION {
            return Err(RepositoryError::UnsupportedVersion {
                found: index.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let records = std::fs::read(&rec_path).map_err(io_err(&rec_path))?;
        for f in &index.functions {
            let end = f.offset.checked_add(f.length);
            if end.map_or(true, |e| e > records.len() as u64) || f.length < FRAME_HEADER as u64 {
                return Err(RepositoryError::Corrupt(format!(
                    "record for {} lies outside the records file",
                    f.id
                )));
            }
        }
        Ok(Self::assemble(index, records))
    }

    /// Opens and fails with `StaleRepository` unless the stored fingerprint
    /// equals `current`.
    pub fn open_checked(dir: &Path, current: &str) -> Result<Repository, RepositoryError> {
        let repo = Self::open(dir)?;
        repo.check_fingerprint(current)?;
        Ok(repo)
    }

    pub fn check_fingerprint(&self, current: &str) -> Result<(), RepositoryError> {
        if self.index.project_fingerprint == current {
            Ok(())
        } else {
            Err(RepositoryError::StaleRepository {
                stored: self.index.project_fingerprint.clone(),
                current: current.to_string(),
            })
        }
    }

    /// Whether the repository was built with these options.
    pub fn matches_options(&self, opts: &BuildOptions) -> bool {
        self.index.options_digest == options_digest(opts)
    }

    pub fn index(&self) -> &RepositoryIndex {
        &self.index
    }

    pub fn fingerprint(&self) -> &str {
        &self.index.project_fingerprint
    }

    pub fn len(&self) -> usize {
        self.index.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.functions.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &FunctionId> {
        self.index.functions.iter().map(|f| &f.id)
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.index.functions
    }

    pub fn contains(&self, id: &FunctionId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn contains_file(&self, path: &str) -> bool {
        self.by_file.contains_key(path)
    }

    /// Ids of every function in `path`, ordered by start line.
    pub fn functions_in(&self, path: &str) -> Vec<&FunctionId> {
        let mut v: Vec<&FunctionId> = self
            .by_file
            .get(path)
            .map(|fs| fs.iter().map(|(_, i)| &self.index.functions[*i].id).collect())
            .unwrap_or_default();
        v.sort_by_key(|id| (id.start_line, &id.qualified_name));
        v
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.index.files.values().flat_map(|f| &f.diagnostics)
    }

    fn record_at(&self, i: usize) -> Result<Arc<FunctionRecord>, RepositoryError> {
        let slot = self.decoded[i].get_or_init(|| {
            let f = &self.index.functions[i];
            let frame = &self.records[f.offset as usize..(f.offset + f.length) as usize];
            let len = u64::from_le_bytes(frame[..8].try_into().expect("8 bytes"));
            let sum = u64::from_le_bytes(frame[8..16].try_into().expect("8 bytes"));
            let payload = &frame[FRAME_HEADER..];
            if len != payload.len() as u64 {
                return Err(format!("record for {} has a bad length", f.id));
            }
            if sum != checksum(payload) {
                return Err(format!("record for {} fails its checksum", f.id));
            }
            let rec: FunctionRecord =
                serde_json::from_slice(payload).map_err(|e| format!("record for {}: {e}", f.id))?;
            if rec.metadata.id != f.id {
                return Err(format!("record at offset {} is not {}", f.offset, f.id));
            }
            Ok(Arc::new(rec))
        });
        slot.clone().map_err(RepositoryError::Corrupt)
    }

    pub fn get(&self, id: &FunctionId) -> Result<Arc<FunctionRecord>, RepositoryError> {
        let i = *self
            .by_id
            .get(id)
            .ok_or_else(|| RepositoryError::NotFound(id.to_string()))?;
        self.record_at(i)
    }

    pub fn handle(&self, id: &FunctionId) -> Option<RecordHandle> {
        self.by_id.get(id).map(|&i| RecordHandle {
            offset: self.index.functions[i].offset,
            length: self.index.functions[i].length,
        })
    }

    /// Innermost function whose span contains `line`.
    pub fn resolve_location(&self, path: &str, line: u32) -> Result<&FunctionId, RepositoryError> {
        let norm = normalize_path(path).unwrap_or_default();
        let fns = self
            .by_file
            .get(&norm)
            .ok_or_else(|| RepositoryError::NotFound(format!("file {path}")))?;
        fns.iter()
            .filter(|(span, _)| span.contains(line))
            .min_by_key(|(span, i)| {
                (
                    self.index.functions[*i].id.is_module_unit(),
                    span.end_line - span.start_line,
                    std::cmp::Reverse(span.start_line),
                    &self.index.functions[*i].id.qualified_name,
                )
            })
            .map(|(_, i)| &self.index.functions[*i].id)
            .ok_or_else(|| RepositoryError::NotFound(format!("{path}:{line}")))
    }
}
