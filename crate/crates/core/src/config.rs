//! Project configuration file.
//!
//! ```toml
//! schema_version = 1
//! root = "."                      # relative to the config file
//! annotations = "annotations.toml"
//! repository = ".flowredact"      # where `build` stores the graph repository
//! log_pattern = '^(?P<level>[A-Z]+)\|(?P<path>[^|:]+):(?P<line>\d+)\|(?P<message>.*)$'
//! fail_policy = "conservative"    # or "permissive"
//! threads = 0                     # 0: one per core, 1: single-threaded
//!
//! [scan]
//! extensions = ["py"]
//! exclude = ["tests/**"]
//! [scan.logger]
//! receivers = ["log", "logger"]
//! methods = ["info", "warning"]
//!
//! [limits]
//! max_depth = 32
//! max_nodes = 200000
//!
//! [redaction]
//! digest = "sha256"               # overrides the annotation file
//! conservative_findings = "redact" # or "report"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotations::DigestAlgorithm;
use crate::frontend::ScanConfig;
use crate::linker::DEFAULT_LOG_PATTERN;
use crate::redactor::ConservativeAction;
use crate::tracer::TraceLimits;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CONFIG_FILE: &str = "flowredact.toml";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("config {path}: unsupported schema_version {found} (expected {CONFIG_SCHEMA_VERSION})")]
    Version { path: String, found: u32 },
    #[error("config {path}: {what} {target} does not exist")]
    MissingPath {
        path: String,
        what: &'static str,
        target: String,
    },
}

/// What happens to records that cannot be linked, templated or bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    /// Replace with a tombstone.
    #[default]
    Conservative,
    /// Pass through unchanged and flag in the report.
    Permissive,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RedactionSettings {
    pub digest: Option<DigestAlgorithm>,
    pub conservative_findings: ConservativeAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default)]
    root: Option<PathBuf>,
    annotations: PathBuf,
    #[serde(default)]
    repository: Option<PathBuf>,
    #[serde(default)]
    log_pattern: Option<String>,
    #[serde(default)]
    fail_policy: FailPolicy,
    #[serde(default)]
    threads: usize,
    #[serde(default)]
    scan: ScanConfig,
    #[serde(default)]
    limits: TraceLimits,
    #[serde(default)]
    redaction: RedactionSettings,
}

/// Loaded configuration with paths made absolute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectConfig {
    pub root: PathBuf,
    pub annotations_path: PathBuf,
    pub repository_path: PathBuf,
    pub log_pattern: String,
    pub fail_policy: FailPolicy,
    pub threads: usize,
    pub scan: ScanConfig,
    pub limits: TraceLimits,
    pub redaction: RedactionSettings,
}

impl ProjectConfig {
    /// Defaults for a project rooted at `root`.
    pub fn for_root(root: impl Into<PathBuf>, annotations_path: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            repository_path: root.join(".flowredact"),
            root,
            annotations_path: annotations_path.into(),
            log_pattern: DEFAULT_LOG_PATTERN.to_string(),
            fail_policy: FailPolicy::default(),
            threads: 0,
            scan: ScanConfig::default(),
            limits: TraceLimits::default(),
            redaction: RedactionSettings::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if raw.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Version {
                path: origin.to_string(),
                found: raw.schema_version,
            });
        }
        let root = base.join(raw.root.unwrap_or_else(|| PathBuf::from(".")));
        let annotations_path = base.join(&raw.annotations);
        for (what, p) in [("root", &root), ("annotations", &annotations_path)] {
            if !p.exists() {
                return Err(ConfigError::MissingPath {
                    path: origin.to_string(),
                    what,
                    target: p.display().to_string(),
                });
            }
        }
        Ok(Self {
            repository_path: base.join(raw.repository.unwrap_or_else(|| PathBuf::from(".flowredact"))),
            root,
            annotations_path,
            log_pattern: raw.log_pattern.unwrap_or_else(|| DEFAULT_LOG_PATTERN.to_string()),
            fail_policy: raw.fail_policy,
            threads: raw.threads,
            scan: raw.scan,
            limits: raw.limits,
            redaction: raw.redaction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with_annotations() -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("a.toml"), "").unwrap();
        d
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let d = dir_with_annotations();
        let c = ProjectConfig::parse("schema_version = 1\nannotations = \"a.toml\"\n", d.path(), "t").unwrap();
        assert_eq!(c.root, d.path().join("."));
        assert_eq!(c.fail_policy, FailPolicy::Conservative);
        assert_eq!(c.log_pattern, DEFAULT_LOG_PATTERN);
        assert_eq!(c.limits, TraceLimits::default());
        assert_eq!(c.redaction.conservative_findings, ConservativeAction::Redact);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let d = dir_with_annotations();
        for text in [
            "schema_version = 1\nannotations = \"a.toml\"\ncolour = 1\n",
            "schema_version = 1\nannotations = \"a.toml\"\n[scan]\nextension = [\"py\"]\n",
            "schema_version = 1\nannotations = \"a.toml\"\n[redaction]\nconservative_findings = \"maybe\"\n",
        ] {
            assert!(
                matches!(
                    ProjectConfig::parse(text, d.path(), "t"),
                    Err(ConfigError::Syntax { .. })
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn missing_paths_and_versions() {
        let d = dir_with_annotations();
        let e = ProjectConfig::parse("schema_version = 1\nannotations = \"nope.toml\"\n", d.path(), "t");
        assert!(matches!(
            e,
            Err(ConfigError::MissingPath {
                what: "annotations",
                ..
            })
        ));
        let e = ProjectConfig::parse("schema_version = 2\nannotations = \"a.toml\"\n", d.path(), "t");
        assert!(matches!(e, Err(ConfigError::Version { found: 2, .. })));
    }

    #[test]
    fn full_config() {
        let d = dir_with_annotations();
        let text = r#"
schema_version = 1
annotations = "a.toml"
fail_policy = "permissive"
threads = 1
[scan]
extensions = ["py"]
exclude = ["tests/**"]
[limits]
max_depth = 4
[redaction]
digest = "sha512"
conservative_findings = "report"
"#;
        let c = ProjectConfig::parse(text, d.path(), "t").unwrap();
        assert_eq!(c.fail_policy, FailPolicy::Permissive);
        assert_eq!(c.limits.max_depth, 4);
        assert_eq!(c.limits.max_nodes, TraceLimits::default().max_nodes);
        assert_eq!(c.redaction.digest, Some(DigestAlgorithm::Sha512));
        assert_eq!(c.scan.exclude, vec!["tests/**"]);
    }
}
