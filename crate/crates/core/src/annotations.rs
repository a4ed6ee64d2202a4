//! Domain-expert annotations: which data sources are sensitive, which of
//! their attributes matter, and how each attribute is redacted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use globset::{Glob, GlobBuilder, GlobMatcher};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256, Sha512};

pub const ANNOTATION_SCHEMA_VERSION: i64 = 1;
pub const DEFAULT_HASH_LENGTH: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    None,
    Low,
    High,
}

impl Level {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "NONE" => Some(Level::None),
            "LOW" => Some(Level::Low),
            "HIGH" => Some(Level::High),
            _ => None,
        }
    }
}

/// Rule kinds, declared from least to most strict so `Ord` is the
/// strictness order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleKind {
    Keep,
    Partial,
    Hash,
    Mask,
    DropLine,
}

impl RuleKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "KEEP" => Some(RuleKind::Keep),
            "PARTIAL" => Some(RuleKind::Partial),
            "HASH" => Some(RuleKind::Hash),
            "MASK" => Some(RuleKind::Mask),
            "DROP_LINE" => Some(RuleKind::DropLine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Keep => "KEEP",
            RuleKind::Partial => "PARTIAL",
            RuleKind::Hash => "HASH",
            RuleKind::Mask => "MASK",
            RuleKind::DropLine => "DROP_LINE",
        }
    }

    /// Rules a level may carry.
    pub fn allowed_for(self, level: Level) -> bool {
        match level {
            Level::None => self == RuleKind::Keep,
            Level::Low => true,
            Level::High => matches!(self, RuleKind::Mask | RuleKind::Hash | RuleKind::DropLine),
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RedactionRule {
    pub kind: RuleKind,
    /// Characters left visible by PARTIAL.
    pub keep_last: u32,
    /// Hex characters kept from the digest by HASH.
    pub length: u32,
}

impl RedactionRule {
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            keep_last: 0,
            length: DEFAULT_HASH_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensitiveAttribute {
    pub name: String,
    pub level: Level,
    pub rule: RedactionRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSourceSpec {
    pub source_id: String,
    pub match_pattern: String,
    pub attributes: Vec<SensitiveAttribute>,
}

impl DataSourceSpec {
    pub fn attribute(&self, name: &str) -> Option<&SensitiveAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestAlgorithm {
    Sha256,
    Sha512,
}

impl DigestAlgorithm {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "sha256" => Some(Self::Sha256),
            "sha512" => Some(Self::Sha512),
            _ => None,
        }
    }

    /// Lowercase hex digest of `bytes`.
    pub fn hex(self, bytes: &[u8]) -> String {
        match self {
            Self::Sha256 => hex::encode(Sha256::digest(bytes)),
            Self::Sha512 => hex::encode(Sha512::digest(bytes)),
        }
    }
}

/// One problem found while validating an annotation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position such as `source[1].attribute[0].rule`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn render_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("\n  {x}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("cannot read annotations {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("annotations {path} are not well-formed: {message}")]
    Syntax { path: String, message: String },
    #[error("annotations {path} have {} violation(s):{}", .violations.len(), render_violations(.violations))]
    Validation { path: String, violations: Vec<Violation> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("source key {key:?} matches several source patterns: {}", .candidates.join(", "))]
pub struct AmbiguousSource {
    pub key: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    schema_version: Option<i64>,
    digest: Option<String>,
    #[serde(default)]
    readers: Vec<String>,
    #[serde(default)]
    source: Vec<RawSource>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    id: Option<String>,
    #[serde(rename = "match")]
    pattern: Option<String>,
    #[serde(default)]
    attribute: Vec<RawAttribute>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttribute {
    name: Option<String>,
    level: Option<String>,
    rule: Option<String>,
    keep_last: Option<i64>,
    length: Option<i64>,
}

/// Validated annotation set.
#[derive(Debug, Clone)]
pub struct Annotations {
    pub digest: DigestAlgorithm,
    /// Callees whose first argument names a data source.
    pub readers: Vec<String>,
    pub sources: Vec<DataSourceSpec>,
    globs: Vec<(usize, GlobMatcher)>,
}

impl PartialEq for Annotations {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest && self.readers == other.readers && self.sources == other.sources
    }
}

fn is_glob(p: &str) -> bool {
    p.contains(['*', '?', '[', '{'])
}

fn compile_glob(p: &str) -> Result<GlobMatcher, globset::Error> {
    GlobBuilder::new(p)
        .literal_separator(true)
        .build()
        .map(|g: Glob| g.compile_matcher())
}

impl Annotations {
    /// Builds and validates an annotation set from already-typed specs.
    pub fn new(
        digest: DigestAlgorithm,
        readers: Vec<String>,
        sources: Vec<DataSourceSpec>,
    ) -> Result<Self, Vec<Violation>> {
        let mut violations = Vec::new();
        let mut globs = Vec::new();
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut patterns: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in sources.iter().enumerate() {
            let at = |field: &str| format!("source[{i}].{field}");
            if s.source_id.is_empty() {
                violations.push(v(at("id"), "source id must not be empty"));
            } else if let Some(first) = ids.insert(&s.source_id, i) {
                ids.insert(&s.source_id, first);
                violations.push(v(
                    at("id"),
                    &format!(
                        "duplicate source id {:?} (first declared at source[{first}])",
                        s.source_id
                    ),
                ));
            }
            if s.match_pattern.is_empty() {
                violations.push(v(at("match"), "match pattern must not be empty"));
            } else if let Some(first) = patterns.insert(&s.match_pattern, i) {
                patterns.insert(&s.match_pattern, first);
                violations.push(v(
                    at("match"),
                    &format!("pattern {:?} already used by source[{first}]", s.match_pattern),
                ));
            } else if is_glob(&s.match_pattern) {
                match compile_glob(&s.match_pattern) {
                    Ok(m) => globs.push((i, m)),
                    Err(e) => violations.push(v(at("match"), &format!("invalid glob: {e}"))),
                }
            }
            let mut names = BTreeSet::new();
            for (j, a) in s.attributes.iter().enumerate() {
                let at = |field: &str| format!("source[{i}].attribute[{j}].{field}");
                if a.name.is_empty() {
                    violations.push(v(at("name"), "attribute name must not be empty"));
                } else if !names.insert(&a.name) {
                    violations.push(v(at("name"), &format!("duplicate attribute {:?}", a.name)));
                }
                if !a.rule.kind.allowed_for(a.level) {
                    violations.push(v(
                        at("rule"),
                        &format!(
                            "attribute {:?}: rule {} is not allowed for level {:?}",
                            a.name, a.rule.kind, a.level
                        ),
                    ));
                }
                if a.rule.kind == RuleKind::Hash && !(8..=64).contains(&a.rule.length) {
                    violations.push(v(
                        at("length"),
                        &format!("attribute {:?}: hash length must be within 8..=64", a.name),
                    ));
                }
            }
        }
        if violations.is_empty() {
            Ok(Self {
                digest,
                readers,
                sources,
                globs,
            })
        } else {
            Err(violations)
        }
    }

    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses annotation text; `origin` names the file in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, AnnotationError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| AnnotationError::Syntax {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let mut violations = Vec::new();
        match raw.schema_version {
            Some(ANNOTATION_SCHEMA_VERSION) => {}
            Some(other) => violations.push(v(
                "schema_version".into(),
                &format!("unsupported schema version {other} (expected {ANNOTATION_SCHEMA_VERSION})"),
            )),
            None => violations.push(v("schema_version".into(), "missing schema version")),
        }
        let digest = match raw.digest.as_deref() {
            Some(d) => DigestAlgorithm::parse(d).unwrap_or_else(|| {
                violations.push(v("digest".into(), &format!("unknown digest {d:?} (sha256, sha512)")));
                DigestAlgorithm::Sha256
            }),
            None => {
                violations.push(v("digest".into(), "digest algorithm must be pinned"));
                DigestAlgorithm::Sha256
            }
        };
        if raw.readers.is_empty() {
            violations.push(v("readers".into(), "at least one source-reading callee is required"));
        }
        for (i, r) in raw.readers.iter().enumerate() {
            if r.is_empty() {
                violations.push(v(format!("readers[{i}]"), "reader name must not be empty"));
            }
        }
        let mut sources = Vec::new();
        for (i, s) in raw.source.into_iter().enumerate() {
            let mut attributes = Vec::new();
            for (j, a) in s.attribute.into_iter().enumerate() {
                let at = |field: &str| format!("source[{i}].attribute[{j}].{field}");
                let name = a.name.clone().unwrap_or_default();
                if a.name.is_none() {
                    violations.push(v(at("name"), "missing attribute name"));
                }
                let level = match a.level.as_deref().map(|l| (l, Level::parse(l))) {
                    Some((_, Some(l))) => Some(l),
                    Some((l, None)) => {
                        violations.push(v(at("level"), &format!("unknown level {l:?} (NONE, LOW, HIGH)")));
                        None
                    }
                    None => {
                        violations.push(v(at("level"), &format!("attribute {name:?}: missing level")));
                        None
                    }
                };
                let kind = match a.rule.as_deref().map(|r| (r, RuleKind::parse(r))) {
                    Some((_, Some(k))) => Some(k),
                    Some((r, None)) => {
                        violations.push(v(
                            at("rule"),
                            &format!("unknown rule {r:?} (KEEP, MASK, HASH, PARTIAL, DROP_LINE)"),
                        ));
                        None
                    }
                    None => {
                        violations.push(v(at("rule"), &format!("attribute {name:?}: missing rule")));
                        None
                    }
                };
                let mut rule = RedactionRule::new(kind.unwrap_or(RuleKind::Keep));
                match (kind, a.keep_last) {
                    (Some(RuleKind::Partial), Some(k)) if k >= 0 => rule.keep_last = k as u32,
                    (Some(RuleKind::Partial), Some(_)) => violations.push(v(at("keep_last"), "keep_last must be >= 0")),
                    (Some(RuleKind::Partial), None) => {
                        violations.push(v(at("keep_last"), "PARTIAL requires keep_last"))
                    }
                    (_, Some(_)) => violations.push(v(at("keep_last"), "keep_last applies to PARTIAL only")),
                    _ => {}
                }
                match (kind, a.length) {
                    (Some(RuleKind::Hash), Some(n)) if (8..=64).contains(&n) => rule.length = n as u32,
                    (Some(RuleKind::Hash), Some(_)) => {
                        violations.push(v(at("length"), "hash length must be within 8..=64"))
                    }
                    (_, Some(_)) if kind.is_some() && kind != Some(RuleKind::Hash) => {
                        violations.push(v(at("length"), "length applies to HASH only"))
                    }
                    _ => {}
                }
                if let (Some(level), Some(_)) = (level, kind) {
                    attributes.push(SensitiveAttribute { name, level, rule });
                }
            }
            if s.id.is_none() {
                violations.push(v(format!("source[{i}].id"), "missing source id"));
            }
            if s.pattern.is_none() {
                violations.push(v(format!("source[{i}].match"), "missing match pattern"));
            }
            sources.push(DataSourceSpec {
                source_id: s.id.unwrap_or_default(),
                match_pattern: s.pattern.unwrap_or_else(|| format!("<missing {i}>")),
                attributes,
            });
        }
        match Self::new(digest, raw.readers, sources) {
            Ok(a) if violations.is_empty() => Ok(a),
            Ok(_) => Err(AnnotationError::Validation {
                path: origin.to_string(),
                violations,
            }),
            Err(more) => {
                for m in more {
                    if !violations.iter().any(|x| x.location == m.location) {
                        violations.push(m);
                    }
                }
                violations.sort_by(|a, b| a.location.cmp(&b.location));
                Err(AnnotationError::Validation {
                    path: origin.to_string(),
                    violations,
                })
            }
        }
    }

    pub fn spec(&self, source_id: &str) -> Option<&DataSourceSpec> {
        self.sources.iter().find(|s| s.source_id == source_id)
    }

    /// Finds the spec for a source key: an exact literal match wins over
    /// globs; several matching globs are an error.
    pub fn match_source(&self, key: &str) -> Result<Option<&DataSourceSpec>, AmbiguousSource> {
        if let Some(s) = self.sources.iter().find(|s| s.match_pattern == key) {
            return Ok(Some(s));
        }
        let hits: Vec<usize> = self
            .globs
            .iter()
            .filter(|(_, m)| m.is_match(key))
            .map(|(i, _)| *i)
            .collect();
        match hits.as_slice() {
            [] => Ok(None),
            [i] => Ok(Some(&self.sources[*i])),
            many => {
                let mut candidates: Vec<String> = many.iter().map(|&i| self.sources[i].match_pattern.clone()).collect();
                candidates.sort();
                Err(AmbiguousSource {
                    key: key.to_string(),
                    candidates,
                })
            }
        }
    }
}

fn v(location: String, message: &str) -> Violation {
    Violation {
        location,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "schema_version = 1\ndigest = \"sha256\"\nreaders = [\"read_csv\"]\n";

    fn parse(body: &str) -> Result<Annotations, AnnotationError> {
        Annotations::parse(&format!("{HEADER}{body}"), "a.toml")
    }

    fn violations(body: &str) -> Vec<Violation> {
        match parse(body) {
            Err(AnnotationError::Validation { violations, .. }) => violations,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn one_spec_two_attributes() {
        let a = parse(
            r#"
[[source]]
id = "customers"
match = "customers.csv"
  [[source.attribute]]
  name = "name"
  level = "HIGH"
  rule = "MASK"
  [[source.attribute]]
  name = "tenure"
  level = "LOW"
  rule = "KEEP"
"#,
        )
        .unwrap();
        assert_eq!(a.sources.len(), 1);
        assert_eq!(a.sources[0].attributes.len(), 2);
        assert_eq!(a.sources[0].attribute("name").unwrap().rule.kind, RuleKind::Mask);
    }

    #[test]
    fn duplicate_source_ids_rejected() {
        let vs = violations("[[source]]\nid = \"a\"\nmatch = \"x.csv\"\n[[source]]\nid = \"a\"\nmatch = \"y.csv\"\n");
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].location, "source[1].id");
    }

    #[test]
    fn illegal_level_rule_cells() {
        let all = ["KEEP", "PARTIAL", "HASH", "MASK", "DROP_LINE"];
        for level in ["NONE", "LOW", "HIGH"] {
            for rule in all {
                let extra = if rule == "PARTIAL" { "keep_last = 2\n" } else { "" };
                let body = format!(
                    "[[source]]\nid = \"s\"\nmatch = \"s.csv\"\n[[source.attribute]]\nname = \"email\"\nlevel = \"{level}\"\nrule = \"{rule}\"\n{extra}"
                );
                let legal = match level {
                    "NONE" => rule == "KEEP",
                    "LOW" => true,
                    _ => matches!(rule, "MASK" | "HASH" | "DROP_LINE"),
                };
                match parse(&body) {
                    Ok(_) => assert!(legal, "{level}/{rule} accepted"),
                    Err(AnnotationError::Validation { violations, .. }) => {
                        assert!(!legal, "{level}/{rule} rejected: {violations:?}");
                        assert_eq!(violations.len(), 1);
                        assert!(violations[0].message.contains("\"email\""));
                        assert_eq!(violations[0].location, "source[0].attribute[0].rule");
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let vs = violations(
            r#"
[[source]]
id = "a"
match = ""
  [[source.attribute]]
  name = "x"
  level = "MEDIUM"
  rule = "MASK"
  [[source.attribute]]
  name = "y"
  level = "HIGH"
  rule = "HASH"
  length = 4
"#,
        );
        let locs: Vec<&str> = vs.iter().map(|v| v.location.as_str()).collect();
        assert_eq!(
            locs,
            vec![
                "source[0].attribute[0].level",
                "source[0].attribute[1].length",
                "source[0].match"
            ]
        );
    }

    #[test]
    fn syntax_and_unknown_keys_are_errors() {
        assert!(matches!(
            Annotations::parse("schema_version = ", "a"),
            Err(AnnotationError::Syntax { .. })
        ));
        assert!(matches!(
            parse("[[source]]\nid = \"a\"\nmatch = \"b\"\ncolour = 1\n"),
            Err(AnnotationError::Syntax { .. })
        ));
        let vs = match Annotations::parse("readers = []\n", "a") {
            Err(AnnotationError::Validation { violations, .. }) => violations,
            other => panic!("{other:?}"),
        };
        assert_eq!(vs.len(), 3);
    }

    fn matcher() -> Annotations {
        parse(
            r#"
[[source]]
id = "customers"
match = "customers.csv"
[[source]]
id = "fraud"
match = "data/fraud_*.csv"
[[source]]
id = "data"
match = "data/*.csv"
[[source]]
id = "exact"
match = "data/fraud_2023.csv"
"#,
        )
        .unwrap()
    }

    #[test]
    fn match_source_literal_glob_and_ambiguity() {
        let a = matcher();
        assert_eq!(a.match_source("customers.csv").unwrap().unwrap().source_id, "customers");
        assert!(a.match_source("tmp/scratch.csv").unwrap().is_none());
        let err = a.match_source("data/fraud_2024.csv").unwrap_err();
        assert_eq!(err.candidates, vec!["data/*.csv", "data/fraud_*.csv"]);
        assert_eq!(
            a.match_source("data/fraud_2023.csv").unwrap().unwrap().source_id,
            "exact"
        );
        assert_eq!(a.match_source("data/x.csv").unwrap().unwrap().source_id, "data");
        assert!(a.match_source("data/sub/x.csv").unwrap().is_none());
    }

    #[test]
    fn match_source_is_order_independent() {
        let a = matcher();
        let mut reversed = a.sources.clone();
        reversed.reverse();
        let b = Annotations::new(a.digest, a.readers.clone(), reversed).unwrap();
        for key in ["customers.csv", "data/x.csv", "data/fraud_2023.csv", "nope"] {
            assert_eq!(
                a.match_source(key).unwrap().map(|s| &s.source_id),
                b.match_source(key).unwrap().map(|s| &s.source_id)
            );
        }
        assert_eq!(
            a.match_source("data/fraud_1.csv").unwrap_err(),
            b.match_source("data/fraud_1.csv").unwrap_err()
        );
    }

    #[test]
    fn strictness_order() {
        use RuleKind::*;
        let mut v = vec![Mask, Keep, DropLine, Partial, Hash];
        v.sort();
        assert_eq!(v, vec![Keep, Partial, Hash, Mask, DropLine]);
    }

    #[test]
    fn digest_is_lowercase_hex() {
        let h = DigestAlgorithm::Sha256.hex(b"abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
