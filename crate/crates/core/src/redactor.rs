//! Message templates, slot binding and rule application.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotations::{Annotations, DigestAlgorithm, RuleKind};
use crate::dfg::{TemplatePiece, TemplateSource};
use crate::format::{parse_brace, parse_printf, BracePiece, PrintfPiece, SlotKind};
use crate::tracer::{Confidence, Finding, ProvenanceReport};

pub const TOMBSTONE_LEVEL: &str = "DROPPED";
pub const TOMBSTONE_MESSAGE: &str = "[REDACTED LINE]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RedactError {
    #[error("message is built by an opaque expression; no template")]
    NoTemplate,
    #[error("format string cannot be templated: {0}")]
    BadFormat(String),
    #[error("message does not match its template")]
    BindFailure,
    #[error("template has {template} slots but provenance has {provenance}")]
    SlotCountMismatch { template: usize, provenance: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDescriptor {
    pub index: u32,
    pub kind: SlotKind,
}

/// Constant fragments around ordered slots. `literals.len() == slots.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageTemplate {
    pub literals: Vec<String>,
    pub slots: Vec<SlotDescriptor>,
    pub anchored: bool,
}

impl MessageTemplate {
    fn from_pieces(pieces: impl IntoIterator<Item = Piece>) -> Self {
        let mut literals = vec![String::new()];
        let mut slots = Vec::new();
        for p in pieces {
            match p {
                Piece::Text(t) => literals.last_mut().expect("non-empty").push_str(&t),
                Piece::Slot(kind) => {
                    slots.push(SlotDescriptor {
                        index: slots.len() as u32,
                        kind,
                    });
                    literals.push(String::new());
                }
            }
        }
        Self {
            literals,
            slots,
            anchored: true,
        }
    }

    /// Renders slot values into the template.
    pub fn render(&self, values: &[&str]) -> String {
        let mut out = self.literals[0].clone();
        for (i, v) in values.iter().enumerate() {
            out.push_str(v);
            out.push_str(&self.literals[i + 1]);
        }
        out
    }
}

enum Piece {
    Text(String),
    Slot(SlotKind),
}

/// Normalizes every recorded message form into one template shape.
pub fn derive_template(source: &TemplateSource) -> Result<MessageTemplate, RedactError> {
    match source {
        TemplateSource::Literal { text } => Ok(MessageTemplate::from_pieces([Piece::Text(text.clone())])),
        TemplateSource::Printf { format } => {
            let pieces = parse_printf(format).map_err(|e| RedactError::BadFormat(e.to_string()))?;
            Ok(MessageTemplate::from_pieces(pieces.into_iter().map(|p| match p {
                PrintfPiece::Literal(t) => Piece::Text(t),
                PrintfPiece::Spec(s) => Piece::Slot(s.kind),
            })))
        }
        TemplateSource::Brace { format } => {
            let pieces = parse_brace(format).map_err(|e| RedactError::BadFormat(e.to_string()))?;
            Ok(MessageTemplate::from_pieces(pieces.into_iter().map(|p| match p {
                BracePiece::Literal(t) => Piece::Text(t),
                BracePiece::Field(f) => Piece::Slot(f.kind),
            })))
        }
        TemplateSource::Pieces { pieces } => Ok(MessageTemplate::from_pieces(pieces.iter().map(|p| match p {
            TemplatePiece::Text { text } => Piece::Text(text.clone()),
            TemplatePiece::Slot { kind } => Piece::Slot(*kind),
        }))),
        TemplateSource::Whole => Ok(MessageTemplate::from_pieces([Piece::Slot(SlotKind::Text)])),
        TemplateSource::Opaque => Err(RedactError::NoTemplate),
    }
}

static NUMBER_SHAPE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)^\s*(?:
            [-+]?(?:(?:\d[\d,_]*(?:\.\d*)?|\.\d+)(?:e[-+]?\d+)?%?|inf(?:inity)?|nan)
          | \*+\S*
          | \[REDACTED:[^\]]*\]
          | \[HASH:[0-9a-f]+\]
        )\s*$",
    )
    .expect("number shape regex")
});

static TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\[REDACTED:[^\]]*\]|\[HASH:[0-9a-f]+\])$").expect("token regex"));

/// Whether `value` is acceptable for a slot of `kind`. Redaction tokens are
/// accepted everywhere so already-redacted lines still bind.
pub fn fits(kind: SlotKind, value: &str) -> bool {
    match kind {
        SlotKind::Text => true,
        SlotKind::Number => NUMBER_SHAPE.is_match(value),
    }
}

pub fn is_token(value: &str) -> bool {
    TOKEN.is_match(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotBinding {
    pub slot_index: u32,
    /// Byte range inside the message.
    pub value_span: (usize, usize),
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub slots: Vec<SlotBinding>,
    /// More than one consistent binding exists.
    pub ambiguous: bool,
}

struct Binder<'a> {
    tmpl: &'a MessageTemplate,
    msg: &'a str,
    memo: HashMap<(usize, usize), u8>,
}

impl Binder<'_> {
    /// Candidate ends for slot `k` starting at `pos`, shortest first, each
    /// paired with the position after the following literal.
    fn candidates(&self, k: usize, pos: usize) -> Vec<(usize, usize)> {
        let next = &self.tmpl.literals[k + 1];
        let last = k + 1 == self.tmpl.slots.len();
        let kind = self.tmpl.slots[k].kind;
        let mut out = Vec::new();
        for (off, _) in self.msg[pos..].char_indices().chain([(self.msg.len() - pos, ' ')]) {
            let end = pos + off;
            let rest = &self.msg[end..];
            let lit_ok = if last {
                rest == next
            } else {
                rest.starts_with(next.as_str())
            };
            if lit_ok && fits(kind, &self.msg[pos..end]) {
                out.push((end, end + next.len()));
            }
        }
        out
    }

    /// Number of complete bindings of slots `k..` from `pos`, saturating at 2.
    fn count(&mut self, k: usize, pos: usize) -> u8 {
        if k == self.tmpl.slots.len() {
            return u8::from(pos == self.msg.len());
        }
        if let Some(&c) = self.memo.get(&(k, pos)) {
            return c;
        }
        let mut total = 0u8;
        for (_, after) in self.candidates(k, pos) {
            total = total.saturating_add(self.count(k + 1, after)).min(2);
            if total == 2 {
                break;
            }
        }
        self.memo.insert((k, pos), total);
        total
    }
}

/// Binds message substrings to slots: literals match exactly, the whole
/// message must match, and each slot takes the shortest value that still
/// allows the rest to match.
pub fn bind_message(tmpl: &MessageTemplate, message: &str) -> Result<Binding, RedactError> {
    let first = &tmpl.literals[0];
    if !message.starts_with(first.as_str()) {
        return Err(RedactError::BindFailure);
    }
    if tmpl.slots.is_empty() {
        return if message == first {
            Ok(Binding {
                slots: Vec::new(),
                ambiguous: false,
            })
        } else {
            Err(RedactError::BindFailure)
        };
    }
    let mut b = Binder {
        tmpl,
        msg: message,
        memo: HashMap::new(),
    };
    let total = b.count(0, first.len());
    if total == 0 {
        return Err(RedactError::BindFailure);
    }
    let mut pos = first.len();
    let mut slots = Vec::new();
    for k in 0..tmpl.slots.len() {
        let (end, after) = b
            .candidates(k, pos)
            .into_iter()
            .find(|&(_, after)| b.count(k + 1, after) > 0)
            .expect("a completion exists");
        slots.push(SlotBinding {
            slot_index: tmpl.slots[k].index,
            value_span: (pos, end),
            value: message[pos..end].to_string(),
        });
        pos = after;
    }
    Ok(Binding {
        slots,
        ambiguous: total > 1,
    })
}

/// Whether conservative findings change the output or are only reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConservativeAction {
    #[default]
    Redact,
    Report,
}

/// The rule chosen for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub slot: u32,
    pub rule: RuleKind,
    /// `source.attribute` names that imposed the rule.
    pub attributes: Vec<String>,
    pub keep_last: u32,
    pub hash_length: u32,
    /// Every non-KEEP `source.attribute` acted on, whichever rule won.
    pub labels: Vec<String>,
    /// Findings set aside by the conservative-finding policy.
    pub report_only: Vec<String>,
}

/// Strictest applicable rule over a slot's findings.
pub fn decide(
    slot: u32,
    findings: &[Finding],
    annotations: &Annotations,
    conservative: ConservativeAction,
) -> SlotDecision {
    let mut d = SlotDecision {
        slot,
        rule: RuleKind::Keep,
        attributes: Vec::new(),
        keep_last: u32::MAX,
        hash_length: 0,
        labels: Vec::new(),
        report_only: Vec::new(),
    };
    let mut attrs: BTreeSet<String> = BTreeSet::new();
    for f in findings {
        let Some(attr) = annotations.spec(&f.source_id).and_then(|s| s.attribute(&f.attribute)) else {
            continue;
        };
        let label = format!("{}.{}", f.source_id, f.attribute);
        if f.confidence == Confidence::Conservative && conservative == ConservativeAction::Report {
            if attr.rule.kind != RuleKind::Keep {
                d.report_only.push(label);
            }
            continue;
        }
        let kind = attr.rule.kind;
        if kind != RuleKind::Keep && !d.labels.contains(&label) {
            d.labels.push(label.clone());
        }
        if kind > d.rule {
            d.rule = kind;
            attrs.clear();
            d.keep_last = u32::MAX;
            d.hash_length = 0;
        }
        if kind == d.rule {
            attrs.insert(label);
            d.keep_last = d.keep_last.min(attr.rule.keep_last);
            d.hash_length = d.hash_length.max(attr.rule.length);
        }
    }
    if d.rule == RuleKind::Keep {
        attrs.clear();
    }
    if d.keep_last == u32::MAX {
        d.keep_last = 0;
    }
    d.attributes = attrs.into_iter().collect();
    d.labels.sort();
    d.report_only.sort();
    d.report_only.dedup();
    d
}

/// Rewrites one slot value. Values that are already tokens are kept.
pub fn apply_rule(value: &str, d: &SlotDecision, digest: DigestAlgorithm) -> String {
    if is_token(value) {
        return value.to_string();
    }
    match d.rule {
        RuleKind::Keep | RuleKind::DropLine => value.to_string(),
        RuleKind::Mask => format!("[REDACTED:{}]", d.attributes.join(",")),
        RuleKind::Hash => {
            let hex = digest.hex(value.as_bytes());
            let n = (d.hash_length as usize).min(hex.len());
            format!("[HASH:{}]", &hex[..n])
        }
        RuleKind::Partial => {
            let n = value.chars().count();
            let keep = (d.keep_last as usize).min(n);
            value
                .chars()
                .enumerate()
                .map(|(i, c)| if i < n - keep { '*' } else { c })
                .collect()
        }
    }
}

/// Whole-line replacement for dropped records. `location` is the record's
/// `path:line` as printed.
pub fn tombstone(location: Option<&str>) -> String {
    format!("{TOMBSTONE_LEVEL}|{}|{TOMBSTONE_MESSAGE}", location.unwrap_or("-"))
}

pub fn is_tombstone(line: &str) -> bool {
    line.strip_prefix(TOMBSTONE_LEVEL)
        .and_then(|r| r.strip_prefix('|'))
        .and_then(|r| r.strip_suffix(TOMBSTONE_MESSAGE))
        .is_some_and(|mid| mid.ends_with('|') && !mid[..mid.len() - 1].contains('|'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Redacted {
    /// The message with slot rewrites; other bytes unchanged.
    Message(String),
    Dropped,
}

/// Applies the per-slot decisions to a message.
pub fn redact_message(
    message: &str,
    binding: &Binding,
    prov: &ProvenanceReport,
    annotations: &Annotations,
    conservative: ConservativeAction,
) -> Result<(Redacted, Vec<SlotDecision>), RedactError> {
    if binding.slots.len() != prov.slots.len() {
        return Err(RedactError::SlotCountMismatch {
            template: binding.slots.len(),
            provenance: prov.slots.len(),
        });
    }
    let decisions: Vec<SlotDecision> = prov
        .slots
        .iter()
        .enumerate()
        .map(|(i, f)| decide(i as u32, f, annotations, conservative))
        .collect();
    if decisions.iter().any(|d| d.rule == RuleKind::DropLine) {
        return Ok((Redacted::Dropped, decisions));
    }
    let mut out = String::with_capacity(message.len());
    let mut pos = 0;
    for (b, d) in binding.slots.iter().zip(&decisions) {
        out.push_str(&message[pos..b.value_span.0]);
        out.push_str(&apply_rule(&b.value, d, annotations.digest));
        pos = b.value_span.1;
    }
    out.push_str(&message[pos..]);
    Ok((Redacted::Message(out), decisions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn printf(f: &str) -> MessageTemplate {
        derive_template(&TemplateSource::Printf { format: f.into() }).unwrap()
    }

    #[test]
    fn printf_template_shape() {
        let t = printf("customer %s scored %f");
        assert_eq!(t.literals, vec!["customer ", " scored ", ""]);
        assert_eq!(
            t.slots,
            vec![
                SlotDescriptor {
                    index: 0,
                    kind: SlotKind::Text
                },
                SlotDescriptor {
                    index: 1,
                    kind: SlotKind::Number
                }
            ]
        );
        let done = derive_template(&TemplateSource::Literal { text: "done".into() }).unwrap();
        assert_eq!((done.literals.len(), done.slots.len()), (1, 0));
        assert_eq!(derive_template(&TemplateSource::Opaque), Err(RedactError::NoTemplate));
    }

    #[test]
    fn unique_and_empty_bindings() {
        let t = printf("customer %s scored %f");
        let b = bind_message(&t, "customer Alice scored 0.83").unwrap();
        assert_eq!(b.slots[0].value, "Alice");
        assert_eq!(b.slots[0].value_span, (9, 14));
        assert_eq!(b.slots[1].value, "0.83");
        assert!(!b.ambiguous);
        let b = bind_message(&t, "customer  scored 0.83").unwrap();
        assert_eq!(b.slots[0].value, "");
        assert_eq!(b.slots[0].value_span, (9, 9));
    }

    #[test]
    fn numeric_shape_forces_backtracking() {
        let t = printf("customer %s scored %f");
        let b = bind_message(&t, "customer Bob scored 9 scored 0.5").unwrap();
        assert_eq!(b.slots[0].value, "Bob scored 9");
        assert_eq!(b.slots[1].value, "0.5");
        assert!(!b.ambiguous);
    }

    #[test]
    fn text_slots_can_be_ambiguous() {
        let t = printf("%s-%s");
        let b = bind_message(&t, "a-b-c").unwrap();
        assert!(b.ambiguous);
        assert_eq!(b.slots[0].value, "a");
        assert_eq!(b.slots[1].value, "b-c");
        assert_eq!(bind_message(&t, "abc"), Err(RedactError::BindFailure));
    }

    #[test]
    fn number_shapes() {
        for ok in [
            "0.83",
            "-1",
            "1,234",
            "1e-05",
            "  42",
            "0042",
            "12.5%",
            "nan",
            "-inf",
            "**83",
            "[HASH:ab12]",
        ] {
            assert!(fits(SlotKind::Number, ok), "{ok}");
        }
        for bad in ["", "abc", "9 scored 0.5", "1.2.3x"] {
            assert!(!fits(SlotKind::Number, bad), "{bad}");
        }
    }

    #[test]
    fn tombstones() {
        assert_eq!(
            tombstone(Some("app/churn.py:12")),
            "DROPPED|app/churn.py:12|[REDACTED LINE]"
        );
        assert!(is_tombstone("DROPPED|app/churn.py:12|[REDACTED LINE]"));
        assert!(is_tombstone("DROPPED|-|[REDACTED LINE]"));
        assert!(!is_tombstone("DROPPED|a|b|[REDACTED LINE]"));
    }

    #[test]
    fn partial_keeps_suffix_and_is_idempotent() {
        let d = SlotDecision {
            slot: 0,
            rule: RuleKind::Partial,
            attributes: vec!["s.card".into()],
            keep_last: 4,
            hash_length: 0,
            labels: vec![],
            report_only: vec![],
        };
        let once = apply_rule("4111222233334444", &d, DigestAlgorithm::Sha256);
        assert_eq!(once, "************4444");
        assert_eq!(apply_rule(&once, &d, DigestAlgorithm::Sha256), once);
        assert_eq!(apply_rule("12", &d, DigestAlgorithm::Sha256), "12");
    }

    #[test]
    fn hash_is_deterministic_and_truncated() {
        let d = SlotDecision {
            slot: 0,
            rule: RuleKind::Hash,
            attributes: vec!["s.email".into()],
            keep_last: 0,
            hash_length: 12,
            labels: vec![],
            report_only: vec![],
        };
        let a = apply_rule("a@x.org", &d, DigestAlgorithm::Sha256);
        assert_eq!(a, apply_rule("a@x.org", &d, DigestAlgorithm::Sha256));
        assert_eq!(a.len(), "[HASH:]".len() + 12);
        assert_eq!(apply_rule(&a, &d, DigestAlgorithm::Sha256), a);
    }
}
