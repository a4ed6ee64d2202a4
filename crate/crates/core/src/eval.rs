//! Precision and recall of redaction decisions against gold labels.
//!
//! Gold files are JSON lines, one per labeled log line:
//! `{"line": 12, "labels": [[0, "customers", "name"]]}`. Lines without
//! sensitive slots may be omitted.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pipeline::RunReport;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("gold line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("gold label for log line {line}: {message}")]
    Input { line: usize, message: String },
}

/// Expected sensitive slots of one log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldLabel {
    pub line: usize,
    /// `(slot, source_id, attribute)` triples.
    pub labels: Vec<(u32, String, String)>,
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldLabel>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Syntax {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_gold(labels: &[GoldLabel]) -> String {
    let mut out = String::new();
    for g in labels {
        out.push_str(&serde_json::to_string(g).expect("gold label serializes"));
        out.push('\n');
    }
    out
}

/// Labels implied by a run: every non-KEEP attribute each slot acted on.
pub fn predicted_labels(report: &RunReport) -> Vec<GoldLabel> {
    report
        .records
        .iter()
        .filter_map(|r| {
            let labels: Vec<(u32, String, String)> = r
                .slots
                .iter()
                .flat_map(|s| {
                    s.decision.labels.iter().map(move |l| {
                        let (src, attr) = l.split_once('.').unwrap_or((l, ""));
                        (s.slot, src.to_string(), attr.to_string())
                    })
                })
                .collect();
            (!labels.is_empty()).then_some(GoldLabel {
                line: r.line_no,
                labels,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Counts {
    /// TP / (TP + FP), with 0/0 = 1.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    /// TP / (TP + FN), with 0/0 = 1.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        n as f64 / d as f64
    }
}

pub type LabelKey = (usize, u32, String, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// At (line, slot, source, attribute) granularity.
    pub values: Counts,
    /// A line counts as positive when it has any label.
    pub lines: Counts,
    pub precision: f64,
    pub recall: f64,
    pub line_precision: f64,
    pub line_recall: f64,
    pub false_positives: Vec<LabelKey>,
    pub false_negatives: Vec<LabelKey>,
}

fn keyed(labels: &[GoldLabel]) -> BTreeSet<LabelKey> {
    labels
        .iter()
        .flat_map(|g| g.labels.iter().map(|(s, src, a)| (g.line, *s, src.clone(), a.clone())))
        .collect()
}

/// Compares predictions with gold labels. `record_lines` are the line
/// numbers that start a log record; gold labels elsewhere are rejected.
pub fn evaluate(
    predicted: &[GoldLabel],
    gold: &[GoldLabel],
    record_lines: &BTreeSet<usize>,
) -> Result<EvalResult, EvalError> {
    let mut seen = BTreeSet::new();
    for g in gold {
        if !record_lines.contains(&g.line) {
            return Err(EvalError::Input {
                line: g.line,
                message: "not the first line of a log record".into(),
            });
        }
        if !seen.insert(g.line) {
            return Err(EvalError::Input {
                line: g.line,
                message: "labeled more than once".into(),
            });
        }
    }
    let p = keyed(predicted);
    let g = keyed(gold);
    let values = Counts {
        true_positives: p.intersection(&g).count(),
        false_positives: p.difference(&g).count(),
        false_negatives: g.difference(&p).count(),
    };
    let line_set = |k: &BTreeSet<LabelKey>| -> BTreeSet<usize> { k.iter().map(|x| x.0).collect() };
    let (pl, gl) = (line_set(&p), line_set(&g));
    let lines = Counts {
        true_positives: pl.intersection(&gl).count(),
        false_positives: pl.difference(&gl).count(),
        false_negatives: gl.difference(&pl).count(),
    };
    Ok(EvalResult {
        precision: values.precision(),
        recall: values.recall(),
        line_precision: lines.precision(),
        line_recall: lines.recall(),
        values,
        lines,
        false_positives: p.difference(&g).cloned().collect(),
        false_negatives: g.difference(&p).cloned().collect(),
    })
}

/// Groups flat label keys back into per-line gold records, sorted by line.
pub fn group_labels(keys: impl IntoIterator<Item = LabelKey>) -> Vec<GoldLabel> {
    let mut by_line: BTreeMap<usize, BTreeSet<(u32, String, String)>> = BTreeMap::new();
    for (line, slot, src, attr) in keys {
        by_line.entry(line).or_default().insert((slot, src, attr));
    }
    by_line
        .into_iter()
        .map(|(line, l)| GoldLabel {
            line,
            labels: l.into_iter().collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(n: usize) -> BTreeSet<usize> {
        (1..=n).collect()
    }

    fn label(line: usize, slot: u32, attr: &str) -> LabelKey {
        (line, slot, "customers".into(), attr.into())
    }

    #[test]
    fn identical_sets_are_perfect() {
        let gold = group_labels((1..=40).map(|i| label(i, 0, "name")));
        let r = evaluate(&gold, &gold, &lines(40)).unwrap();
        assert_eq!(r.values.true_positives, 40);
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }

    #[test]
    fn empty_sets_follow_zero_over_zero() {
        let r = evaluate(&[], &[], &lines(3)).unwrap();
        assert_eq!(
            (r.precision, r.recall, r.line_precision, r.line_recall),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn hand_counted_mix() {
        let gold = group_labels((1..=8).map(|i| label(i, 0, "name")));
        let mut pred: Vec<LabelKey> = (1..=8).map(|i| label(i, 0, "name")).collect();
        pred.push(label(9, 0, "name"));
        pred.push(label(1, 1, "email"));
        let r = evaluate(&group_labels(pred), &gold, &lines(10)).unwrap();
        assert_eq!(
            r.values,
            Counts {
                true_positives: 8,
                false_positives: 2,
                false_negatives: 0
            }
        );
        assert!((r.precision - 0.8).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.lines.false_positives, 1);
    }

    #[test]
    fn bad_gold_lines_are_rejected() {
        let gold = group_labels([label(5, 0, "name")]);
        assert!(matches!(
            evaluate(&[], &gold, &lines(4)),
            Err(EvalError::Input { line: 5, .. })
        ));
        let dup = vec![gold[0].clone(), gold[0].clone()];
        assert!(matches!(evaluate(&[], &dup, &lines(9)), Err(EvalError::Input { .. })));
        assert!(matches!(
            parse_gold("{\"line\": 1}\n"),
            Err(EvalError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn gold_round_trips() {
        let gold = group_labels([label(2, 1, "email"), label(2, 0, "name"), label(7, 0, "name")]);
        assert_eq!(parse_gold(&write_gold(&gold)).unwrap(), gold);
    }
}
