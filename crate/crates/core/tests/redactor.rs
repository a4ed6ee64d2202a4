mod common;

use proptest::prelude::*;
use sha2::{Digest, Sha256};

use flowredact::annotations::{DigestAlgorithm, RuleKind};
use flowredact::dfg::{TemplatePiece, TemplateSource};
use flowredact::format::SlotKind;
use flowredact::redactor::{
    apply_rule, bind_message, derive_template, is_token, is_tombstone, tombstone, MessageTemplate, SlotDecision,
};

fn piece() -> impl Strategy<Value = TemplatePiece> {
    prop_oneof![
        "[a= :x1]{0,3}".prop_map(|text| TemplatePiece::Text { text }),
        Just(TemplatePiece::Slot { kind: SlotKind::Text }),
        Just(TemplatePiece::Slot { kind: SlotKind::Number }),
    ]
}

fn template() -> impl Strategy<Value = MessageTemplate> {
    prop::collection::vec(piece(), 0..6).prop_map(|pieces| derive_template(&TemplateSource::Pieces { pieces }).unwrap())
}

fn value_for(kind: SlotKind) -> BoxedStrategy<String> {
    match kind {
        SlotKind::Text => "[a= :x1é]{0,5}".boxed(),
        SlotKind::Number => prop_oneof!["-?[0-9]{1,4}", "[0-9]{1,3}\\.[0-9]{1,2}"].boxed(),
    }
}

fn template_and_values() -> impl Strategy<Value = (MessageTemplate, Vec<String>)> {
    template().prop_flat_map(|t| {
        let values: Vec<_> = t.slots.iter().map(|s| value_for(s.kind)).collect();
        (Just(t), values)
    })
}

fn decision(rule: RuleKind, keep_last: u32, hash_length: u32) -> SlotDecision {
    SlotDecision {
        slot: 0,
        rule,
        attributes: vec!["people.name".into()],
        keep_last,
        hash_length,
        labels: vec!["people.name".into()],
        report_only: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn binding_agrees_with_brute_force(t in template(), msg in "[a= :x1é0-9.]{0,14}") {
        let all = common::all_bindings(&t, &msg);
        match bind_message(&t, &msg) {
            Ok(b) => {
                prop_assert!(!all.is_empty());
                let got: Vec<String> = b.slots.iter().map(|s| s.value.clone()).collect();
                prop_assert_eq!(&got, &all[0]);
                prop_assert_eq!(b.ambiguous, all.len() > 1);
            }
            Err(_) => prop_assert!(all.is_empty()),
        }
    }

    #[test]
    fn rendered_messages_bind_back((t, values) in template_and_values()) {
        let refs: Vec<&str> = values.iter().map(String::as_str).collect();
        let msg = t.render(&refs);
        let b = bind_message(&t, &msg).unwrap();
        let bound: Vec<&str> = b.slots.iter().map(|s| s.value.as_str()).collect();
        prop_assert_eq!(t.render(&bound), msg.clone());
        for s in &b.slots {
            prop_assert_eq!(&msg[s.value_span.0..s.value_span.1], s.value.as_str());
        }
        if !b.ambiguous {
            prop_assert_eq!(bound, refs);
        }
    }

    #[test]
    fn mask_and_hash_emit_tokens_and_are_idempotent(v in "\\PC{0,12}", len in 4u32..64) {
        for rule in [RuleKind::Mask, RuleKind::Hash] {
            let d = decision(rule, 0, len);
            let once = apply_rule(&v, &d, DigestAlgorithm::Sha256);
            prop_assert!(is_token(&once), "{once}");
            prop_assert_eq!(apply_rule(&once, &d, DigestAlgorithm::Sha256), once);
        }
    }

    #[test]
    fn hash_is_a_truncated_digest(v in "\\PC{0,12}", len in 1u32..80) {
        let d = decision(RuleKind::Hash, 0, len);
        let full = hex::encode(Sha256::digest(v.as_bytes()));
        let want = format!("[HASH:{}]", &full[..(len as usize).min(64)]);
        prop_assert_eq!(apply_rule(&v, &d, DigestAlgorithm::Sha256), want);
    }

    #[test]
    fn partial_keeps_the_tail_and_length(v in "\\PC{0,12}", keep in 0u32..6) {
        let d = decision(RuleKind::Partial, keep, 0);
        let out = apply_rule(&v, &d, DigestAlgorithm::Sha256);
        let chars: Vec<char> = v.chars().collect();
        let kept = (keep as usize).min(chars.len());
        let want: String = std::iter::repeat('*').take(chars.len() - kept).chain(chars[chars.len() - kept..].iter().copied()).collect();
        prop_assert_eq!(&out, &want);
        prop_assert_eq!(apply_rule(&out, &d, DigestAlgorithm::Sha256), out);
    }

    #[test]
    fn keep_and_drop_leave_the_value(v in "\\PC{0,12}") {
        for rule in [RuleKind::Keep, RuleKind::DropLine] {
            prop_assert_eq!(apply_rule(&v, &decision(rule, 0, 0), DigestAlgorithm::Sha256), v.clone());
        }
    }

    #[test]
    fn tombstones_are_recognized(path in "[a-z/]{1,12}\\.py", line in 1u32..500, other in "[A-Z]{3,6}\\|[a-z.]{1,8}:[0-9]{1,3}\\|[a-z ]{0,10}") {
        let t = tombstone(Some(&format!("{path}:{line}")));
        prop_assert!(is_tombstone(&t));
        prop_assert!(is_tombstone(&tombstone(None)));
        prop_assert!(!is_tombstone(&other));
    }
}

#[test]
fn mask_token_names_every_attribute() {
    let mut d = decision(RuleKind::Mask, 0, 0);
    d.attributes = vec!["a.x".into(), "b.y".into()];
    assert_eq!(apply_rule("secret", &d, DigestAlgorithm::Sha256), "[REDACTED:a.x,b.y]");
}

#[test]
fn sha512_digest_is_used_when_configured() {
    let d = decision(RuleKind::Hash, 0, 128);
    let out = apply_rule("abc", &d, DigestAlgorithm::Sha512);
    assert_eq!(out.len(), "[HASH:]".len() + 128);
    assert!(out.starts_with("[HASH:ddaf35a193617aba"));
}
