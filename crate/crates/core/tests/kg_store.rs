mod common;

use kg2instruct::config::ConfigBundle;
use kg2instruct::kg::{KgStore, Tail};
use kg2instruct::text::Lang;

fn three() -> KgStore {
    let bundle = ConfigBundle::shipped().unwrap();
    KgStore::load(&common::fixture("kg_three.jsonl"), bundle.properties).unwrap()
}

#[test]
fn three_entity_fixture_indexes() {
    let store = three();
    assert_eq!(store.len(), 3);
    assert_eq!(store.triples().len(), 2);
    // en: "apple inc.", "apple", "tim cook", "timothy cook"; zh: "蘋果".
    assert_eq!(store.alias_index_len(), 5);
    assert_eq!(store.candidates("Apple", Lang::En), ["Q312", "Q89"]);
    assert_eq!(store.candidates("  APPLE ", Lang::En), ["Q312", "Q89"]);
    assert_eq!(store.candidates("蘋果", Lang::Zh), ["Q312", "Q89"]);
    assert_eq!(store.candidates("Timothy Cook", Lang::En), ["Q265852"]);
    assert!(store.candidates("Timothy Cook", Lang::Zh).is_empty());
    assert_eq!(store.degree("Q312"), 2);
    assert_eq!(store.degree("Q89"), 0);
}

#[test]
fn unknown_tails_are_kept_unresolved() {
    let bundle = ConfigBundle::shipped().unwrap();
    let store = KgStore::load(&common::fixture("kg_mini.jsonl"), bundle.properties).unwrap();
    let tail = store.outgoing("Q265852").find(|t| t.pid == "P19").map(|t| t.tail.clone());
    assert_eq!(tail, Some(Tail::Unresolved("Q90000099".into())));
}

#[test]
fn candidates_follow_degree_order() {
    let bundle = ConfigBundle::shipped().unwrap();
    let store = KgStore::load(&common::fixture("kg_mini.jsonl"), bundle.properties).unwrap();
    let cands = store.candidates("apple", Lang::En);
    assert_eq!(cands.len(), 2);
    let degrees: Vec<usize> = cands.iter().map(|q| store.degree(q)).collect();
    assert!(degrees[0] >= degrees[1], "{cands:?} {degrees:?}");
}

#[test]
fn malformed_lines_are_rejected() {
    let bundle = ConfigBundle::shipped().unwrap();
    let dup = "{\"qid\":\"Q1\",\"labels\":{\"en\":\"a\"}}\n{\"qid\":\"Q1\",\"labels\":{\"en\":\"b\"}}\n";
    assert!(KgStore::from_jsonl(dup.as_bytes(), bundle.properties.clone()).is_err());
    let bad_pid = "{\"qid\":\"Q1\",\"labels\":{\"en\":\"a\"},\"claims\":[{\"pid\":\"P999999\",\"tail\":{\"qid\":\"Q1\"}}]}\n";
    assert!(KgStore::from_jsonl(bad_pid.as_bytes(), bundle.properties).is_err());
}
