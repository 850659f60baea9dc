//! One test per acceptance criterion. Every test runs against mock backends only.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kg2instruct::backend::{self, EntailRequest, MockBackend, MockRuleSet, ScoreOverride};
use kg2instruct::config::ConfigBundle;
use kg2instruct::corpus::Paragraph;
use kg2instruct::domain::DomainLabel;
use kg2instruct::eval::{self, Prediction};
use kg2instruct::kg::{EntityType, Tail};
use kg2instruct::nli::{self, Premise};
use kg2instruct::pipeline::{self, stages, RunOptions};
use kg2instruct::render::{render_output, InstructionRecord};
use kg2instruct::sampler::{default_caps, sample_indices, Caps, SchemaKey};
use kg2instruct::schema::SchemaMapper;
use kg2instruct::text::{normalize_surface, Lang};
use kg2instruct::triple::{Provenance, SurfaceTriple};

fn triple(h: &str, r: &str, t: &str) -> SurfaceTriple {
    SurfaceTriple::new(h, r, t, Provenance::KG)
}

fn record(id: &str, domain: DomainLabel, triples: Vec<SurfaceTriple>) -> InstructionRecord {
    InstructionRecord {
        id: id.into(),
        lang: Lang::En,
        domain,
        instruction: String::new(),
        input: String::new(),
        schema: triples.iter().map(|t| t.relation.clone()).collect(),
        output: render_output(&triples, |_, _| EntityType::other()),
        triples,
    }
}

fn prediction(id: &str, triples: &[SurfaceTriple]) -> Prediction {
    Prediction { id: id.into(), output: render_output(triples, |_, _| EntityType::other()) }
}

fn prf(tp: usize, pred: usize, gold: usize) -> (f64, f64, f64) {
    let p = if pred == 0 { 0.0 } else { tp as f64 / pred as f64 };
    let r = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

#[test]
fn metric_oracle_equivalence() {
    const WORDS: [&str; 4] = ["ada", "bob", "cy", "dee"];
    const RELS: [&str; 3] = ["employer", "spouse", "founded by"];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<SurfaceTriple> {
        let n = rng.random_range(0..=10);
        (0..n)
            .map(|_| {
                let h = *WORDS.choose(rng).unwrap();
                let r = *RELS.choose(rng).unwrap();
                let t = *WORDS.choose(rng).unwrap();
                // Case and spacing variants collapse under normalization.
                let h = if rng.random_bool(0.2) { format!("  {}", h.to_uppercase()) } else { h.to_string() };
                triple(&h, r, t)
            })
            .collect()
    };

    let started = Instant::now();
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    let mut pooled: BTreeMap<DomainLabel, (usize, usize, usize)> = BTreeMap::new();
    let mut discrepancies = 0;
    for i in 0..10_000 {
        let id = format!("i{i}");
        let domain = *DomainLabel::ALL.choose(&mut rng).unwrap();
        let gold = draw(&mut rng);
        let pred = draw(&mut rng);
        let garbage = rng.random_bool(0.05);

        let key = |t: &SurfaceTriple| {
            (normalize_surface(&t.head, Lang::En), t.relation.clone(), normalize_surface(&t.tail, Lang::En))
        };
        let g: HashSet<_> = gold.iter().map(key).collect();
        let p: HashSet<_> = if garbage { HashSet::new() } else { pred.iter().map(key).collect() };
        let tp = g.intersection(&p).count();
        let e = pooled.entry(domain).or_default();
        e.0 += tp;
        e.1 += p.len();
        e.2 += g.len();

        let gold_rec = record(&id, domain, gold);
        let pred_rec =
            if garbage { Prediction { id: id.clone(), output: "I could not find anything.".into() } } else { prediction(&id, &pred) };
        let single = eval::score(std::slice::from_ref(&gold_rec), std::slice::from_ref(&pred_rec)).unwrap();
        let o = &single.overall;
        if (o.tp, o.pred_count, o.gold_count) != (tp, p.len(), g.len()) {
            discrepancies += 1;
        }
        golds.push(gold_rec);
        preds.push(pred_rec);
    }
    let report = eval::score(&golds, &preds).unwrap();
    for (d, &(tp, pc, gc)) in &pooled {
        let c = &report.per_domain[d];
        let (p, r, f) = prf(tp, pc, gc);
        if (c.tp, c.pred_count, c.gold_count) != (tp, pc, gc) || (c.precision, c.recall, c.f1) != (p, r, f) {
            discrepancies += 1;
        }
    }
    let (tp, pc, gc) = pooled.values().fold((0, 0, 0), |a, v| (a.0 + v.0, a.1 + v.1, a.2 + v.2));
    let o = &report.overall;
    if (o.tp, o.pred_count, o.gold_count) != (tp, pc, gc) || (o.precision, o.recall, o.f1) != prf(tp, pc, gc) {
        discrepancies += 1;
    }
    let elapsed = started.elapsed();
    assert_eq!(discrepancies, 0);
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
}

#[test]
fn micro_f1_hand_cases() {
    let gold = vec![
        record("a", DomainLabel::Person, vec![triple("x", "r", "1"), triple("x", "r", "2"), triple("x", "r", "3")]),
        record("b", DomainLabel::Person, vec![triple("y", "r", "1")]),
    ];
    let pred = vec![
        prediction("a", &[triple("x", "r", "1"), triple("x", "r", "2")]),
        prediction("b", &[triple("y", "r", "2"), triple("y", "r", "3")]),
    ];
    let o = eval::score(&gold, &pred).unwrap().overall;
    assert_eq!((o.tp, o.pred_count, o.gold_count), (2, 4, 4));
    assert_eq!((o.precision, o.recall, o.f1), (0.5, 0.5, 0.5));

    let gold = vec![record("a", DomainLabel::Person, vec![triple("x", "r", "1")])];
    let pred = vec![prediction("a", &[triple("x", "r", "1"), triple("x", "r", "9")])];
    let o = eval::score(&gold, &pred).unwrap().overall;
    assert_eq!((o.precision, o.recall), (0.5, 1.0));
    assert!((o.f1 - 2.0 / 3.0).abs() < 1e-9);
}

fn synthetic_paragraph() -> Paragraph {
    Paragraph {
        id: "pool#0000".into(),
        lang: Lang::En,
        text: "A synthetic premise.".into(),
        token_count: 3,
        domain: Some(DomainLabel::Person),
        anchors: vec![],
    }
}

/// Triples with every hypothesis pinned to a score; returns them with their max score.
fn scored_pool(bundle: &ConfigBundle, scores: &[[f64; 3]]) -> (Vec<SurfaceTriple>, Vec<f64>, MockBackend) {
    let mut rules = MockRuleSet::default();
    let mut triples = Vec::new();
    let mut maxima = Vec::new();
    for (i, s) in scores.iter().enumerate() {
        let t = triple(&format!("Person {i}"), "employer", &format!("Company {i}"));
        let hyps = bundle.relation_templates.instantiate(&t, Lang::En).unwrap();
        assert_eq!(hyps.len(), 3);
        for (h, &score) in hyps.into_iter().zip(s) {
            rules.entail.overrides.push(ScoreOverride { hypothesis: h, score });
        }
        triples.push(t);
        maxima.push(s.iter().copied().fold(0.0, f64::max));
    }
    (triples, maxima, MockBackend::new(rules).unwrap())
}

#[test]
fn threshold_semantics() {
    let bundle = ConfigBundle::shipped().unwrap();
    let p = synthetic_paragraph();

    // Graded scores: retained set at each threshold is exactly {max >= t}, nested as t grows.
    let grid = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scores: Vec<[f64; 3]> =
        (0..200).map(|_| std::array::from_fn(|_| *grid.choose(&mut rng).unwrap())).collect();
    let (triples, maxima, mock) = scored_pool(&bundle, &scores);
    let mut previous: Option<BTreeSet<usize>> = None;
    for threshold in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let judged = nli::filter(&p, &triples, &bundle.relation_templates, &mock, threshold, Premise::Paragraph);
        let kept: BTreeSet<usize> = (0..judged.len()).filter(|&i| judged[i].verdict.is_kept()).collect();
        let expected: BTreeSet<usize> = (0..maxima.len()).filter(|&i| maxima[i] >= threshold).collect();
        assert_eq!(kept, expected, "threshold {threshold}");
        if let Some(prev) = &previous {
            assert!(kept.is_subset(prev), "threshold {threshold} is not nested");
        }
        previous = Some(kept);
    }

    // 15 of 100 triples below 0.5 on every template: exactly 15% excluded.
    let scores: Vec<[f64; 3]> =
        (0..100).map(|i| if i % 20 < 3 { [0.2, 0.49, 0.1] } else { [0.3, 0.5, 0.8] }).collect();
    let (triples, _, mock) = scored_pool(&bundle, &scores);
    let rec = stages::TripleRecord { id: p.id.clone(), triples, dropped: vec![], flags: vec![] };
    let (_, report) =
        stages::filter_triples(std::slice::from_ref(&p), &[rec], &bundle, &mock, 0.5, Premise::Paragraph).unwrap();
    assert_eq!((report.input_triples, report.dropped), (100, 15));
    assert_eq!(report.exclusion_rate, 0.15);

    // The fixture's lexical mock at 0.5: retained iff the best template scores at least 0.5.
    let fx = common::e2e();
    let linked = fx.linked();
    let (matched, _) = stages::match_triples(&fx.paragraphs, &linked, &fx.store, &fx.bundle).unwrap();
    let (supplemented, _) = stages::supplement_triples(&fx.paragraphs, &matched, &fx.bundle, &fx.backend).unwrap();
    let (filtered, _) =
        stages::filter_triples(&fx.paragraphs, &supplemented, &fx.bundle, &fx.backend, 0.5, Premise::Paragraph).unwrap();
    let mut checked = 0;
    for (before, after) in supplemented.iter().zip(&filtered) {
        let p = fx.paragraph(&before.id);
        let kept: Vec<(&str, &str, &str)> =
            after.triples.iter().map(|t| (t.head.as_str(), t.relation.as_str(), t.tail.as_str())).collect();
        for t in &before.triples {
            let best = fx
                .bundle
                .relation_templates
                .instantiate(t, p.lang)
                .unwrap()
                .into_iter()
                .map(|h| {
                    let req = EntailRequest { premise: p.text.clone(), hypothesis: h, lang: p.lang };
                    backend::entail(&fx.backend, &req).unwrap().entailment
                })
                .fold(0.0, f64::max);
            let is_kept = kept.contains(&(t.head.as_str(), t.relation.as_str(), t.tail.as_str()));
            assert_eq!(is_kept, best >= 0.5, "{}: {t:?} scored {best}", before.id);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

/// Scores each candidate by counting, over its outgoing entity triples, the
/// other mentions of the paragraph naming the tail. First best candidate wins.
fn naive_resolution(
    mentions: &[kg2instruct::linker::EntityMention],
    i: usize,
    store: &kg2instruct::kg::KgStore,
    lang: Lang,
) -> Option<String> {
    let m = &mentions[i];
    if m.candidates.len() <= 1 {
        return m.candidates.first().cloned();
    }
    let mut best: Option<(String, usize)> = None;
    for q in &m.candidates {
        let mut score = 0;
        for t in store.triples() {
            let Tail::Entity(tail) = &t.tail else { continue };
            if &t.head != q {
                continue;
            }
            let names = store.names(tail, lang);
            for (j, other) in mentions.iter().enumerate() {
                if j != i && names.contains(&normalize_surface(&other.surface, lang)) {
                    score += 1;
                }
            }
        }
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((q.clone(), score));
        }
    }
    best.map(|(q, _)| q)
}

#[test]
fn disambiguation_fixture() {
    let fx = common::e2e();
    let linked = fx.linked();
    let find = |id: &str, surface: &str| {
        linked
            .iter()
            .find(|r| r.id == id)
            .unwrap()
            .mentions
            .iter()
            .find(|m| m.surface == surface)
            .unwrap_or_else(|| panic!("{id}: no mention {surface}"))
            .clone()
    };
    let apple = find("apple-inc#0000", "Apple");
    assert!(apple.candidates.contains(&"Q312".to_string()) && apple.candidates.contains(&"Q89".to_string()));
    assert_eq!(apple.resolved.as_deref(), Some("Q312"));
    assert_eq!(find("apple-fruit#0000", "apple").resolved.as_deref(), Some("Q89"));

    let mut total = 0;
    let mut ambiguous = 0;
    let mut agree = 0;
    for r in &linked {
        let lang = fx.paragraph(&r.id).lang;
        for i in 0..r.mentions.len() {
            total += 1;
            ambiguous += usize::from(r.mentions[i].candidates.len() > 1);
            agree += usize::from(naive_resolution(&r.mentions, i, &fx.store, lang) == r.mentions[i].resolved);
        }
    }
    assert!(ambiguous > 0);
    assert_eq!(agree, total);
}

#[test]
fn schema_constraint_suppression() {
    let fx = common::e2e();
    let p = fx.paragraph("qiqi#0000").clone();
    assert_eq!(p.domain, Some(DomainLabel::Organization));
    let linked = fx.linked();
    let mentions = &linked.iter().find(|r| r.id == p.id).unwrap().mentions;
    let diplomatic = |mapper: &SchemaMapper| {
        kg2instruct::matcher::match_entity_pairs(&p, mentions, mapper, &fx.store)
            .into_iter()
            .filter(|t| t.relation == "diplomatic relation")
            .count()
    };
    let org = fx.bundle.mappers.get(DomainLabel::Organization).unwrap();
    let all = SchemaMapper::allow_all(DomainLabel::Organization, &fx.bundle.properties, &fx.bundle.taxonomy);
    assert_eq!(diplomatic(org), 0);
    assert_eq!(diplomatic(&all), 1);
}

#[test]
fn steve_jobs_triple_filtered() {
    let fx = common::e2e();
    let p = fx.paragraph("tim-cook#0000").clone();
    let paragraphs = vec![p.clone()];
    let (linked, _) = stages::link(&paragraphs, &fx.store, &fx.bundle, &fx.backend, fx.cfg.disambiguation);
    let (matched, _) = stages::match_triples(&paragraphs, &linked, &fx.store, &fx.bundle).unwrap();
    let (supplemented, _) = stages::supplement_triples(&paragraphs, &matched, &fx.bundle, &fx.backend).unwrap();
    let is_jobs = |t: &SurfaceTriple| (t.head.as_str(), t.relation.as_str(), t.tail.as_str()) == ("Steve Jobs", "time of death", "2011");
    let before: Vec<_> = supplemented[0].triples.iter().filter(|t| is_jobs(t)).collect();
    assert_eq!(before.len(), 1);
    assert_eq!(before[0].provenance, Provenance::KG);

    let (filtered, _) = stages::filter_triples(
        &paragraphs,
        &supplemented,
        &fx.bundle,
        &fx.backend,
        fx.cfg.nli_threshold,
        fx.cfg.nli_premise,
    )
    .unwrap();
    assert!(!filtered[0].triples.iter().any(is_jobs));
    assert!(filtered[0].dropped.iter().any(is_jobs));
}

#[test]
fn end_to_end_determinism() {
    let golden = fs::read(common::fixture("golden/dataset_seed7.jsonl")).unwrap();
    let started = Instant::now();
    for _ in 0..2 {
        let work = tempfile::tempdir().unwrap();
        let cfg = common::config_in("pipeline_e2e.json", work.path());
        let manifest = pipeline::run(&cfg, RunOptions::default()).unwrap();
        assert_eq!(manifest.stages.iter().find(|s| s.stage == pipeline::Stage::Ingest).unwrap().output, 50);
        assert!(fs::read(&cfg.output).unwrap() == golden, "dataset differs from the golden file");
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

fn ablation_scores(supplement: bool, nli: bool) -> (f64, f64) {
    let fx = common::load("ablation/pipeline.json");
    let gold_lines = fs::read_to_string(common::fixture("ablation/gold.jsonl")).unwrap();
    let mut gold_triples: HashMap<String, Vec<SurfaceTriple>> = HashMap::new();
    for line in gold_lines.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let ts = v["triples"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| triple(t["head"].as_str().unwrap(), t["relation"].as_str().unwrap(), t["tail"].as_str().unwrap()))
            .collect();
        gold_triples.insert(v["id"].as_str().unwrap().to_string(), ts);
    }

    let work = tempfile::tempdir().unwrap();
    let mut cfg = common::config_in("ablation/pipeline.json", work.path());
    cfg.stages.supplement = supplement;
    cfg.stages.nli = nli;
    pipeline::run(&cfg, RunOptions::default()).unwrap();
    let outputs: HashMap<String, String> =
        pipeline::read_dataset(&cfg.output).unwrap().into_iter().map(|r| (r.id, r.output)).collect();

    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for p in &fx.paragraphs {
        let ts = gold_triples.remove(&p.id).unwrap_or_default();
        gold.push(record(&p.id, p.domain.unwrap(), ts));
        pred.push(Prediction { id: p.id.clone(), output: outputs.get(&p.id).cloned().unwrap_or_else(|| "[]".into()) });
    }
    assert!(gold_triples.is_empty(), "gold ids without paragraphs: {:?}", gold_triples.keys());
    let o = eval::score(&gold, &pred).unwrap().overall;
    (o.precision, o.recall)
}

#[test]
fn ablation_directionality() {
    let (full_p, full_r) = ablation_scores(true, true);
    let (_, no_llm_r) = ablation_scores(false, true);
    let (no_nli_p, _) = ablation_scores(true, false);
    assert!(full_r > no_llm_r, "recall with supplement {full_r} vs without {no_llm_r}");
    assert!(full_p > no_nli_p, "precision with filtering {full_p} vs without {no_nli_p}");
}

#[test]
fn output_round_trip() {
    const HEADS: [&str; 6] = ["Steve Jobs", "蘋果", "O'Brien \"Jr.\"", "Ada", "Zürich", "a\\b"];
    const RELS: [&str; 4] = ["employer", "date of birth", "创始人", "spouse"];
    const TAILS: [&str; 5] = ["Apple", "1955", "San Francisco, CA", "[x]", "{y}"];
    const TYPES: [&str; 3] = ["person", "organization", "other"];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let as_multiset = |ts: &[SurfaceTriple]| {
        let mut v: Vec<_> = ts.iter().map(|t| (t.head.clone(), t.relation.clone(), t.tail.clone())).collect();
        v.sort();
        v
    };
    for case in 0..1000 {
        let n = match case {
            0 => 0,
            1 => 1,
            _ => rng.random_range(0..12),
        };
        let mut ts: Vec<SurfaceTriple> = (0..n)
            .map(|_| {
                triple(HEADS.choose(&mut rng).unwrap(), RELS.choose(&mut rng).unwrap(), TAILS.choose(&mut rng).unwrap())
            })
            .collect();
        if case == 2 {
            ts = vec![triple("Ada", "spouse", "Apple"), triple("Ada", "employer", "1955"), triple("Ada", "spouse", "Apple")];
        }
        let types: HashMap<String, &str> =
            HEADS.iter().map(|h| (h.to_string(), *TYPES.choose(&mut rng).unwrap())).collect();
        let s = render_output(&ts, |_, t| EntityType::new(types[&t.head]));
        let parsed = eval::parse_output(&s).unwrap_or_else(|| panic!("case {case} unparseable: {s}"));
        assert_eq!(as_multiset(&parsed), as_multiset(&ts), "case {case}");
    }
}

#[test]
fn sampler_behaviour() {
    let cands: Vec<(DomainLabel, SchemaKey)> = (0..500)
        .map(|i| (DomainLabel::ALL[i % 12], SchemaKey::new([["a", "b", "c"][i % 3], ["d", "e"][i % 2]])))
        .collect();
    let a = sample_indices(&cands, 99, 1.0, &Caps::default()).unwrap();
    let b = sample_indices(&cands, 99, 1.0, &Caps::default()).unwrap();
    assert_eq!(a, b);

    let pair = vec![(DomainLabel::Person, SchemaKey::new(["spouse"])); 2];
    let trials = 10_000;
    let both = (0..trials).filter(|&seed| sample_indices(&pair, seed, 1.0, &Caps::default()).unwrap().len() == 2).count();
    let rate = both as f64 / trials as f64;
    assert!((rate - 0.5).abs() <= 0.02, "second same-key acceptance {rate}");

    let caps = default_caps(Lang::Zh);
    let oversized: Vec<(DomainLabel, SchemaKey)> = [DomainLabel::GPE, DomainLabel::Transport, DomainLabel::Medicine]
        .iter()
        .flat_map(|&d| (0..25_000).map(move |i| (d, SchemaKey::new([format!("{}-{i}", d.name()).as_str()]))))
        .collect();
    let chosen = sample_indices(&oversized, 3, 1.0, &caps).unwrap();
    let mut per_domain: BTreeMap<DomainLabel, usize> = BTreeMap::new();
    for i in chosen {
        *per_domain.entry(oversized[i].0).or_default() += 1;
    }
    for (d, n) in &per_domain {
        assert!(*n <= caps.get(*d).unwrap(), "{d}: {n} over cap");
    }
    assert_eq!(per_domain[&DomainLabel::GPE], 20_200);
}

#[test]
fn configuration_cardinalities() {
    let cfg = common::config_in("pipeline_e2e.json", std::path::Path::new("/nonexistent"));
    assert!(cfg.strict_cardinality);
    let bundle = cfg.bundle().unwrap();
    let domains: BTreeSet<DomainLabel> = bundle.mappers.domains().collect();
    assert_eq!(domains.len(), 12);
    assert_eq!(bundle.taxonomy.len(), 14);
    for lang in Lang::ALL {
        let labels = bundle.mappers.distinct_labels(lang);
        assert_eq!(labels.len(), 123, "{lang}");
        for l in labels {
            assert_eq!(bundle.relation_templates.get(l, lang).map(<[String]>::len), Some(3), "{lang}: {l}");
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let mut tax: serde_json::Value = serde_json::from_str(kg2instruct::config::SHIPPED_TAXONOMY).unwrap();
    tax["types"].as_array_mut().unwrap().pop();
    let path = dir.path().join("taxonomy.json");
    fs::write(&path, tax.to_string()).unwrap();
    let mut short = cfg.clone();
    short.taxonomy = Some(path);
    assert!(matches!(short.bundle(), Err(kg2instruct::config::ConfigError::Cardinality(_))));
}
