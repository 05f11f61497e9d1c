mod common;

use std::sync::Arc;

use common::*;
use eegrag::cases::PatientRecord;
use eegrag::eval::{load_dataset, run_benchmark, QaExample};
use eegrag::fusion::render_context;
use eegrag::generation::NO_ANSWER;
use eegrag::{Ablation, ClientKind, Error, PipelineConfig, QueryInput, Workspace};

fn fixture_input(id: &str) -> QueryInput {
    load_dataset(&fixtures().join("qa.jsonl"))
        .unwrap()
        .into_iter()
        .find(|e| e.id == id)
        .unwrap()
        .to_input()
}

#[test]
fn second_ingest_reports_everything_merged() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let before = dir_contents(dir.path());
    let f = fixtures();
    let docs = ws.ingest_docs(&f.join("docs.jsonl"), Some(&f.join("docs.facts.jsonl"))).unwrap();
    assert_eq!((docs.entities_added, docs.hyperedges_added), (0, 0));
    assert!(docs.hyperedges_merged > 0);
    let cases = ws.ingest_cases(&f.join("cases.jsonl")).unwrap();
    assert_eq!((cases.cases_added, cases.cases_merged), (0, 8));
    assert_eq!(cases.case_hyperedges_added, 0);
    let eeg = ws.ingest_eeg(&f.join("eeg")).unwrap();
    assert_eq!((eeg.added, eeg.merged), (0, 6));
    assert_eq!(dir_contents(dir.path()), before);
}

#[test]
fn fixture_store_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let stats = ws.load().unwrap().stats();
    assert_eq!(stats.cases, 8);
    assert_eq!(stats.case_hyperedges, 8);
    assert_eq!(stats.recordings, 6);
    assert!(stats.knowledge_hyperedges >= 13);
}

#[test]
fn golden_transcript_and_context() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let out = ws.query(&fixture_input("q01")).unwrap();
    assert_eq!(out.answer, "absence epilepsy");
    assert_eq!(out.traces.eeg[0].recording_id, "r-epi-01");
    assert_eq!(out.traces.eeg[0].distance, 0.0);
    assert_eq!(render_context(&out.context), out.rendered_context);
    check_golden("query_q01.json", &(out.to_json_pretty() + "\n"));
    check_golden("context_q01.txt", &out.rendered_context);
}

#[test]
fn golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let out = dir.path().join("bench");
    let report = ws.bench(&fixtures().join("qa.jsonl"), &out).unwrap();
    assert_eq!(report.examples.len(), 12);
    assert_eq!(report.errored, 0);
    check_golden("report.json", &std::fs::read_to_string(out.join("report.json")).unwrap());
    check_golden("report.txt", &std::fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn echo_gold_scores_one_hundred_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        client: ClientKind::EchoGold,
        ..Default::default()
    };
    let ws = ingest_fixtures(dir.path(), config);
    let report = ws.bench(&fixtures().join("qa.jsonl"), &dir.path().join("bench")).unwrap();
    for agg in report.per_domain.iter().chain(&report.per_role).chain([&report.overall]) {
        assert_eq!((agg.em, agg.f1), (100.0, 100.0), "{}", agg.group);
    }
    let table = report.table();
    for line in table.lines().skip(1).filter(|l| !l.starts_with("std:")) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(&cols[2..4], &["100.00", "100.00"], "{line}");
    }
}

#[test]
fn single_echo_example_scores_one_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let ex = QaExample {
        id: "only".into(),
        domain: "epilepsy".into(),
        role: "doctor".into(),
        question: "What pattern marks absence epilepsy?".into(),
        eeg_ref: None,
        gold: "3 Hz spike-and-wave".into(),
    };
    let client = Arc::new(eegrag::eval::echo_gold_client(std::slice::from_ref(&ex)));
    let pipeline = ws.pipeline().unwrap().with_client(client);
    let report = run_benchmark(&[ex], &pipeline, 0, 7).unwrap();
    assert_eq!((report.overall.em, report.overall.f1), (100.0, 100.0));
    assert!(report.bootstrap.is_none());
}

#[test]
fn missing_recording_is_one_errored_example() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let mut rows = std::fs::read_to_string(fixtures().join("qa.jsonl")).unwrap();
    rows.push_str(
        r#"{"id":"q13","domain":"epilepsy","role":"doctor","question":"Which diagnosis fits recording r-missing?","eeg_ref":"r-missing","gold":"absence epilepsy"}
"#,
    );
    let dataset = dir.path().join("qa.jsonl");
    std::fs::write(&dataset, rows).unwrap();
    let report = ws.bench(&dataset, &dir.path().join("bench")).unwrap();
    assert_eq!(report.errored, 1);
    assert_eq!(report.overall.n, 12);
    let bad = report.examples.iter().find(|e| e.id == "q13").unwrap();
    assert!(bad.error.as_deref().unwrap().contains("r-missing"));
    assert!(report.table().contains("errored examples: 1"));
}

#[test]
fn query_against_empty_knowledge_store() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path(), PipelineConfig::default()).unwrap();
    ws.ingest_eeg(&fixtures().join("eeg")).unwrap();
    let out = ws.query(&QueryInput::text("What does frontal theta power indicate?")).unwrap();
    assert!(out.rendered_context.starts_with("[Knowledge]\n(none)\n"));
    assert_eq!(out.answer, NO_ANSWER);
    assert!(out.provenance.ungrounded);
}

#[test]
fn missing_store_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path().join("absent"), PipelineConfig::default()).unwrap();
    assert!(matches!(ws.query(&QueryInput::text("q")), Err(Error::StoreMissing(_))));
}

#[test]
fn el_off_ignores_supplied_eeg_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let pipeline = ws.pipeline().unwrap().with_ablation(Ablation { el: false, ..Ablation::FULL });
    let out = pipeline.query(&fixture_input("q01")).unwrap();
    assert!(out.traces.eeg.is_empty());
    assert!(out.context.cases.is_empty());
    assert_eq!(out.warnings.len(), 1);
}

#[test]
fn all_channels_off_renders_empty_context() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let out = ws.pipeline().unwrap().with_ablation(Ablation::NONE).query(&fixture_input("q07")).unwrap();
    assert_eq!(out.rendered_context, "[Knowledge]\n(none)\n\n[Similar Cases]\n(none)\n\n[EEG Matches]\n(none)\n");
    assert!(out.traces.is_empty());
}

#[test]
fn query_with_fresh_recording_file() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let rec = eegrag::EegRecording::from_file(&fixtures().join("eeg/r-tbi-01.json")).unwrap();
    let mut input = QueryInput::text("What explains this recording?");
    input.eeg = Some(eegrag::pipeline::EegQuery::Recording(rec));
    let out = ws.query(&input).unwrap();
    assert_eq!(out.traces.eeg[0].recording_id, "r-tbi-01");
    assert_eq!(out.answer, "mild traumatic brain injury");
}

#[test]
fn pseudo_cases_join_the_case_layer() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        pseudo_tau: 0.05,
        ..Default::default()
    };
    let ws = Workspace::new(dir.path(), config).unwrap();
    let f = fixtures();
    ws.ingest_docs(&f.join("docs.jsonl"), Some(&f.join("docs.facts.jsonl"))).unwrap();
    let report = ws.ingest_cases(&f.join("cases.jsonl")).unwrap();
    assert!(report.synthetic_added > 0);
    let stores = ws.load().unwrap();
    let synthetic: Vec<_> = stores.cases.cases().filter(|c| c.synthetic).collect();
    assert_eq!(synthetic.len(), report.synthetic_added);
    for s in synthetic {
        assert!(s.h.is_synthetic());
        let origin = s.derived_from.as_ref().unwrap();
        let recipient = stores.cases.get(&origin.recipient).unwrap();
        assert!(recipient.e.attributes().iter().all(|(k, v)| s.e.get(k) == Some(v.as_str())));
        assert!(s.e.attributes().len() > recipient.e.attributes().len());
    }
    assert_eq!(stores.stats().case_hyperedges, stores.cases.len());
}

#[test]
fn malformed_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(&docs, "{\"id\":\"a\",\"body\":\"Alpha Rhythm and Eye Opening.\"}\n{not json\n").unwrap();
    let ws = Workspace::new(dir.path().join("store"), PipelineConfig::default()).unwrap();
    match ws.ingest_docs(&docs, None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn empty_docs_file_gives_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(&docs, "").unwrap();
    let ws = Workspace::new(dir.path().join("store"), PipelineConfig::default()).unwrap();
    let report = ws.ingest_docs(&docs, None).unwrap();
    assert_eq!(report, Default::default());
}

#[test]
fn batch_and_single_queries_agree() {
    let dir = tempfile::tempdir().unwrap();
    let ws = ingest_fixtures(dir.path(), PipelineConfig::default());
    let pipeline = ws.pipeline().unwrap();
    let inputs: Vec<QueryInput> = load_dataset(&fixtures().join("qa.jsonl"))
        .unwrap()
        .iter()
        .map(|e| e.to_input())
        .collect();
    let batch = pipeline.query_batch(&inputs);
    for (input, out) in inputs.iter().zip(batch) {
        assert_eq!(out.unwrap(), pipeline.query(input).unwrap());
    }
}

#[test]
fn case_hash_ignores_attribute_order() {
    let a: PatientRecord = serde_json::from_str(r#"{"age": 8, "sex": "F"}"#).unwrap();
    let b: PatientRecord = serde_json::from_str(r#"{"sex": "F", "age": 8}"#).unwrap();
    let ea = eegrag::cases::serialize_case(&a).unwrap();
    let eb = eegrag::cases::serialize_case(&b).unwrap();
    assert_eq!(eegrag::cases::case_id(&ea), eegrag::cases::case_id(&eb));
}
