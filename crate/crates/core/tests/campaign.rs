mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use clinreason_core::eval::compute_metrics;
use clinreason_core::llm::{
    mock_diagnose, CacheEntry, CachedBackend, LiveBackend, LiveConfig, MockBackend, MockRules, RetryPolicy,
};
use clinreason_core::prompts::{builtin_exemplars, DiagnoseMode};
use clinreason_core::runner::{
    case_inputs, diagnose_batch, export_distill, load_distill, rationalize_dataset, CampaignOptions, CaseInput, Modality,
    RationaleStatus, RunnerError, Strategy,
};
use clinreason_core::textualize::{compute_thresholds, Grouping, LevelCase};
use clinreason_core::{Backend, Completion, CompletionRequest, PredictionSet};

use common::*;

fn cases(n: usize, seed: u64) -> Vec<CaseInput> {
    let records = cohort(n, seed);
    let t = compute_thresholds(&records, Grouping::default()).unwrap();
    case_inputs(&records, &t, LevelCase::Sentence)
}

fn diagnose(cases: &[CaseInput], b: &dyn Backend, dir: &Path, id: &str) -> PredictionSet {
    let opts = CampaignOptions::new(id, "mock").in_dir(&dir.join(id));
    diagnose_batch(cases, b, &builtin_exemplars(), DiagnoseMode::Cot, 2, &opts).unwrap()
}

#[test]
fn mock_campaign_end_to_end() {
    let started = Instant::now();
    let cs = cases(300, 42);
    let dir = tempfile::tempdir().unwrap();
    let mock = MockBackend::default();
    let a = diagnose(&cs, &mock, dir.path(), "a");
    let b = diagnose(&cs, &mock, dir.path(), "b");
    assert!(started.elapsed().as_secs() < 10);
    assert_eq!(mock.network_calls(), 0);

    let rules = MockRules::default();
    for (e, c) in a.entries.iter().zip(&cs) {
        assert_eq!(e.parsed.prediction, Some(oracle_mock(&c.description, rules.ad_min_score, rules.nc_max_score)));
    }
    let report = compute_metrics(&a).unwrap();
    assert!(report.accuracy >= 0.90, "{}", report.accuracy);
    assert_eq!(report.unparseable, 0);

    // same inputs, different campaign id: only the id differs
    let mut b2 = b.clone();
    b2.campaign_id = "a".into();
    assert_eq!(serde_json::to_string(&b2).unwrap(), serde_json::to_string(&a).unwrap());
    for f in ["predictions.json", "checkpoint.jsonl", "results.jsonl", "summary.json", "config.json"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
}

#[test]
fn rerun_in_same_dir_reuses_checkpoint() {
    let cs = cases(30, 1);
    let dir = tempfile::tempdir().unwrap();
    let first = diagnose(&cs, &MockBackend::default(), dir.path(), "c");
    let bytes = std::fs::read(dir.path().join("c/predictions.json")).unwrap();

    // a backend that must not be called
    struct Never;
    impl Backend for Never {
        fn complete(&self, _: &CompletionRequest) -> Result<Completion, clinreason_core::llm::LlmError> {
            panic!("checkpoint should satisfy every request")
        }
    }
    let second = diagnose(&cs, &Never, dir.path(), "c");
    assert_eq!(first, second);
    assert_eq!(std::fs::read(dir.path().join("c/predictions.json")).unwrap(), bytes);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["reused_from_checkpoint"], 30);
}

#[test]
fn changed_config_is_refused() {
    let cs = cases(12, 2);
    let dir = tempfile::tempdir().unwrap();
    diagnose(&cs, &MockBackend::default(), dir.path(), "d");
    let opts = CampaignOptions::new("d", "mock").in_dir(&dir.path().join("d"));
    let err = diagnose_batch(&cs, &MockBackend::default(), &builtin_exemplars(), DiagnoseMode::Standard, 3, &opts);
    assert!(matches!(err, Err(RunnerError::ConfigMismatch { .. })));
    let mut two = CampaignOptions::new("e", "mock");
    two.strategy = Strategy::TwoStage;
    let err = diagnose_batch(&cs, &MockBackend::default(), &builtin_exemplars(), DiagnoseMode::Cot, 2, &two);
    assert!(matches!(err, Err(RunnerError::Unsupported(_))));
}

#[test]
fn record_then_replay_is_byte_identical() {
    let cs = cases(60, 7);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache/completions.jsonl");
    let rec = CachedBackend::record(Arc::new(MockBackend::default()), &cache).unwrap();
    let recorded = diagnose(&cs, &rec, dir.path(), "rec");
    drop(rec);
    let rep = CachedBackend::replay(&cache).unwrap();
    let replayed = diagnose(&cs, &rep, dir.path(), "rep");
    assert_eq!(rep.network_calls(), 0);
    for (a, b) in recorded.entries.iter().zip(&replayed.entries) {
        assert_eq!(a.completion.as_bytes(), b.completion.as_bytes());
        assert_eq!(a.request_digest, b.request_digest);
    }
    let (mut ra, mut rb) = (compute_metrics(&recorded).unwrap(), compute_metrics(&replayed).unwrap());
    ra.campaign_id.clear();
    rb.campaign_id.clear();
    assert_eq!(ra, rb);
}

#[test]
fn cold_replay_fails_per_record() {
    let cs = cases(9, 3);
    let dir = tempfile::tempdir().unwrap();
    let rep = CachedBackend::replay(&dir.path().join("none.jsonl")).unwrap();
    let set = diagnose(&cs, &rep, dir.path(), "cold");
    assert_eq!(set.unparseable, 9);
    assert!(set.failures().all(|(_, f)| f.class == "cache-miss"));
    let r = compute_metrics(&set).unwrap();
    assert_eq!(r.accuracy, 0.0);
}

#[test]
fn prompt_changes_get_their_own_cache_entries() {
    let cs = cases(6, 4);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c.jsonl");
    let rec = CachedBackend::record(Arc::new(MockBackend::default()), &cache).unwrap();
    let ex = builtin_exemplars();
    let zero = diagnose_batch(&cs, &rec, &ex, DiagnoseMode::Standard, 0, &CampaignOptions::new("z", "m")).unwrap();
    let five = diagnose_batch(&cs, &rec, &ex, DiagnoseMode::Standard, 5, &CampaignOptions::new("f", "m")).unwrap();
    for (a, b) in zero.entries.iter().zip(&five.entries) {
        assert_ne!(a.request_digest, b.request_digest);
    }
    assert_eq!(rec.len(), 12);
    let lines: Vec<CacheEntry> = clinreason_core::jsonl::read(&cache).unwrap();
    assert_eq!(lines.len(), 12);
}

#[test]
fn rationalize_and_export() {
    let cs = cases(30, 5);
    let dir = tempfile::tempdir().unwrap();
    let opts = CampaignOptions::new("r", "mock").in_dir(&dir.path().join("r"));
    let report = rationalize_dataset(&cs, &MockBackend::default(), &builtin_exemplars(), &opts).unwrap();
    assert_eq!(report.triplets.len(), 30);
    assert_eq!(report.flagged().count(), 0);
    for (t, c) in report.triplets.iter().zip(&cs) {
        assert!(t.is_valid());
        assert_eq!(t.gold, c.gold);
        assert!(t.rationale.contains(c.gold.full_name()), "the stated label is echoed");
        assert!(!t.rationale.contains("Diagnosis:"));
    }
    let again = rationalize_dataset(&cs, &MockBackend::default(), &builtin_exemplars(), &CampaignOptions::new("r2", "mock")).unwrap();
    assert_eq!(again.triplets, report.triplets);

    let text = dir.path().join("text.jsonl");
    assert_eq!(export_distill(&report.triplets, &text, Modality::TextOnly).unwrap(), 30);
    let back = load_distill(&text).unwrap();
    let stripped: Vec<_> = report.triplets.iter().cloned().map(|mut t| {
        t.mri_ref = None;
        t
    }).collect();
    assert_eq!(back, stripped);

    let mm = dir.path().join("mm.jsonl");
    assert_eq!(export_distill(&report.triplets, &mm, Modality::Multimodal).unwrap(), 30);
    assert_eq!(load_distill(&mm).unwrap(), report.triplets);
    let mut missing = report.triplets.clone();
    missing[4].mri_ref = None;
    assert!(matches!(
        export_distill(&missing, &dir.path().join("bad.jsonl"), Modality::Multimodal),
        Err(RunnerError::MissingMriRef(ids)) if ids == vec![missing[4].record_id.clone()]
    ));
}

#[test]
fn failed_rationales_are_flagged_not_dropped() {
    let mut cs = cases(5, 6);
    cs[2].description = "no structured content".into();
    let report =
        rationalize_dataset(&cs, &MockBackend::default(), &builtin_exemplars(), &CampaignOptions::new("x", "m")).unwrap();
    assert_eq!(report.outcomes.len(), 5);
    assert_eq!(report.triplets.len(), 4);
    let flagged: Vec<_> = report.flagged().collect();
    assert_eq!(flagged.len(), 1);
    assert!(matches!(&flagged[0].status, RationaleStatus::Failed { failure } if failure.class == "mock-input"));
}

/// Minimal chat-completions endpoint: answers with the mock rule, after
/// failing the first `fail_first` requests with a 503.
fn fake_server(fail_first: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let counter = counter.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut out = stream;
                loop {
                    let mut len = 0usize;
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    loop {
                        line.clear();
                        reader.read_line(&mut line).unwrap();
                        if line == "\r\n" {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    let n = counter.fetch_add(1, Ordering::SeqCst);
                    let (status, payload) = if n < fail_first {
                        ("503 Service Unavailable", r#"{"error":"busy"}"#.to_string())
                    } else {
                        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
                        assert_eq!(v["temperature"], 0.7);
                        assert_eq!(v["max_tokens"], 2000);
                        let prompt = v["messages"][1]["content"].as_str().unwrap();
                        let text = mock_diagnose(prompt).unwrap().text;
                        ("200 OK", serde_json::json!({ "choices": [{ "message": { "content": text } }] }).to_string())
                    };
                    let resp = format!(
                        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
                        payload.len()
                    );
                    out.write_all(resp.as_bytes()).unwrap();
                }
            });
        }
    });
    (url, hits)
}

fn live(url: &str) -> LiveBackend {
    LiveBackend::new(LiveConfig {
        endpoint: url.to_string(),
        api_key_env: "CLINREASON_TEST_UNSET_KEY".into(),
        retry: RetryPolicy { attempts: 3, base_delay_ms: 1 },
        max_in_flight: 2,
        timeout_secs: 10,
    })
    .unwrap()
}

#[test]
fn live_record_then_offline_replay() {
    let (url, hits) = fake_server(2);
    let cs = cases(12, 8);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("live.jsonl");
    let rec = CachedBackend::record(Arc::new(live(&url)), &cache).unwrap();
    let recorded = diagnose(&cs, &rec, dir.path(), "live");
    assert_eq!(recorded.failures().count(), 0, "503s are retried");
    assert_eq!(hits.load(Ordering::SeqCst), 14);
    assert_eq!(rec.network_calls(), 14);

    let rep = CachedBackend::replay(&cache).unwrap();
    let replayed = diagnose(&cs, &rep, dir.path(), "offline");
    assert_eq!(hits.load(Ordering::SeqCst), 14, "replay never touches the network");
    let texts = |s: &PredictionSet| s.entries.iter().map(|e| e.completion.clone()).collect::<Vec<_>>();
    assert_eq!(texts(&recorded), texts(&replayed));
}

#[test]
fn live_gives_up_after_three_attempts() {
    let (url, hits) = fake_server(usize::MAX);
    let b = live(&url);
    let req = CompletionRequest::new("m", vec![clinreason_core::llm::Message::user("hi")]);
    let err = b.complete(&req).unwrap_err();
    assert_eq!(err.class(), "http-status");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn live_requires_the_credential_variable() {
    let cfg = LiveConfig { api_key_env: "CLINREASON_TEST_UNSET_KEY".into(), ..LiveConfig::default() };
    assert_eq!(LiveBackend::from_env(cfg).err().unwrap().class(), "backend-config");
}
