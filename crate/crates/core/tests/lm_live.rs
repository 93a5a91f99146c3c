use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use lga::abstraction::{abstract_features, FeatureSet};
use lga::lm::stub::{StubReply, StubServer};
use lga::lm::{
    build_prompt, AnswerSource, Group, LiveClient, LiveConfig, LmError, Query, QueryRole, RelevanceBackend,
    ResponseCache, RuleOracle,
};
use lga::Registry;

fn config(server: &StubServer) -> LiveConfig {
    LiveConfig { endpoint: server.url(), model: "stub-model".into(), retries: 3, backoff_ms: 5, timeout_ms: 2_000 }
}

fn query(u: &str, candidate: &str) -> Query {
    Query { utterance: u.into(), group: Group::ObjectType, candidate: candidate.into(), role: QueryRole::Target }
}

#[test]
fn prompts_match_golden_files() {
    let cat = lga::Catalog::builtin();
    let p = build_prompt(&cat, "Bring me the red heart.", Group::ObjectType, "heart", QueryRole::Target).unwrap();
    assert_eq!(p.system, include_str!("golden/system_prompt.txt"));
    assert_eq!(p.user, include_str!("golden/user_prompt_target.txt"));
    let p = build_prompt(
        &cat,
        "Sweep the block without touching the pan.",
        Group::ObjectColor,
        "dark red swirl",
        QueryRole::Avoid,
    )
    .unwrap();
    assert_eq!(p.user, include_str!("golden/user_prompt_avoid.txt"));
}

#[test]
fn live_client_through_stub_matches_oracle() {
    let reg = Arc::new(Registry::builtin());
    let cat = reg.catalog().clone();
    let oracle = RuleOracle::new(reg.clone());
    let server = StubServer::with_oracle(oracle.clone()).unwrap();
    let client = LiveClient::new(config(&server), "k".into(), cat.clone(), Arc::new(ResponseCache::in_memory()));
    for id in ["letter-from-word", "sweep-block-line"] {
        let spec = reg.scenario(id).unwrap();
        let (live, _) = abstract_features(&cat, &FeatureSet::default(), &spec.utterance, &client).unwrap();
        let (truth, _) = abstract_features(&cat, &FeatureSet::default(), &spec.utterance, &oracle).unwrap();
        assert_eq!(live, truth, "{id}");
    }
    let log = server.log();
    assert!(log.iter().all(|r| r.temperature == Some(0.0) && r.model == "stub-model"));
    assert!(log.iter().all(|r| r.authorization.as_deref() == Some("Bearer k")));
}

#[test]
fn fresh_answers_persist_and_cache_hits_skip_the_network() {
    let reg = Arc::new(Registry::builtin());
    let cat = reg.catalog().clone();
    let server = StubServer::with_oracle(RuleOracle::new(reg.clone())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let q = query("Bring me the heart.", "heart");

    let first = LiveClient::new(config(&server), "secret-key".into(), cat.clone(), Arc::new(ResponseCache::open(&path).unwrap()));
    let a = first.query(&q).unwrap();
    assert_eq!(a.source, AnswerSource::Live);
    assert!(a.verdict.is_yes());
    assert_eq!(server.requests(), 1);

    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(!text.contains("secret-key"));

    let second = LiveClient::new(config(&server), "secret-key".into(), cat, Arc::new(ResponseCache::open(&path).unwrap()));
    let b = second.query(&q).unwrap();
    assert_eq!(b.source, AnswerSource::Cache);
    assert_eq!(b.verdict, a.verdict);
    assert_eq!(second.requests(), 0);
    assert_eq!(server.requests(), 1);
}

#[test]
fn hanging_server_exhausts_retries() {
    let server = StubServer::start(|_| StubReply::Hang(Duration::from_millis(600))).unwrap();
    let cfg = LiveConfig { timeout_ms: 150, retries: 2, ..config(&server) };
    let client = LiveClient::new(cfg, "k".into(), Arc::new(lga::Catalog::builtin()), Arc::new(ResponseCache::in_memory()));
    match client.query(&query("Bring me the heart.", "heart")) {
        Err(LmError::Backend { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected backend error, got {other:?}"),
    }
    assert_eq!(client.requests(), 2);
}

#[test]
fn transient_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let server = StubServer::start(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) == 0 {
            StubReply::Status(503, "busy".into())
        } else {
            StubReply::Content("It is not a heart.\nFinal answer: no".into())
        }
    })
    .unwrap();
    let client =
        LiveClient::new(config(&server), "k".into(), Arc::new(lga::Catalog::builtin()), Arc::new(ResponseCache::in_memory()));
    let a = client.query(&query("Bring me the heart.", "pan")).unwrap();
    assert!(!a.verdict.is_yes());
    assert_eq!(server.requests(), 2);
}

#[test]
fn unparseable_answers_surface_the_transcript() {
    let server = StubServer::start(|_| StubReply::Content("Possibly, it depends.".into())).unwrap();
    let cfg = LiveConfig { retries: 2, ..config(&server) };
    let client = LiveClient::new(cfg, "k".into(), Arc::new(lga::Catalog::builtin()), Arc::new(ResponseCache::in_memory()));
    match client.query(&query("Bring me the heart.", "heart")) {
        Err(LmError::Backend { transcript, attempts, .. }) => {
            assert_eq!(attempts, 2);
            assert_eq!(transcript, "Possibly, it depends.");
        }
        other => panic!("expected backend error, got {other:?}"),
    }
    assert!(client.cache().is_empty());
}
