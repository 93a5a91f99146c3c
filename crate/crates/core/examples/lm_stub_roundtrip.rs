//! The live chat-completions client against the in-repo stub server, with a
//! response cache on disk. The second pass is served from the cache.

use std::sync::Arc;

use lga::abstraction::{abstract_features, FeatureSet};
use lga::lm::stub::StubServer;
use lga::lm::{build_prompt, Group, LiveClient, LiveConfig, QueryRole, ResponseCache, RuleOracle};
use lga::Registry;

fn main() {
    let reg = Arc::new(Registry::builtin());
    let cat = reg.catalog().clone();
    let server = StubServer::with_oracle(RuleOracle::new(reg.clone())).expect("stub server");
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let config = LiveConfig { endpoint: server.url(), model: "stub-model".into(), ..Default::default() };
    let utterance = "Bring me the tiger-colored object.";

    let p = build_prompt(&cat, utterance, Group::ObjectColor, "tiger", QueryRole::Target).unwrap();
    println!("system prompt: {} bytes\nuser prompt:\n{}\n", p.system.len(), p.user);

    for pass in 1..=2 {
        let cache = Arc::new(ResponseCache::open(&cache_path).unwrap());
        let client = LiveClient::new(config.clone(), "test-key".into(), cat.clone(), cache);
        let (afs, _) = abstract_features(&cat, &FeatureSet::default(), utterance, &client).unwrap();
        println!(
            "pass {pass}: {} HTTP requests, {} cached answers, φ̂ = {}",
            client.requests(),
            client.cache().len(),
            afs.feature_text()
        );
    }
    println!("stub saw {} requests in total", server.requests());
}
