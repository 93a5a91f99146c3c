//! Train LGA and GCBC on one scenario, save/load a checkpoint, evaluate.
//!
//!     cargo run --release --example train_policy -- [scenario-id] [demos]

use std::sync::Arc;

use lga::abstraction::Abstractor;
use lga::harness::evaluate;
use lga::imitation::{train, DemoSet, TrainConfig, TrainedPolicy};
use lga::lm::RuleOracle;
use lga::nn::{load_checkpoint, save_checkpoint, Variant};
use lga::sim::SceneRecipe;
use lga::Registry;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let id = args.get(1).map_or("heart", String::as_str);
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);

    let reg = Arc::new(Registry::builtin());
    let cat = reg.catalog().clone();
    let spec = reg.scenario(id).expect("scenario");
    let demos = DemoSet::generate(&cat, spec, &spec.truth, n, 0).unwrap();
    let abs = Arc::new(Abstractor::with_backend(cat.clone(), Arc::new(RuleOracle::new(reg.clone()))));
    let recipe = SceneRecipe::standard(spec, &spec.truth).unwrap();
    let dir = tempfile::tempdir().unwrap();

    for variant in [Variant::Lga, Variant::Gcbc] {
        let cfg = TrainConfig { max_epochs: 300, seed: 1, ..Default::default() };
        let t = std::time::Instant::now();
        let mut out = train(variant, &demos, &cfg, &cat, Some(&abs)).unwrap();
        println!(
            "{variant}: {} epochs in {:.1}s, loss {:.4} -> {:.5}",
            out.losses.len(),
            t.elapsed().as_secs_f64(),
            out.losses[0],
            out.losses.last().unwrap()
        );

        let path = dir.path().join(format!("{variant}.ckpt"));
        save_checkpoint(&path, &mut out.net, cfg.seed, cat.hash()).unwrap();
        let (net, meta) = load_checkpoint::<f32>(&path, cat.hash()).unwrap();
        let policy = TrainedPolicy { variant: meta.variant, net, catalog: cat.clone(), abstractor: Some(abs.clone()) };
        let r = evaluate(&policy, &cat, spec, &recipe, 20, 99).unwrap();
        println!("  reloaded checkpoint: {}/{} test states solved", r.successes, r.n);
    }
}
