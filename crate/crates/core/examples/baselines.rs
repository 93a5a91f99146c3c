//! Oracle and uniform-random policies through the evaluation loop.

use std::sync::Arc;

use lga::harness::{evaluate, OraclePolicy, RandomPolicy};
use lga::sim::SceneRecipe;
use lga::Registry;

fn main() {
    let reg = Arc::new(Registry::builtin());
    let oracle = OraclePolicy::new(reg.clone());
    let random = RandomPolicy { seed: 0 };
    println!("{:<22} {:>7} {:>7}", "scenario", "oracle", "random");
    for spec in reg.scenarios() {
        let recipe = SceneRecipe::standard(spec, &spec.truth).unwrap();
        let o = evaluate(&oracle, reg.catalog(), spec, &recipe, 20, 0).unwrap();
        let r = evaluate(&random, reg.catalog(), spec, &recipe, 1000, 0).unwrap();
        println!("{:<22} {:>7.2} {:>7.3}", spec.id, o.rate(), r.rate());
    }
}
