//! DART copies: k noisy versions of each demonstration. Coordinates are
//! clamped to the workspace, so the rms change sits below μ near the edges.

use lga::imitation::{dart_augment, DartConfig, DemoSet};
use lga::Registry;

fn main() {
    let reg = Registry::builtin();
    let cat = reg.catalog();
    let spec = reg.scenario("sweep-block-line").unwrap();
    let demos = DemoSet::generate(cat, spec, &spec.truth, 10, 0).unwrap();

    for mu in [0.0, 0.05, 0.1, 0.2] {
        let cfg = DartConfig { mu, ..Default::default() };
        let aug = dart_augment(&demos, &cfg, 7).unwrap();
        let mut diffs = Vec::new();
        for (i, t) in aug.trajectories.iter().enumerate() {
            let orig = demos.trajectories[i / cfg.k].steps[0].action.0;
            let new = t.steps[0].action.0;
            diffs.extend(orig.iter().zip(new).map(|(a, b)| b - a).filter(|d| *d != 0.0));
        }
        let std = (diffs.iter().fold(0.0, |s, d| s + d * d) / diffs.len().max(1) as f64).sqrt();
        println!(
            "mu {mu:.2}: {} demos -> {}, {} perturbed coordinates, rms change {std:.3}",
            demos.len(),
            aug.len(),
            diffs.len()
        );
    }
}
