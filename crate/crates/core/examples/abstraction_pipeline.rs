//! textualize → abstract_features → instantiate, with the rule oracle as
//! the relevance backend.
//!
//!     cargo run --example abstraction_pipeline -- "Sweep the block without touching the pan."

use std::sync::Arc;

use lga::abstraction::{abstract_features, instantiate, textualize};
use lga::lm::RuleOracle;
use lga::sim::{sample_scene, segment};
use lga::Registry;

fn main() {
    let utterance = std::env::args().nth(1).unwrap_or_else(|| "Bring me the red heart.".into());
    let reg = Arc::new(Registry::builtin());
    let cat = reg.catalog();
    let spec = reg.by_utterance(&utterance).expect("utterance of a registered scenario");
    let scene = sample_scene(cat, spec, &spec.truth, 11).unwrap();
    let seg = segment(cat, &scene);

    let phi = textualize(cat, &scene, &seg);
    println!("φ ({} objects):", phi.len());
    for e in &phi.entries {
        println!("  {} / {} @ {:?}", e.object_type, e.texture, e.anchor);
    }

    let oracle = RuleOracle::new(reg.clone());
    let (afs, transcript) = abstract_features(cat, &phi, &utterance, &oracle).unwrap();
    let yes = transcript.iter().filter(|t| t.answer.verdict.is_yes()).count();
    println!("{} queries, {yes} yes", transcript.len());
    println!("φ̂ = {}", afs.feature_text());

    let mask = instantiate(&afs, &scene, &seg, cat);
    println!("target pixels {}, avoid pixels {}", mask.channel_pixels(0).len(), mask.channel_pixels(1).len());
    for y in (0..mask.height).step_by(2) {
        let row: String = (0..mask.width)
            .step_by(2)
            .map(|x| match (mask.get(x, y, 0) > 0.0, mask.get(x, y, 1) > 0.0) {
                (true, _) => '#',
                (_, true) => 'x',
                _ => '.',
            })
            .collect();
        println!("{row}");
    }
}
