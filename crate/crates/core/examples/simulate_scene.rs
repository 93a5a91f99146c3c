//! Sample a scene, let the scripted demonstrator act, check success.
//!
//!     cargo run --example simulate_scene -- [scenario-id] [seed]

use lga::sim::{check_success, oracle_action, render, sample_scene, segment, step};
use lga::Registry;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let id = args.get(1).map_or("red-heart", String::as_str);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let reg = Registry::builtin();
    let cat = reg.catalog();
    let spec = reg.scenario(id).expect("registered scenario");
    let scene = sample_scene(cat, spec, &spec.truth, seed).expect("scene");

    println!("{:?}  {:?}", spec.task, spec.utterance);
    for (i, o) in scene.objects.iter().enumerate() {
        println!(
            "  {} {:<10} {:<28} at ({:.3}, {:.3})  {:?}",
            i + 1,
            cat.type_name(o.object_type),
            cat.texture_name(o.texture),
            o.position[0],
            o.position[1],
            o.role
        );
    }

    // Segmentation labels, every other pixel.
    let seg = segment(cat, &scene);
    for y in (0..seg.height).step_by(2) {
        let row: String = (0..seg.width)
            .step_by(2)
            .map(|x| match seg.labels[y * seg.width + x] {
                0 => '.',
                l => char::from(b'0' + l),
            })
            .collect();
        println!("{row}");
    }

    let obs = render(cat, &scene);
    let mean = obs.pixels.iter().map(|&v| v as f64).sum::<f64>() / obs.pixels.len() as f64;
    println!("rendered {}x{}x3, mean intensity {mean:.3}", obs.height, obs.width);

    let action = oracle_action(cat, spec, &scene).expect("oracle");
    let out = step(cat, &scene, &action).expect("step");
    println!("oracle action {:?} moved object {:?}", action.0, out.moved.map(|i| i + 1));
    println!("success: {}", check_success(cat, spec, &scene, &out.scene, &spec.success));
}
