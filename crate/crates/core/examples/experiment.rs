//! A small experiment grid through the harness. Defaults are sized to finish
//! in a minute or two; the `lga run` command exposes the full grids.
//!
//!     cargo run --release --example experiment -- q2 [out-dir]

use std::path::PathBuf;
use std::sync::Arc;

use lga::harness::{run, ExperimentConfig, Method, Protocol, Report, Shift};
use lga::nn::Variant;
use lga::Registry;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let protocol = match args.get(1).map(String::as_str) {
        Some("q2") => Protocol::Q2,
        Some("q3") => Protocol::Q3,
        _ => Protocol::Q1,
    };
    let mut cfg = ExperimentConfig::for_protocol(protocol);
    cfg.methods = vec![Method::plain(Variant::Lga), Method::GCBC_DART];
    cfg.seeds = vec![0];
    match protocol {
        Protocol::Q1 => {
            cfg.scenarios = vec!["red-heart".into()];
            cfg.demo_counts = vec![10, 30];
        }
        Protocol::Q2 => {
            cfg.scenarios = vec!["heart".into()];
            cfg.demo_counts = vec![30];
        }
        Protocol::Q3 => {
            cfg.scenarios = vec!["pick-up-fruit".into()];
            cfg.demo_counts = vec![30];
        }
    }

    let report = run(Arc::new(Registry::builtin()), &cfg).unwrap();
    for c in &report.cells {
        println!("{:<10} {:<14} {:>3} demos  {:<10} {:>5.2}  {}", c.method.to_string(), c.scenario, c.demos, c.shift, c.success, c.utterance);
    }
    for m in &cfg.methods {
        if let Some(s) = report.mean_success(|c| c.method == *m && c.shift != Shift::None) {
            println!("{m}: mean over shifted cells {s:.2}");
        }
    }

    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| format!("target/experiment-{protocol}")));
    report.emit(&out).unwrap();
    assert_eq!(Report::load(&out).unwrap(), report);
    println!("wrote {}", out.display());
}
