//! Human-in-the-loop refinement, driven by a script instead of a console.
//! Run `lga abstract --task red-heart --hill` for the interactive version.

use std::sync::Arc;

use lga::abstraction::refine_interactive;
use lga::harness::build_abstractor;
use lga::harness::Backend;
use lga::Registry;

fn main() {
    let reg = Arc::new(Registry::builtin());
    let abs = build_abstractor(&reg, &Backend::Oracle).unwrap();
    let proposed = abs.features("Bring me the red heart.").unwrap();

    let script = "show\nremove textures red paisley\nadd textures pink\nadd objects teapot\ndone\n";
    let mut console = Vec::new();
    let rec = refine_interactive(reg.catalog(), &proposed, &mut script.as_bytes(), &mut console).unwrap();
    print!("{}", String::from_utf8_lossy(&console));
    println!();
    for e in &rec.edits {
        println!("{:?} {} {:?}: {}", e.op, e.set, e.name, if e.accepted { "ok" } else { "rejected" });
    }
    println!("before: {}", rec.before.feature_text());
    println!("after:  {}", rec.after.feature_text());

    // The refined set drives the masks from here on.
    abs.insert("Bring me the red heart.", rec.after);
}
