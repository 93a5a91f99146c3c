use std::fmt;
use std::io::{self, BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::AbstractFeatureSet;
use crate::sim::Catalog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameSet {
    Objects,
    Textures,
    AvoidObjects,
    AvoidTextures,
}

impl NameSet {
    pub const ALL: [NameSet; 4] = [NameSet::Objects, NameSet::Textures, NameSet::AvoidObjects, NameSet::AvoidTextures];

    pub fn key(self) -> &'static str {
        match self {
            NameSet::Objects => "objects",
            NameSet::Textures => "textures",
            NameSet::AvoidObjects => "avoid_objects",
            NameSet::AvoidTextures => "avoid_textures",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        NameSet::ALL.into_iter().find(|n| n.key() == s)
    }

    /// Whether `name` is a catalog entry of the right kind for this set.
    pub fn accepts(self, catalog: &Catalog, name: &str) -> bool {
        match self {
            NameSet::Objects | NameSet::AvoidObjects => catalog.type_id(name).is_some(),
            NameSet::Textures | NameSet::AvoidTextures => catalog.texture_id(name).is_some(),
        }
    }
}

impl fmt::Display for NameSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Add,
    Remove,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub op: EditOp,
    pub set: NameSet,
    pub name: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementRecord {
    pub before: AbstractFeatureSet,
    pub after: AbstractFeatureSet,
    pub edits: Vec<Edit>,
    pub elapsed_secs: f64,
}

impl RefinementRecord {
    /// Applies the accepted edits to `before`.
    pub fn replay(&self) -> AbstractFeatureSet {
        let mut afs = self.before.clone();
        for e in self.edits.iter().filter(|e| e.accepted) {
            match e.op {
                EditOp::Add => afs.set_mut(e.set).insert(e.name.clone()),
                EditOp::Remove => afs.set_mut(e.set).remove(&e.name),
            };
        }
        afs
    }
}

const HELP: &str = "commands: add <set> <name> | remove <set> <name> | show | done\nsets: objects, textures, avoid_objects, avoid_textures";

fn show(afs: &AbstractFeatureSet, out: &mut impl Write) -> io::Result<()> {
    for which in NameSet::ALL {
        let names: Vec<&str> = afs.set(which).iter().map(String::as_str).collect();
        writeln!(out, "{which}: [{}]", names.join(", "))?;
    }
    Ok(())
}

/// Console review of a proposed feature set. Reads commands until `done` or
/// end of input; bad edits are rejected and the session continues.
pub fn refine_interactive(
    catalog: &Catalog,
    afs: &AbstractFeatureSet,
    input: &mut impl BufRead,
    out: &mut impl Write,
) -> io::Result<RefinementRecord> {
    let start = Instant::now();
    let mut cur = afs.clone();
    let mut edits = Vec::new();
    writeln!(out, "Proposed abstraction:")?;
    show(&cur, out)?;
    writeln!(out, "{HELP}")?;
    let mut line = String::new();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let cmd = line.trim();
        let (verb, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
        let op = match verb {
            "" => continue,
            "done" => break,
            "show" => {
                show(&cur, out)?;
                continue;
            }
            "add" => EditOp::Add,
            "remove" => EditOp::Remove,
            _ => {
                writeln!(out, "unknown command {verb:?}\n{HELP}")?;
                continue;
            }
        };
        let rest = rest.trim();
        let (set_word, name) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let name = name.trim();
        let Some(set) = NameSet::parse(set_word) else {
            writeln!(out, "unknown set {set_word:?}\n{HELP}")?;
            continue;
        };
        let mut edit = Edit { op, set, name: name.to_string(), accepted: true, reason: None };
        if !set.accepts(catalog, name) {
            edit.accepted = false;
            edit.reason = Some(format!("{name:?} is not a catalog name for {set}"));
        } else if op == EditOp::Remove && !cur.set(set).contains(name) {
            edit.accepted = false;
            edit.reason = Some(format!("{name:?} is not in {set}"));
        }
        match (&edit.reason, op) {
            (Some(r), _) => writeln!(out, "rejected: {r}")?,
            (None, EditOp::Add) => {
                cur.set_mut(set).insert(name.to_string());
                writeln!(out, "added {name:?} to {set}")?;
            }
            (None, EditOp::Remove) => {
                cur.set_mut(set).remove(name);
                writeln!(out, "removed {name:?} from {set}")?;
            }
        }
        edits.push(edit);
    }
    Ok(RefinementRecord { before: afs.clone(), after: cur, edits, elapsed_secs: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(afs: &AbstractFeatureSet, script: &str) -> (RefinementRecord, String) {
        let cat = Catalog::builtin();
        let mut out = Vec::new();
        let rec = refine_interactive(&cat, afs, &mut script.as_bytes(), &mut out).unwrap();
        (rec, String::from_utf8(out).unwrap())
    }

    fn base() -> AbstractFeatureSet {
        AbstractFeatureSet {
            objects: ["heart".to_string()].into(),
            textures: ["red".to_string()].into(),
            ..Default::default()
        }
    }

    #[test]
    fn confirm_without_edits() {
        let (rec, out) = run(&base(), "done\n");
        assert_eq!(rec.after, rec.before);
        assert!(rec.edits.is_empty());
        assert!(out.contains("objects: [heart]"));
        assert!(rec.elapsed_secs >= 0.0);
    }

    #[test]
    fn add_texture() {
        let (rec, _) = run(&base(), "add textures dark red\nshow\ndone\n");
        assert!(rec.after.textures.contains("dark red") && rec.after.textures.contains("red"));
        assert_eq!(rec.replay(), rec.after);
    }

    #[test]
    fn bad_edits_are_rejected_and_session_continues() {
        let (rec, out) = run(&base(), "add objects teapot\nremove textures blue\nfly away\nadd avoid_objects pan\n");
        assert_eq!(rec.edits.len(), 3);
        assert!(!rec.edits[0].accepted && !rec.edits[1].accepted && rec.edits[2].accepted);
        assert!(out.contains("rejected"));
        assert!(rec.after.avoid_objects.contains("pan"));
        assert_eq!(rec.after.textures, rec.before.textures);
        assert_eq!(rec.replay(), rec.after);
    }
}
