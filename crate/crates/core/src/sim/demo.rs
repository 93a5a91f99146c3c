//! Trajectories and the on-disk demonstration format.
//!
//! Demo files are JSON:
//!
//! ```json
//! { "format": "lga-demos", "version": 1, "seed": 7, "catalog_hash": "…",
//!   "scenario": "heart",
//!   "trajectories": [ { "utterance": "…", "steps": [ { "scene": {…}, "action": [x1, y1, x2, y2] } ] } ] }
//! ```
//!
//! Observations are not stored; they are re-rendered from the scene on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render, Action, Catalog, Observation, Scene, SimError};

pub const DEMO_FORMAT_VERSION: u32 = 1;
const DEMO_FORMAT: &str = "lga-demos";

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub scene: Scene,
    pub observation: Observation,
    pub action: Action,
}

/// A demonstration: steps sharing one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub utterance: String,
}

impl Trajectory {
    /// Single-step trajectory, rendering the observation.
    pub fn single(catalog: &Catalog, scene: Scene, action: Action, utterance: &str) -> Self {
        let observation = render(catalog, &scene);
        Self { steps: vec![Step { scene, observation, action }], utterance: utterance.to_string() }
    }
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    scene: Scene,
    action: Action,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    utterance: String,
    steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct DemoFile {
    format: String,
    version: u32,
    pub seed: u64,
    pub catalog_hash: String,
    pub scenario: String,
    trajectories: Vec<TrajectoryRecord>,
}

pub fn write_demos(
    path: &Path,
    catalog: &Catalog,
    scenario: &str,
    seed: u64,
    trajectories: &[Trajectory],
) -> Result<(), SimError> {
    let file = DemoFile {
        format: DEMO_FORMAT.into(),
        version: DEMO_FORMAT_VERSION,
        seed,
        catalog_hash: catalog.hash().to_string(),
        scenario: scenario.to_string(),
        trajectories: trajectories
            .iter()
            .map(|t| TrajectoryRecord {
                utterance: t.utterance.clone(),
                steps: t.steps.iter().map(|s| StepRecord { scene: s.scene.clone(), action: s.action }).collect(),
            })
            .collect(),
    };
    let bytes = serde_json::to_vec_pretty(&file).map_err(|e| SimError::DemoFile(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| SimError::DemoFile(format!("{}: {e}", path.display())))
}

/// Reads a demo file, checking format, version and catalog hash.
pub fn read_demos(path: &Path, catalog: &Catalog) -> Result<(DemoFile, Vec<Trajectory>), SimError> {
    let bytes = std::fs::read(path).map_err(|e| SimError::DemoFile(format!("{}: {e}", path.display())))?;
    let mut file: DemoFile = serde_json::from_slice(&bytes).map_err(|e| SimError::DemoFile(e.to_string()))?;
    if file.format != DEMO_FORMAT || file.version != DEMO_FORMAT_VERSION {
        return Err(SimError::DemoFile(format!("unsupported format {} v{}", file.format, file.version)));
    }
    if file.catalog_hash != catalog.hash() {
        return Err(SimError::DemoFile("catalog hash mismatch".into()));
    }
    let mut out = Vec::with_capacity(file.trajectories.len());
    for t in std::mem::take(&mut file.trajectories) {
        if t.steps.is_empty() {
            return Err(SimError::DemoFile("empty trajectory".into()));
        }
        let steps = t
            .steps
            .into_iter()
            .map(|s| {
                s.scene.validate()?;
                let observation = render(catalog, &s.scene);
                Ok(Step { scene: s.scene, observation, action: s.action })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        out.push(Trajectory { steps, utterance: t.utterance });
    }
    Ok((file, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Registry;
    use crate::sim::{oracle_action, sample_scene};

    #[test]
    fn demo_file_round_trip() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("rotate-block").unwrap();
        let trajs: Vec<_> = (0..3)
            .map(|s| {
                let scene = sample_scene(cat, spec, &spec.truth, s).unwrap();
                let a = oracle_action(cat, spec, &scene).unwrap();
                Trajectory::single(cat, scene, a, &spec.utterance)
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.json");
        write_demos(&path, cat, &spec.id, 11, &trajs).unwrap();
        let (meta, back) = read_demos(&path, cat).unwrap();
        assert_eq!(meta.seed, 11);
        assert_eq!(meta.scenario, "rotate-block");
        assert_eq!(back, trajs);
    }
}
