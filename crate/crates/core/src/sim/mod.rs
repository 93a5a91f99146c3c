//! Deterministic 2D tabletop world.
//!
//! The workspace is the unit square `[0,1)²` rendered top-down at 64×64.
//! Objects spawn at the centres of the four quadrants. Episodes are a single
//! high-level action: pick-and-place, rotate, or sweep.

mod catalog;
mod demo;
mod geometry;
mod oracle;
mod render;
mod sample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    Catalog, Footprint, ObjectType, ObjectTypeId, Pattern, Texture, TextureId, OBJECT_TYPE_COUNT,
    TEXTURE_COUNT,
};
pub use demo::{read_demos, write_demos, DemoFile, Step, Trajectory, DEMO_FORMAT_VERSION};
pub use geometry::{swept_path_hits, swept_path_hits_sampled};
pub use oracle::oracle_action;
pub use render::{object_pixels, render, segment, CoveredPixel, Observation, SegmentationMask};
pub use sample::{sample_recipe, sample_scene, SceneRecipe};

use crate::scenario::{ScenarioSpec, TaskKind};

/// Centres of the four workspace quadrants.
pub const SPAWN_LOCATIONS: [[f64; 2]; 4] = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
/// Spawn slot reserved for the pallet in pick-and-place scenes.
pub const GOAL_SLOT: usize = 3;
pub const GOAL_OBJECT: &str = "pallet";
pub const GOAL_TEXTURE: &str = "wooden";
pub const MAX_OBJECTS: usize = 4;
/// Sweep goal zone is the band `x >= SWEEP_GOAL_X`.
pub const SWEEP_GOAL_X: f64 = 0.875;
/// Preferred sweep end-point abscissa used by the oracle.
pub const SWEEP_END_X: f64 = 0.9375;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("catalog error: {0}")]
    Catalog(String),
    #[error("specification error: {0}")]
    Specification(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("action error: {0}")]
    Action(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("demo file error: {0}")]
    DemoFile(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Distractor,
    Obstacle,
    Goal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_type: ObjectTypeId,
    pub texture: TextureId,
    /// `(x, y)` in workspace units; `x` grows rightwards, `y` downwards.
    pub position: [f64; 2],
    /// Degrees in `[0, 360)`.
    pub rotation: f64,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub rng_seed: u64,
    pub task_ref: String,
    pub task: TaskKind,
}

impl Scene {
    pub fn empty(task: TaskKind, task_ref: &str) -> Self {
        Self { objects: Vec::new(), rng_seed: 0, task_ref: task_ref.to_string(), task }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.objects.len() > MAX_OBJECTS {
            return Err(SimError::InvalidScene(format!("{} objects (max {MAX_OBJECTS})", self.objects.len())));
        }
        if self.objects.iter().filter(|o| o.role == Role::Goal).count() > 1 {
            return Err(SimError::InvalidScene("more than one goal object".into()));
        }
        for o in &self.objects {
            if !o.position.iter().all(|v| (0.0..1.0).contains(v)) {
                return Err(SimError::InvalidScene(format!("position {:?} outside workspace", o.position)));
            }
        }
        Ok(())
    }

    pub fn goal(&self) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.role == Role::Goal)
    }

    pub fn index_of_role(&self, role: Role) -> Option<usize> {
        self.objects.iter().position(|o| o.role == role)
    }
}

/// A 4-vector action. Pick/sweep: `(x1, y1, x2, y2)`; rotate: `(x, y, cos θ, sin θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub [f64; 4]);

impl Action {
    pub fn pick_point(&self) -> [f64; 2] {
        [self.0[0], self.0[1]]
    }

    pub fn validate(&self, task: TaskKind) -> Result<(), SimError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.0.iter().all(|v| v.is_finite()) {
            return Err(SimError::Action(format!("non-finite component in {:?}", self.0)));
        }
        match task {
            TaskKind::PickPlace | TaskKind::Sweep => {
                if !self.0.iter().all(|&v| unit(v)) {
                    return Err(SimError::Action(format!("coordinates outside [0,1]: {:?}", self.0)));
                }
            }
            TaskKind::Rotate => {
                if !unit(self.0[0]) || !unit(self.0[1]) {
                    return Err(SimError::Action(format!("pick point outside [0,1]: {:?}", self.0)));
                }
                let norm = self.0[2] * self.0[2] + self.0[3] * self.0[3];
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(SimError::Action(format!("rotation components not unit length: {norm}")));
                }
            }
        }
        Ok(())
    }
}

/// Result of executing one action.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub scene: Scene,
    /// Index of the object that was acted on, `None` for a no-op.
    pub moved: Option<usize>,
    /// Sweep only: whether the swept footprint touched an obstacle.
    pub path_hits_obstacle: bool,
}

impl StepOutcome {
    pub fn is_noop(&self) -> bool {
        self.moved.is_none()
    }
}

/// Pixel cell containing a workspace coordinate.
pub(crate) fn to_pixel(v: f64, res: usize) -> i32 {
    ((v * res as f64).floor() as i32).clamp(0, res as i32 - 1)
}

fn clamp_workspace(v: f64) -> f64 {
    v.clamp(0.0, 1.0 - 1e-9)
}

/// Index of the topmost object whose footprint covers the given point.
pub fn object_at(catalog: &Catalog, scene: &Scene, point: [f64; 2]) -> Option<usize> {
    let res = catalog.resolution();
    let (px, py) = (to_pixel(point[0], res), to_pixel(point[1], res));
    scene
        .objects
        .iter()
        .enumerate()
        .rev()
        .find(|(_, o)| object_pixels(catalog, o).iter().any(|c| c.x == px && c.y == py))
        .map(|(i, _)| i)
}

/// Executes a high-level action. Picking empty space leaves the scene unchanged.
pub fn step(catalog: &Catalog, scene: &Scene, action: &Action) -> Result<StepOutcome, SimError> {
    action.validate(scene.task)?;
    let Some(idx) = object_at(catalog, scene, action.pick_point()) else {
        return Ok(StepOutcome { scene: scene.clone(), moved: None, path_hits_obstacle: false });
    };
    let mut next = scene.clone();
    let a = action.0;
    let mut hits = false;
    match scene.task {
        TaskKind::PickPlace => {
            next.objects[idx].position = [clamp_workspace(a[2]), clamp_workspace(a[3])];
        }
        TaskKind::Rotate => {
            next.objects[idx].rotation = a[3].atan2(a[2]).to_degrees().rem_euclid(360.0);
        }
        TaskKind::Sweep => {
            let p = scene.objects[idx].position;
            next.objects[idx].position =
                [clamp_workspace(p[0] + a[2] - a[0]), clamp_workspace(p[1] + a[3] - a[1])];
            hits = sweep_hits_obstacle(catalog, scene, idx, next.objects[idx].position);
        }
    }
    Ok(StepOutcome { scene: next, moved: Some(idx), path_hits_obstacle: hits })
}

fn sweep_hits_obstacle(catalog: &Catalog, scene: &Scene, idx: usize, to: [f64; 2]) -> bool {
    let res = catalog.resolution();
    let obj = &scene.objects[idx];
    let blocked: Vec<(i32, i32)> = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(i, o)| *i != idx && o.role == Role::Obstacle)
        .flat_map(|(_, o)| object_pixels(catalog, o).into_iter().map(|c| (c.x, c.y)))
        .collect();
    if blocked.is_empty() {
        return false;
    }
    let anchor = (to_pixel(obj.position[0], res), to_pixel(obj.position[1], res));
    let offsets: Vec<(i32, i32)> =
        object_pixels(catalog, obj).iter().map(|c| (c.x - anchor.0, c.y - anchor.1)).collect();
    let delta = ((to[0] - obj.position[0]) * res as f64, (to[1] - obj.position[1]) * res as f64);
    swept_path_hits(&offsets, anchor, delta, &blocked)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessParams {
    /// Placement radius in workspace units (inclusive).
    pub epsilon: f64,
    /// Angular tolerance in degrees (inclusive).
    pub epsilon_theta: f64,
}

impl Default for SuccessParams {
    fn default() -> Self {
        Self { epsilon: 0.08, epsilon_theta: 10.0 }
    }
}

/// Smallest absolute difference between two angles in degrees.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Success predicate for a single-step episode `before → after`.
pub fn check_success(
    catalog: &Catalog,
    spec: &ScenarioSpec,
    before: &Scene,
    after: &Scene,
    params: &SuccessParams,
) -> bool {
    if before.objects.len() != after.objects.len() {
        return false;
    }
    let changed: Vec<usize> = (0..before.objects.len())
        .filter(|&i| before.objects[i] != after.objects[i])
        .collect();
    let [idx] = changed[..] else { return false };
    let (b, a) = (&before.objects[idx], &after.objects[idx]);
    if b.role != Role::Target {
        return false;
    }
    match spec.task {
        TaskKind::PickPlace => match after.goal() {
            Some(goal) => {
                let d = ((a.position[0] - goal.position[0]).powi(2)
                    + (a.position[1] - goal.position[1]).powi(2))
                .sqrt();
                d <= params.epsilon
            }
            None => false,
        },
        TaskKind::Rotate => {
            let Some(target_deg) = spec.rotation_degrees else { return false };
            a.position == b.position && angle_diff_deg(a.rotation, target_deg) <= params.epsilon_theta
        }
        TaskKind::Sweep => {
            a.position[0] >= SWEEP_GOAL_X && !sweep_hits_obstacle(catalog, before, idx, a.position)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Registry;

    fn obj(cat: &Catalog, t: &str, x: &str, pos: [f64; 2], role: Role) -> SceneObject {
        SceneObject {
            object_type: cat.type_id(t).unwrap(),
            texture: cat.texture_id(x).unwrap(),
            position: pos,
            rotation: 0.0,
            role,
        }
    }

    fn pick_scene(cat: &Catalog) -> Scene {
        Scene {
            objects: vec![
                obj(cat, "heart", "red", [0.25, 0.25], Role::Target),
                obj(cat, "block", "blue", [0.75, 0.25], Role::Distractor),
                obj(cat, "pallet", "wooden", [0.75, 0.75], Role::Goal),
            ],
            rng_seed: 0,
            task_ref: "red-heart".into(),
            task: TaskKind::PickPlace,
        }
    }

    #[test]
    fn pick_and_place_moves_target() {
        let cat = Catalog::builtin();
        let s = pick_scene(&cat);
        let out = step(&cat, &s, &Action([0.25, 0.25, 0.75, 0.75])).unwrap();
        assert_eq!(out.moved, Some(0));
        assert_eq!(out.scene.objects[0].position, [0.75, 0.75]);
        assert_eq!(out.scene.objects.len(), s.objects.len());
    }

    #[test]
    fn background_pick_is_noop() {
        let cat = Catalog::builtin();
        let s = pick_scene(&cat);
        let out = step(&cat, &s, &Action([0.5, 0.5, 0.75, 0.75])).unwrap();
        assert!(out.is_noop());
        assert_eq!(out.scene, s);
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let cat = Catalog::builtin();
        let s = pick_scene(&cat);
        assert!(matches!(step(&cat, &s, &Action([1.2, 0.2, 0.5, 0.5])), Err(SimError::Action(_))));
        let mut r = s.clone();
        r.task = TaskKind::Rotate;
        assert!(matches!(step(&cat, &r, &Action([0.25, 0.25, 1.0, 1.0])), Err(SimError::Action(_))));
    }

    #[test]
    fn success_radius_is_inclusive_and_strict_beyond() {
        let cat = Catalog::builtin();
        let reg = Registry::builtin();
        let spec = reg.scenario("red-heart").unwrap();
        let s = pick_scene(&cat);
        let params = SuccessParams::default();
        let at = |x: f64| {
            let mut a = s.clone();
            a.objects[0].position = [x, 0.75];
            a
        };
        assert!(check_success(&cat, spec, &s, &at(0.75), &params));
        assert!(!check_success(&cat, spec, &s, &at(0.75 - params.epsilon - 0.001), &params));
        // Moving the distractor instead never succeeds.
        let mut wrong = s.clone();
        wrong.objects[1].position = [0.75, 0.75];
        assert!(!check_success(&cat, spec, &s, &wrong, &params));
    }

    #[test]
    fn rotate_sets_angle() {
        let cat = Catalog::builtin();
        let mut s = pick_scene(&cat);
        s.task = TaskKind::Rotate;
        let th = 125f64.to_radians();
        let out = step(&cat, &s, &Action([0.25, 0.25, th.cos(), th.sin()])).unwrap();
        assert!((out.scene.objects[0].rotation - 125.0).abs() < 1e-9);
        assert!(angle_diff_deg(359.0, 1.0) - 2.0 < 1e-12);
    }

    #[test]
    fn sweep_through_obstacle_is_flagged() {
        let cat = Catalog::builtin();
        let s = Scene {
            objects: vec![
                obj(&cat, "block", "red", [0.25, 0.25], Role::Target),
                obj(&cat, "pan", "blue", [0.75, 0.25], Role::Obstacle),
            ],
            rng_seed: 0,
            task_ref: "sweep-block-pan".into(),
            task: TaskKind::Sweep,
        };
        let direct = step(&cat, &s, &Action([0.25, 0.25, SWEEP_END_X, 0.25])).unwrap();
        assert!(direct.path_hits_obstacle);
        let around = step(&cat, &s, &Action([0.25, 0.25, SWEEP_END_X, 0.9])).unwrap();
        assert!(!around.path_hits_obstacle);
    }
}
