use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    object_pixels, Catalog, Role, Scene, SceneObject, SimError, GOAL_OBJECT, GOAL_SLOT, GOAL_TEXTURE,
    MAX_OBJECTS, SPAWN_LOCATIONS,
};
use crate::scenario::{FeatureDistribution, ProductSet, ScenarioSpec, TaskKind};

const PLACEMENT_RETRIES: usize = 16;
const DISTRACTOR_RETRIES: usize = 10_000;

/// Describes what to spawn: one object per slot, plus random distractors that
/// avoid every distribution in `exclude`.
#[derive(Clone, Debug)]
pub struct SceneRecipe {
    pub task: TaskKind,
    pub task_ref: String,
    pub slots: Vec<(Role, ProductSet)>,
    pub distractors: usize,
    pub exclude: Vec<FeatureDistribution>,
}

impl SceneRecipe {
    /// The standard recipe: target (and obstacle for sweeps) drawn from
    /// `dist`, one distractor outside the scenario's ground truth.
    pub fn standard(spec: &ScenarioSpec, dist: &FeatureDistribution) -> Result<Self, SimError> {
        if dist.target.is_empty() {
            return Err(SimError::Specification(format!("{}: empty target distribution", spec.id)));
        }
        let mut slots = vec![(Role::Target, dist.target.clone())];
        if spec.task == TaskKind::Sweep {
            match &dist.avoid {
                Some(a) if !a.is_empty() => slots.push((Role::Obstacle, a.clone())),
                _ => return Err(SimError::Specification(format!("{}: empty obstacle distribution", spec.id))),
            }
        }
        Ok(Self {
            task: spec.task,
            task_ref: spec.id.clone(),
            slots,
            distractors: 1,
            exclude: vec![spec.truth.clone(), dist.clone()],
        })
    }

    pub fn with_distractors(mut self, n: usize) -> Self {
        self.distractors = n;
        self
    }
}

/// Samples a scene for `spec` with target features drawn uniformly from `dist`.
pub fn sample_scene(
    catalog: &Catalog,
    spec: &ScenarioSpec,
    dist: &FeatureDistribution,
    rng_seed: u64,
) -> Result<Scene, SimError> {
    sample_recipe(catalog, &SceneRecipe::standard(spec, dist)?, rng_seed)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.gen_range(0..items.len())]
}

pub fn sample_recipe(catalog: &Catalog, recipe: &SceneRecipe, rng_seed: u64) -> Result<Scene, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut objects: Vec<(Role, SceneObject)> = Vec::new();
    for (role, set) in &recipe.slots {
        if set.is_empty() {
            return Err(SimError::Specification(format!("{}: empty {role:?} distribution", recipe.task_ref)));
        }
        let types: Vec<_> = set.types.iter().copied().collect();
        let textures: Vec<_> = set.textures.iter().copied().collect();
        objects.push((*role, SceneObject {
            object_type: pick(&mut rng, &types),
            texture: pick(&mut rng, &textures),
            position: [0.0; 2],
            rotation: 0.0,
            role: *role,
        }));
    }
    let all_types: Vec<_> = catalog.type_ids().collect();
    let all_textures: Vec<_> = catalog.texture_ids().collect();
    for _ in 0..recipe.distractors {
        let mut found = None;
        for _ in 0..DISTRACTOR_RETRIES {
            let (t, x) = (pick(&mut rng, &all_types), pick(&mut rng, &all_textures));
            if !recipe.exclude.iter().any(|d| d.contains(t, x)) {
                found = Some((t, x));
                break;
            }
        }
        let (t, x) = found.ok_or_else(|| {
            SimError::Specification(format!("{}: no distractor outside the task distribution", recipe.task_ref))
        })?;
        objects.push((Role::Distractor, SceneObject {
            object_type: t,
            texture: x,
            position: [0.0; 2],
            rotation: 0.0,
            role: Role::Distractor,
        }));
    }

    let mut free: Vec<usize> = (0..SPAWN_LOCATIONS.len()).collect();
    let goal = if recipe.task == TaskKind::PickPlace {
        free.retain(|&s| s != GOAL_SLOT);
        let t = catalog.type_id(GOAL_OBJECT).ok_or_else(|| SimError::Catalog("no pallet type".into()))?;
        let x = catalog.texture_id(GOAL_TEXTURE).ok_or_else(|| SimError::Catalog("no pallet texture".into()))?;
        Some(SceneObject { object_type: t, texture: x, position: SPAWN_LOCATIONS[GOAL_SLOT], rotation: 0.0, role: Role::Goal })
    } else {
        None
    };
    let total = objects.len() + goal.is_some() as usize;
    if objects.len() > free.len() || total > MAX_OBJECTS {
        return Err(SimError::Placement(format!(
            "{}: {} objects do not fit in {} spawn locations",
            recipe.task_ref,
            objects.len(),
            free.len()
        )));
    }

    for _ in 0..PLACEMENT_RETRIES {
        free.shuffle(&mut rng);
        let mut placed: Vec<(usize, SceneObject)> = objects
            .iter()
            .zip(&free)
            .map(|((_, o), &slot)| (slot, SceneObject { position: SPAWN_LOCATIONS[slot], ..o.clone() }))
            .collect();
        if let Some(g) = &goal {
            placed.push((GOAL_SLOT, g.clone()));
        }
        placed.sort_by_key(|(slot, _)| *slot);
        let scene = Scene {
            objects: placed.into_iter().map(|(_, o)| o).collect(),
            rng_seed,
            task_ref: recipe.task_ref.clone(),
            task: recipe.task,
        };
        if !overlaps(catalog, &scene) {
            return Ok(scene);
        }
    }
    Err(SimError::Placement(format!("{}: no collision-free placement", recipe.task_ref)))
}

fn overlaps(catalog: &Catalog, scene: &Scene) -> bool {
    let mut seen = HashSet::new();
    scene
        .objects
        .iter()
        .flat_map(|o| object_pixels(catalog, o))
        .any(|p| !seen.insert((p.x, p.y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Registry;

    #[test]
    fn red_heart_target_from_distribution() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("red-heart").unwrap();
        let scene = sample_scene(cat, spec, &spec.truth, 7).unwrap();
        let target = &scene.objects[scene.index_of_role(Role::Target).unwrap()];
        assert_eq!(cat.type_name(target.object_type), "heart");
        assert!(["red", "dark red", "dark red swirl", "red paisley"].contains(&cat.texture_name(target.texture)));
        scene.validate().unwrap();
    }

    #[test]
    fn pick_place_scenes_have_one_pallet() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        for spec in reg.scenarios().iter().filter(|s| s.task == TaskKind::PickPlace) {
            for seed in 0..20 {
                let scene = sample_scene(cat, spec, &spec.truth, seed).unwrap();
                let goals: Vec<_> = scene.objects.iter().filter(|o| o.role == Role::Goal).collect();
                assert_eq!(goals.len(), 1);
                assert_eq!(cat.type_name(goals[0].object_type), "pallet");
                assert_eq!(goals[0].position, SPAWN_LOCATIONS[GOAL_SLOT]);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let reg = Registry::builtin();
        let spec = reg.scenario("sweep-block-pan").unwrap();
        let a = sample_scene(reg.catalog(), spec, &spec.truth, 99).unwrap();
        let b = sample_scene(reg.catalog(), spec, &spec.truth, 99).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn distractors_avoid_the_ground_truth() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("heart").unwrap();
        for seed in 0..200 {
            let scene = sample_scene(cat, spec, &spec.truth, seed).unwrap();
            for o in scene.objects.iter().filter(|o| o.role == Role::Distractor) {
                assert_ne!(cat.type_name(o.object_type), "heart");
            }
        }
    }

    #[test]
    fn empty_distribution_is_a_specification_error() {
        let reg = Registry::builtin();
        let spec = reg.scenario("heart").unwrap();
        let mut dist = spec.truth.clone();
        dist.target.textures.clear();
        assert!(matches!(sample_scene(reg.catalog(), spec, &dist, 0), Err(SimError::Specification(_))));
    }

    #[test]
    fn too_many_distractors_is_a_placement_error() {
        let reg = Registry::builtin();
        let spec = reg.scenario("heart").unwrap();
        let recipe = SceneRecipe::standard(spec, &spec.truth).unwrap().with_distractors(3);
        assert!(matches!(sample_recipe(reg.catalog(), &recipe, 0), Err(SimError::Placement(_))));
    }
}
