use std::path::Path;

use super::ImitationError;
use crate::scenario::{FeatureDistribution, MultiTaskSpec, ScenarioSpec};
use crate::sim::{
    oracle_action, read_demos, sample_recipe, write_demos, Catalog, SceneRecipe, SimError, Trajectory,
};
use crate::util::derive_seed;

/// Expert demonstrations for one scenario (D_train).
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet {
    pub scenario: String,
    pub seed: u64,
    pub catalog_hash: String,
    pub trajectories: Vec<Trajectory>,
}

/// Recipe for one seen sub-task of a multi-task family: distractors avoid
/// every sibling's distribution.
pub fn multitask_recipe(mt: &MultiTaskSpec, sub: &ScenarioSpec) -> Result<SceneRecipe, SimError> {
    let mut r = SceneRecipe::standard(sub, &sub.truth)?;
    r.exclude = mt.exclusion();
    Ok(r)
}

impl DemoSet {
    pub fn new(scenario: &str, seed: u64, catalog_hash: &str, trajectories: Vec<Trajectory>) -> Result<Self, ImitationError> {
        if trajectories.is_empty() || trajectories.iter().any(|t| t.steps.is_empty()) {
            return Err(ImitationError::EmptyDemos);
        }
        Ok(Self { scenario: scenario.into(), seed, catalog_hash: catalog_hash.into(), trajectories })
    }

    /// `n` oracle demonstrations on scenes drawn from `dist`.
    pub fn generate(
        catalog: &Catalog,
        spec: &ScenarioSpec,
        dist: &FeatureDistribution,
        n: usize,
        seed: u64,
    ) -> Result<Self, ImitationError> {
        let recipe = SceneRecipe::standard(spec, dist)?;
        Self::generate_mixed(catalog, &spec.id, &[(spec, recipe)], n, seed)
    }

    /// Multi-task demonstrations cycling through the seen sub-utterances.
    pub fn generate_multitask(catalog: &Catalog, mt: &MultiTaskSpec, n: usize, seed: u64) -> Result<Self, ImitationError> {
        let tasks = mt
            .seen
            .iter()
            .map(|s| Ok((s, multitask_recipe(mt, s)?)))
            .collect::<Result<Vec<_>, SimError>>()?;
        Self::generate_mixed(catalog, &mt.id, &tasks, n, seed)
    }

    fn generate_mixed(
        catalog: &Catalog,
        id: &str,
        tasks: &[(&ScenarioSpec, SceneRecipe)],
        n: usize,
        seed: u64,
    ) -> Result<Self, ImitationError> {
        let mut trajectories = Vec::with_capacity(n);
        for i in 0..n {
            let (spec, recipe) = &tasks[i % tasks.len()];
            let scene = sample_recipe(catalog, recipe, derive_seed(seed, &["demo", id, &i.to_string()]))?;
            let action = oracle_action(catalog, spec, &scene)?;
            trajectories.push(Trajectory::single(catalog, scene, action, &spec.utterance));
        }
        Self::new(id, seed, catalog.hash(), trajectories)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn save(&self, path: &Path, catalog: &Catalog) -> Result<(), ImitationError> {
        if self.catalog_hash != catalog.hash() {
            return Err(ImitationError::CatalogMismatch);
        }
        Ok(write_demos(path, catalog, &self.scenario, self.seed, &self.trajectories)?)
    }

    pub fn load(path: &Path, catalog: &Catalog) -> Result<Self, ImitationError> {
        let (meta, trajectories) = read_demos(path, catalog)?;
        Self::new(&meta.scenario, meta.seed, &meta.catalog_hash, trajectories)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Registry;
    use crate::sim::Role;

    #[test]
    fn generation_is_seeded() {
        let reg = Registry::builtin();
        let spec = reg.scenario("heart").unwrap();
        let a = DemoSet::generate(reg.catalog(), spec, &spec.truth, 5, 1).unwrap();
        let b = DemoSet::generate(reg.catalog(), spec, &spec.truth, 5, 1).unwrap();
        let c = DemoSet::generate(reg.catalog(), spec, &spec.truth, 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn multitask_cycles_sub_utterances() {
        let reg = Registry::builtin();
        let mt = reg.multitask_spec("pick-up-fruit").unwrap();
        let d = DemoSet::generate_multitask(reg.catalog(), mt, 6, 0).unwrap();
        let utts: Vec<&str> = d.trajectories.iter().map(|t| t.utterance.as_str()).collect();
        assert_eq!(utts[0], "Bring me a tomato.");
        assert_eq!(utts[1], "Bring me an apple.");
        let cat = reg.catalog();
        for t in &d.trajectories {
            for o in t.steps[0].scene.objects.iter().filter(|o| o.role == Role::Distractor) {
                assert!(!["tomato", "apple"].contains(&cat.type_name(o.object_type)));
            }
        }
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(matches!(DemoSet::new("x", 0, "h", vec![]), Err(ImitationError::EmptyDemos)));
    }
}
