//! Textualization, feature abstraction and instantiation of goal masks.
//!
//! ```text
//! scene ──textualize──▶ FeatureSet ──abstract_features(utterance, backend)──▶ AbstractFeatureSet
//!   └────────────────────────────────instantiate──────────────────────────────────┘──▶ AbstractObservation
//! ```

mod refine;

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use refine::{refine_interactive, Edit, EditOp, NameSet, RefinementRecord};

use crate::lm::{Group, LmError, Query, QueryRole, RelevanceAnswer, RelevanceBackend};
use crate::scenario::{normalize_utterance, TaskKind};
use crate::sim::{segment, Catalog, Scene, SegmentationMask};

/// One textualized scene object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub object_type: String,
    pub texture: String,
    /// Anchor pixel `(x, y)`.
    pub anchor: (i32, i32),
}

/// Text description of a scene (φ): one entry per object.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub entries: Vec<FeatureEntry>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn validate(&self, catalog: &Catalog) -> Result<(), AbstractionError> {
        for e in &self.entries {
            if catalog.type_id(&e.object_type).is_none() {
                return Err(AbstractionError::UnknownName(e.object_type.clone()));
            }
            if catalog.texture_id(&e.texture).is_none() {
                return Err(AbstractionError::UnknownName(e.texture.clone()));
            }
        }
        Ok(())
    }
}

/// Task-relevant feature names (φ̂).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbstractFeatureSet {
    pub objects: BTreeSet<String>,
    pub textures: BTreeSet<String>,
    #[serde(default)]
    pub avoid_objects: BTreeSet<String>,
    #[serde(default)]
    pub avoid_textures: BTreeSet<String>,
}

impl AbstractFeatureSet {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.textures.is_empty() && self.avoid_objects.is_empty() && self.avoid_textures.is_empty()
    }

    pub fn set(&self, which: NameSet) -> &BTreeSet<String> {
        match which {
            NameSet::Objects => &self.objects,
            NameSet::Textures => &self.textures,
            NameSet::AvoidObjects => &self.avoid_objects,
            NameSet::AvoidTextures => &self.avoid_textures,
        }
    }

    pub fn set_mut(&mut self, which: NameSet) -> &mut BTreeSet<String> {
        match which {
            NameSet::Objects => &mut self.objects,
            NameSet::Textures => &mut self.textures,
            NameSet::AvoidObjects => &mut self.avoid_objects,
            NameSet::AvoidTextures => &mut self.avoid_textures,
        }
    }

    /// Checks every name against the catalog.
    pub fn validate(&self, catalog: &Catalog) -> Result<(), AbstractionError> {
        for which in NameSet::ALL {
            for name in self.set(which) {
                if !which.accepts(catalog, name) {
                    return Err(AbstractionError::UnknownName(name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn matches_target(&self, object_type: &str, texture: &str) -> bool {
        self.objects.contains(object_type) && self.textures.contains(texture)
    }

    pub fn matches_avoid(&self, object_type: &str, texture: &str) -> bool {
        self.avoid_objects.contains(object_type) && self.avoid_textures.contains(texture)
    }

    /// Sorted, comma-joined names; avoid-set names carry an `avoid` prefix.
    pub fn feature_text(&self) -> String {
        let mut names: Vec<String> = self.objects.iter().chain(&self.textures).cloned().collect();
        names.extend(self.avoid_objects.iter().chain(&self.avoid_textures).map(|n| format!("avoid {n}")));
        names.sort();
        names.dedup();
        names.join(", ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feature set serializes")
    }
}

/// Two-channel goal mask (ŝ): channel 0 target, channel 1 avoid, `H × W × 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractObservation {
    pub height: usize,
    pub width: usize,
    pub mask: Vec<f32>,
}

impl AbstractObservation {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, mask: vec![0.0; height * width * 2] }
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> f32 {
        self.mask[(y * self.width + x) * 2 + channel]
    }

    /// Pixel coordinates set in `channel`.
    pub fn channel_pixels(&self, channel: usize) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.get(x, y, channel) != 0.0)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.mask.iter().all(|v| *v == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub query: Query,
    pub answer: RelevanceAnswer,
}

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("unknown catalog name {0:?}")]
    UnknownName(String),
    #[error("backend error after {} answered queries: {source}", transcript.len())]
    Backend {
        #[source]
        source: LmError,
        transcript: Vec<TranscriptEntry>,
    },
    #[error("no features recorded for utterance {0:?}")]
    MissingFeatures(String),
}

/// Reads the scene back as catalog names and anchor pixels.
pub fn textualize(catalog: &Catalog, scene: &Scene, _seg: &SegmentationMask) -> FeatureSet {
    let res = catalog.resolution();
    FeatureSet {
        entries: scene
            .objects
            .iter()
            .map(|o| FeatureEntry {
                object_type: catalog.type_name(o.object_type).to_string(),
                texture: catalog.texture_name(o.texture).to_string(),
                anchor: (crate::sim::to_pixel(o.position[0], res), crate::sim::to_pixel(o.position[1], res)),
            })
            .collect(),
    }
}

/// The queries `abstract_features` issues for an utterance, in order.
pub fn relevance_queries(catalog: &Catalog, utterance: &str) -> Vec<Query> {
    let mut roles = vec![QueryRole::Target];
    if TaskKind::infer(utterance) == TaskKind::Sweep {
        roles.push(QueryRole::Avoid);
    }
    let mut out = Vec::new();
    for role in roles {
        for t in catalog.object_types() {
            out.push(Query { utterance: utterance.into(), group: Group::ObjectType, candidate: t.name.clone(), role });
        }
        for t in catalog.textures() {
            out.push(Query { utterance: utterance.into(), group: Group::ObjectColor, candidate: t.name.clone(), role });
        }
    }
    out
}

/// Asks the backend about every catalog type and texture (and, for sweeps,
/// the avoid role) and keeps the candidates answered "yes".
pub fn abstract_features(
    catalog: &Catalog,
    fs: &FeatureSet,
    utterance: &str,
    backend: &dyn RelevanceBackend,
) -> Result<(AbstractFeatureSet, Vec<TranscriptEntry>), AbstractionError> {
    fs.validate(catalog)?;
    let mut afs = AbstractFeatureSet::default();
    let mut transcript = Vec::new();
    for q in relevance_queries(catalog, utterance) {
        let answer = match backend.query(&q) {
            Ok(a) => a,
            Err(source) => return Err(AbstractionError::Backend { source, transcript }),
        };
        if answer.verdict.is_yes() {
            let which = match (q.role, q.group) {
                (QueryRole::Target, Group::ObjectType) => NameSet::Objects,
                (QueryRole::Target, Group::ObjectColor) => NameSet::Textures,
                (QueryRole::Avoid, Group::ObjectType) => NameSet::AvoidObjects,
                (QueryRole::Avoid, Group::ObjectColor) => NameSet::AvoidTextures,
            };
            afs.set_mut(which).insert(q.candidate.clone());
        }
        transcript.push(TranscriptEntry { query: q, answer });
    }
    Ok((afs, transcript))
}

/// Rasterises the goal mask: pixels of objects whose type and texture are
/// both relevant go to channel 0; avoid matches go to channel 1.
pub fn instantiate(afs: &AbstractFeatureSet, scene: &Scene, seg: &SegmentationMask, catalog: &Catalog) -> AbstractObservation {
    let kinds: Vec<Option<usize>> = scene
        .objects
        .iter()
        .map(|o| {
            let (t, x) = (catalog.type_name(o.object_type), catalog.texture_name(o.texture));
            if afs.matches_target(t, x) {
                Some(0)
            } else if afs.matches_avoid(t, x) {
                Some(1)
            } else {
                None
            }
        })
        .collect();
    let mut out = AbstractObservation::zeros(seg.height, seg.width);
    for (i, &label) in seg.labels.iter().enumerate() {
        if label == 0 {
            continue;
        }
        if let Some(Some(ch)) = kinds.get(label as usize - 1) {
            out.mask[i * 2 + ch] = 1.0;
        }
    }
    out
}

enum Source {
    Backend(Arc<dyn RelevanceBackend>),
    Fixed(HashMap<String, AbstractFeatureSet>),
}

/// Caches φ̂ per utterance and turns scenes into goal masks.
pub struct Abstractor {
    catalog: Arc<Catalog>,
    source: Source,
    cache: Mutex<HashMap<String, AbstractFeatureSet>>,
}

impl Abstractor {
    pub fn with_backend(catalog: Arc<Catalog>, backend: Arc<dyn RelevanceBackend>) -> Self {
        Self { catalog, source: Source::Backend(backend), cache: Mutex::new(HashMap::new()) }
    }

    /// Fixed feature sets, e.g. hand-written or refined ones.
    pub fn fixed(catalog: Arc<Catalog>, sets: impl IntoIterator<Item = (String, AbstractFeatureSet)>) -> Result<Self, AbstractionError> {
        let mut map = HashMap::new();
        for (u, afs) in sets {
            afs.validate(&catalog)?;
            map.insert(normalize_utterance(&u), afs);
        }
        Ok(Self { catalog, source: Source::Fixed(map), cache: Mutex::new(HashMap::new()) })
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    /// Overrides the features for one utterance.
    pub fn insert(&self, utterance: &str, afs: AbstractFeatureSet) {
        self.cache.lock().expect("abstractor lock").insert(normalize_utterance(utterance), afs);
    }

    pub fn features(&self, utterance: &str) -> Result<AbstractFeatureSet, AbstractionError> {
        let key = normalize_utterance(utterance);
        if let Some(a) = self.cache.lock().expect("abstractor lock").get(&key) {
            return Ok(a.clone());
        }
        let afs = match &self.source {
            Source::Backend(b) => abstract_features(&self.catalog, &FeatureSet::default(), utterance, b.as_ref())?.0,
            Source::Fixed(m) => m.get(&key).cloned().ok_or_else(|| AbstractionError::MissingFeatures(utterance.into()))?,
        };
        self.cache.lock().expect("abstractor lock").insert(key, afs.clone());
        Ok(afs)
    }

    pub fn observe(&self, scene: &Scene, utterance: &str) -> Result<AbstractObservation, AbstractionError> {
        let afs = self.features(utterance)?;
        Ok(instantiate(&afs, scene, &segment(&self.catalog, scene), &self.catalog))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::lm::RuleOracle;
    use crate::scenario::Registry;
    use crate::sim::{object_pixels, sample_scene, Role, SceneObject};

    fn names(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn textualize_reads_ground_truth() {
        let cat = Catalog::builtin();
        let obj = |t: &str, x: &str, p: [f64; 2], role| SceneObject {
            object_type: cat.type_id(t).unwrap(),
            texture: cat.texture_id(x).unwrap(),
            position: p,
            rotation: 0.0,
            role,
        };
        let mut scene = Scene::empty(TaskKind::PickPlace, "red-heart");
        scene.objects = vec![
            obj("heart", "red", [0.25, 0.25], Role::Target),
            obj("block", "blue", [0.25, 0.75], Role::Distractor),
            obj("pallet", "wooden", [0.75, 0.75], Role::Goal),
        ];
        let fs = textualize(&cat, &scene, &segment(&cat, &scene));
        assert_eq!(fs.len(), 3);
        assert_eq!(fs.entries[0], FeatureEntry { object_type: "heart".into(), texture: "red".into(), anchor: (16, 16) });
        assert_eq!(fs.entries[2].object_type, "pallet");
        let empty = Scene::empty(TaskKind::PickPlace, "x");
        assert!(textualize(&cat, &empty, &segment(&cat, &empty)).is_empty());
    }

    #[test]
    fn oracle_abstraction_of_listed_tasks() {
        let reg = Arc::new(Registry::builtin());
        let cat = reg.catalog().clone();
        let oracle = RuleOracle::new(reg.clone());
        let (afs, log) = abstract_features(&cat, &FeatureSet::default(), "Bring me the red heart.", &oracle).unwrap();
        assert_eq!(afs.objects, names(&["heart"]));
        assert_eq!(afs.textures, names(&["red", "dark red", "dark red swirl", "red paisley"]));
        assert!(afs.avoid_objects.is_empty() && afs.avoid_textures.is_empty());
        assert_eq!(log.len(), 29 + 81);

        let (afs, log) =
            abstract_features(&cat, &FeatureSet::default(), "Sweep the block without touching the pan.", &oracle).unwrap();
        assert_eq!(afs.objects, names(&["block", "small block", "shorter block", "L shaped block"]));
        assert_eq!(afs.avoid_objects, names(&["pan"]));
        assert_eq!(log.len(), 2 * (29 + 81));

        let (afs, _) = abstract_features(&cat, &FeatureSet::default(), "Bring me the heart.", &oracle).unwrap();
        assert_eq!(afs.textures.len(), 81);
    }

    #[test]
    fn backend_failure_carries_partial_transcript() {
        struct Flaky;
        impl RelevanceBackend for Flaky {
            fn name(&self) -> &str {
                "flaky"
            }
            fn query(&self, q: &Query) -> Result<RelevanceAnswer, LmError> {
                if q.candidate == "pan" {
                    return Err(LmError::Parse("garbled".into()));
                }
                Ok(RelevanceAnswer {
                    verdict: crate::lm::Verdict::No,
                    transcript: "Final answer: no".into(),
                    source: crate::lm::AnswerSource::Oracle,
                })
            }
        }
        let cat = Catalog::builtin();
        let pan_index = cat.object_types().iter().position(|t| t.name == "pan").unwrap();
        match abstract_features(&cat, &FeatureSet::default(), "Rotate the pan.", &Flaky) {
            Err(AbstractionError::Backend { transcript, .. }) => assert_eq!(transcript.len(), pan_index),
            other => panic!("expected backend error, got {other:?}"),
        }
    }

    #[test]
    fn json_shape_has_sorted_lists() {
        let afs = AbstractFeatureSet { objects: names(&["pan", "bowl"]), textures: names(&["red"]), ..Default::default() };
        let v: serde_json::Value = serde_json::from_str(&afs.to_json()).unwrap();
        assert_eq!(v["objects"], serde_json::json!(["bowl", "pan"]));
        assert_eq!(v["avoid_objects"], serde_json::json!([]));
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, names(&["objects", "textures", "avoid_objects", "avoid_textures"]));
    }

    #[test]
    fn sweep_mask_separates_target_and_obstacle() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("sweep-block-pan").unwrap();
        let afs = AbstractFeatureSet {
            objects: names(&["block", "small block", "shorter block", "L shaped block"]),
            textures: cat.textures().iter().map(|t| t.name.clone()).collect(),
            avoid_objects: names(&["pan"]),
            avoid_textures: cat.textures().iter().map(|t| t.name.clone()).collect(),
        };
        for seed in 0..20 {
            let scene = sample_scene(cat, spec, &spec.truth, seed).unwrap();
            let seg = segment(cat, &scene);
            let m = instantiate(&afs, &scene, &seg, cat);
            let want = |role| {
                let i = scene.index_of_role(role).unwrap();
                let mut px: Vec<(usize, usize)> =
                    object_pixels(cat, &scene.objects[i]).iter().map(|p| (p.x as usize, p.y as usize)).collect();
                px.sort_by_key(|&(x, y)| (y, x));
                px
            };
            assert_eq!(m.channel_pixels(0), want(Role::Target));
            assert_eq!(m.channel_pixels(1), want(Role::Obstacle));
        }
    }

    #[test]
    fn heart_only_mask() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("heart").unwrap();
        let scene = sample_scene(cat, spec, &spec.truth, 4).unwrap();
        let seg = segment(cat, &scene);
        let heart = &scene.objects[scene.index_of_role(Role::Target).unwrap()];
        let afs = AbstractFeatureSet {
            objects: names(&["heart"]),
            textures: names(&[cat.texture_name(heart.texture)]),
            ..Default::default()
        };
        let m = instantiate(&afs, &scene, &seg, cat);
        assert_eq!(m.channel_pixels(0).len(), object_pixels(cat, heart).len());
        assert!(m.channel_pixels(1).is_empty());
        assert!(instantiate(&AbstractFeatureSet::default(), &scene, &seg, cat).is_zero());
    }

    fn arb_afs(cat: &Catalog) -> impl Strategy<Value = AbstractFeatureSet> {
        let types: Vec<String> = cat.object_types().iter().map(|t| t.name.clone()).collect();
        let tex: Vec<String> = cat.textures().iter().map(|t| t.name.clone()).collect();
        (
            proptest::sample::subsequence(types.clone(), 0..=types.len()),
            proptest::sample::subsequence(tex.clone(), 0..=tex.len()),
            proptest::sample::subsequence(types.clone(), 0..=types.len()),
            proptest::sample::subsequence(tex.clone(), 0..=tex.len()),
        )
            .prop_map(|(a, b, c, d)| AbstractFeatureSet {
                objects: a.into_iter().collect(),
                textures: b.into_iter().collect(),
                avoid_objects: c.into_iter().collect(),
                avoid_textures: d.into_iter().collect(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn mask_within_foreground_and_monotone(
            afs in arb_afs(&Catalog::builtin()),
            extra in arb_afs(&Catalog::builtin()),
            seed in 0u64..10_000,
            which in 0usize..13,
        ) {
            let reg = Registry::builtin();
            let cat = reg.catalog();
            let spec = &reg.scenarios()[which];
            let scene = sample_scene(cat, spec, &spec.truth, seed).unwrap();
            let seg = segment(cat, &scene);
            let m = instantiate(&afs, &scene, &seg, cat);
            for (i, &l) in seg.labels.iter().enumerate() {
                let (a, b) = (m.mask[2 * i], m.mask[2 * i + 1]);
                prop_assert!(a == 0.0 || a == 1.0);
                prop_assert!(a * b == 0.0);
                if l == 0 {
                    prop_assert!(a == 0.0 && b == 0.0);
                }
            }
            // Enlarging the target sets never loses target pixels.
            let mut bigger = afs.clone();
            bigger.objects.extend(extra.objects);
            bigger.textures.extend(extra.textures);
            let mb = instantiate(&bigger, &scene, &seg, cat);
            for i in 0..seg.labels.len() {
                prop_assert!(mb.mask[2 * i] >= m.mask[2 * i]);
                prop_assert!(mb.mask[2 * i] + mb.mask[2 * i + 1] >= m.mask[2 * i] + m.mask[2 * i + 1]);
            }
            prop_assert_eq!(instantiate(&afs, &scene, &seg, cat), m);
            prop_assert_eq!(textualize(cat, &scene, &seg).len(), scene.objects.len());
        }
    }
}
