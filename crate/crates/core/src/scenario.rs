//! Task registry: utterances, task types and ground-truth feature distributions.
//!
//! Distributions are written as selector lists over catalog names. A selector
//! is either a literal name, the keyword `ALL`, or a glob where `*` matches
//! one or more characters and `{a|b|c}` matches any listed alternative
//! (e.g. `dark {red|yellow} and * stripe`). Globs are expanded against the
//! catalog at load time and must match at least one name.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Catalog, ObjectTypeId, SuccessParams, TextureId};

const BUILTIN_SCENARIOS: &str = include_str!("../data/scenarios.json");

/// Number of single-task scenarios in the built-in registry.
pub const SINGLE_TASK_COUNT: usize = 13;
/// Number of multi-task scenarios in the built-in registry.
pub const MULTI_TASK_COUNT: usize = 3;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("scenario file is not valid: {0}")]
    Parse(String),
    #[error("unknown object type {name:?} in {context}")]
    UnknownObject { name: String, context: String },
    #[error("unknown texture {name:?} in {context}")]
    UnknownTexture { name: String, context: String },
    #[error("invalid scenario {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PickPlace,
    Rotate,
    Sweep,
}

impl TaskKind {
    /// Guesses the task type from an utterance's leading verb.
    pub fn infer(utterance: &str) -> Self {
        let first = utterance.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
        match first.trim_matches(|c: char| !c.is_alphanumeric()) {
            "sweep" => TaskKind::Sweep,
            "rotate" => TaskKind::Rotate,
            _ => TaskKind::PickPlace,
        }
    }
}

/// A product set `types × textures`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSet {
    pub types: BTreeSet<ObjectTypeId>,
    pub textures: BTreeSet<TextureId>,
}

impl ProductSet {
    pub fn contains(&self, t: ObjectTypeId, x: TextureId) -> bool {
        self.types.contains(&t) && self.textures.contains(&x)
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty() || self.textures.is_empty()
    }
}

/// Where target objects (and sweep obstacles) are drawn from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub target: ProductSet,
    pub avoid: Option<ProductSet>,
}

impl FeatureDistribution {
    pub fn contains(&self, t: ObjectTypeId, x: TextureId) -> bool {
        self.target.contains(t, x) || self.avoid.as_ref().is_some_and(|a| a.contains(t, x))
    }

    /// Copy with the target textures replaced.
    pub fn with_target_textures(&self, textures: &BTreeSet<TextureId>) -> Self {
        let mut d = self.clone();
        d.target.textures = textures.clone();
        d
    }
}

/// Held-out texture split for the covariate-shift protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftSplit {
    pub train_textures: BTreeSet<TextureId>,
    pub shift_textures: BTreeSet<TextureId>,
}

/// One named task: utterance, task type, ground truth and success parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub name: String,
    pub utterance: String,
    pub task: TaskKind,
    pub rotation_degrees: Option<f64>,
    pub truth: FeatureDistribution,
    pub q2: Option<ShiftSplit>,
    pub success: SuccessParams,
}

/// A multi-task family: several seen sub-utterances and one unseen superordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaskSpec {
    pub id: String,
    pub name: String,
    pub task: TaskKind,
    pub seen: Vec<ScenarioSpec>,
    pub unseen: ScenarioSpec,
}

impl MultiTaskSpec {
    /// Union of every sub-task's distribution, used to keep distractors unambiguous.
    pub fn exclusion(&self) -> Vec<FeatureDistribution> {
        self.seen.iter().chain([&self.unseen]).map(|s| s.truth.clone()).collect()
    }
}

#[derive(Deserialize)]
struct SelectorFile {
    objects: Vec<String>,
    textures: Vec<String>,
}

#[derive(Deserialize)]
struct Q2File {
    train_textures: Vec<String>,
    shift_textures: Vec<String>,
}

#[derive(Deserialize)]
struct ScenarioFile {
    id: String,
    name: String,
    utterance: String,
    task: TaskKind,
    #[serde(default)]
    rotation_degrees: Option<f64>,
    target: SelectorFile,
    #[serde(default)]
    avoid: Option<SelectorFile>,
    #[serde(default)]
    q2: Option<Q2File>,
}

#[derive(Deserialize)]
struct SubTaskFile {
    utterance: String,
    target: SelectorFile,
    #[serde(default)]
    avoid: Option<SelectorFile>,
}

#[derive(Deserialize)]
struct MultiTaskFile {
    id: String,
    name: String,
    task: TaskKind,
    #[serde(default)]
    rotation_degrees: Option<f64>,
    seen: Vec<SubTaskFile>,
    unseen: SubTaskFile,
}

#[derive(Deserialize)]
struct RegistryFile {
    version: u32,
    success: SuccessParams,
    scenarios: Vec<ScenarioFile>,
    multitask: Vec<MultiTaskFile>,
}

/// Expands one selector against a list of catalog names.
pub fn expand_selector<'a>(pattern: &str, names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let names: Vec<&str> = names.into_iter().collect();
    if pattern == "ALL" {
        return names.iter().map(|s| s.to_string()).collect();
    }
    if !pattern.contains('*') && !pattern.contains('{') {
        return names.iter().filter(|n| **n == pattern).map(|s| s.to_string()).collect();
    }
    let re = Regex::new(&glob_to_regex(pattern)).expect("glob translates to a valid regex");
    names.iter().filter(|n| re.is_match(n)).map(|s| s.to_string()).collect()
}

fn glob_to_regex(pattern: &str) -> String {
    let mut out = String::from("^");
    let mut rest = pattern;
    while let Some(c) = rest.chars().next() {
        match c {
            '*' => {
                out.push_str(".+");
                rest = &rest[1..];
            }
            '{' => match rest.find('}') {
                Some(end) => {
                    let alts: Vec<String> = rest[1..end].split('|').map(regex::escape).collect();
                    out.push_str(&format!("(?:{})", alts.join("|")));
                    rest = &rest[end + 1..];
                }
                None => {
                    out.push_str(&regex::escape("{"));
                    rest = &rest[1..];
                }
            },
            _ => {
                out.push_str(&regex::escape(&rest[..c.len_utf8()]));
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    out.push('$');
    out
}

/// Resolves object selectors to ids, failing on names that match nothing.
pub fn resolve_objects(catalog: &Catalog, selectors: &[String], context: &str) -> Result<BTreeSet<ObjectTypeId>, LoadError> {
    let names: Vec<&str> = catalog.object_types().iter().map(|o| o.name.as_str()).collect();
    let mut out = BTreeSet::new();
    for sel in selectors {
        let hits = expand_selector(sel, names.iter().copied());
        if hits.is_empty() {
            return Err(LoadError::UnknownObject { name: sel.clone(), context: context.to_string() });
        }
        out.extend(hits.iter().filter_map(|n| catalog.type_id(n)));
    }
    Ok(out)
}

/// Resolves texture selectors to ids, failing on names that match nothing.
pub fn resolve_textures(catalog: &Catalog, selectors: &[String], context: &str) -> Result<BTreeSet<TextureId>, LoadError> {
    let names: Vec<&str> = catalog.textures().iter().map(|t| t.name.as_str()).collect();
    let mut out = BTreeSet::new();
    for sel in selectors {
        let hits = expand_selector(sel, names.iter().copied());
        if hits.is_empty() {
            return Err(LoadError::UnknownTexture { name: sel.clone(), context: context.to_string() });
        }
        out.extend(hits.iter().filter_map(|n| catalog.texture_id(n)));
    }
    Ok(out)
}

fn resolve_product(catalog: &Catalog, sel: &SelectorFile, context: &str) -> Result<ProductSet, LoadError> {
    Ok(ProductSet {
        types: resolve_objects(catalog, &sel.objects, context)?,
        textures: resolve_textures(catalog, &sel.textures, context)?,
    })
}

/// All registered scenarios, bound to a catalog.
#[derive(Clone, Debug)]
pub struct Registry {
    catalog: Arc<Catalog>,
    scenarios: Vec<ScenarioSpec>,
    multitask: Vec<MultiTaskSpec>,
    by_utterance: HashMap<String, ScenarioSpec>,
}

impl Registry {
    /// The built-in catalog and scenario file.
    pub fn builtin() -> Self {
        Self::from_json(Arc::new(Catalog::builtin()), BUILTIN_SCENARIOS).expect("built-in scenarios are valid")
    }

    pub fn load(catalog: Arc<Catalog>, path: &std::path::Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(catalog, &text)
    }

    pub fn from_json(catalog: Arc<Catalog>, text: &str) -> Result<Self, LoadError> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(LoadError::Parse(format!("unsupported version {}", file.version)));
        }
        let success = file.success;
        let mut scenarios = Vec::new();
        for s in &file.scenarios {
            let target = resolve_product(&catalog, &s.target, &s.id)?;
            let avoid = s.avoid.as_ref().map(|a| resolve_product(&catalog, a, &s.id)).transpose()?;
            let q2 = match &s.q2 {
                Some(q) => {
                    let split = ShiftSplit {
                        train_textures: resolve_textures(&catalog, &q.train_textures, &s.id)?,
                        shift_textures: resolve_textures(&catalog, &q.shift_textures, &s.id)?,
                    };
                    if !split.train_textures.is_disjoint(&split.shift_textures) {
                        return Err(LoadError::Invalid(format!("{}: shift textures overlap training textures", s.id)));
                    }
                    if !split.train_textures.is_subset(&target.textures) || !split.shift_textures.is_subset(&target.textures) {
                        return Err(LoadError::Invalid(format!("{}: split leaves the target distribution", s.id)));
                    }
                    Some(split)
                }
                None => None,
            };
            let spec = ScenarioSpec {
                id: s.id.clone(),
                name: s.name.clone(),
                utterance: s.utterance.clone(),
                task: s.task,
                rotation_degrees: s.rotation_degrees,
                truth: FeatureDistribution { target, avoid },
                q2,
                success,
            };
            validate_spec(&spec)?;
            scenarios.push(spec);
        }
        let mut multitask = Vec::new();
        for m in &file.multitask {
            let sub = |f: &SubTaskFile, tag: &str| -> Result<ScenarioSpec, LoadError> {
                let ctx = format!("{}/{tag}", m.id);
                let spec = ScenarioSpec {
                    id: format!("{}:{tag}", m.id),
                    name: m.name.clone(),
                    utterance: f.utterance.clone(),
                    task: m.task,
                    rotation_degrees: m.rotation_degrees,
                    truth: FeatureDistribution {
                        target: resolve_product(&catalog, &f.target, &ctx)?,
                        avoid: f.avoid.as_ref().map(|a| resolve_product(&catalog, a, &ctx)).transpose()?,
                    },
                    q2: None,
                    success,
                };
                validate_spec(&spec)?;
                Ok(spec)
            };
            let seen = m
                .seen
                .iter()
                .enumerate()
                .map(|(i, f)| sub(f, &format!("seen{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            let unseen = sub(&m.unseen, "unseen")?;
            multitask.push(MultiTaskSpec { id: m.id.clone(), name: m.name.clone(), task: m.task, seen, unseen });
        }
        let mut by_utterance = HashMap::new();
        let all = scenarios.iter().chain(multitask.iter().flat_map(|m| m.seen.iter().chain([&m.unseen])));
        for s in all {
            if by_utterance.insert(normalize_utterance(&s.utterance), s.clone()).is_some() {
                return Err(LoadError::Invalid(format!("duplicate utterance {:?}", s.utterance)));
            }
        }
        Ok(Self { catalog, scenarios, multitask, by_utterance })
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn scenarios(&self) -> &[ScenarioSpec] {
        &self.scenarios
    }

    pub fn multitask(&self) -> &[MultiTaskSpec] {
        &self.multitask
    }

    /// Single-task plus multi-task entries.
    pub fn len(&self) -> usize {
        self.scenarios.len() + self.multitask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scenario(&self, id: &str) -> Option<&ScenarioSpec> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn multitask_spec(&self, id: &str) -> Option<&MultiTaskSpec> {
        self.multitask.iter().find(|s| s.id == id)
    }

    /// Looks up any registered utterance, including multi-task sub-utterances.
    pub fn by_utterance(&self, utterance: &str) -> Option<&ScenarioSpec> {
        self.by_utterance.get(&normalize_utterance(utterance))
    }

    /// Names of a distribution's members, grouped the way task listings are.
    pub fn describe(&self, dist: &FeatureDistribution) -> BTreeMap<&'static str, Vec<String>> {
        let cat = &self.catalog;
        let mut out = BTreeMap::new();
        out.insert("objects", dist.target.types.iter().map(|&t| cat.type_name(t).to_string()).collect());
        out.insert("textures", dist.target.textures.iter().map(|&t| cat.texture_name(t).to_string()).collect());
        if let Some(a) = &dist.avoid {
            out.insert("avoid_objects", a.types.iter().map(|&t| cat.type_name(t).to_string()).collect());
            out.insert("avoid_textures", a.textures.iter().map(|&t| cat.texture_name(t).to_string()).collect());
        }
        out
    }
}

fn validate_spec(spec: &ScenarioSpec) -> Result<(), LoadError> {
    if spec.truth.target.is_empty() {
        return Err(LoadError::Invalid(format!("{}: empty target distribution", spec.id)));
    }
    match spec.task {
        TaskKind::Sweep if spec.truth.avoid.as_ref().is_none_or(|a| a.is_empty()) => {
            Err(LoadError::Invalid(format!("{}: sweep task without an obstacle distribution", spec.id)))
        }
        TaskKind::Rotate if spec.rotation_degrees.is_none() => {
            Err(LoadError::Invalid(format!("{}: rotate task without rotation_degrees", spec.id)))
        }
        _ => Ok(()),
    }
}

/// Case- and whitespace-insensitive key for utterance lookup.
pub fn normalize_utterance(u: &str) -> String {
    u.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(reg: &Registry, ids: &BTreeSet<ObjectTypeId>) -> Vec<String> {
        ids.iter().map(|&i| reg.catalog().type_name(i).to_string()).collect()
    }

    #[test]
    fn builtin_registry_has_sixteen_entries() {
        let reg = Registry::builtin();
        assert_eq!(reg.scenarios().len(), SINGLE_TASK_COUNT);
        assert_eq!(reg.multitask().len(), MULTI_TASK_COUNT);
        assert_eq!(reg.len(), 16);
    }

    #[test]
    fn vowel_and_word_letter_objects() {
        let reg = Registry::builtin();
        let v = reg.scenario("multicolor-vowel").unwrap();
        assert_eq!(names(&reg, &v.truth.target.types), ["letter A", "letter E"]);
        let w = reg.scenario("letter-from-word").unwrap();
        assert_eq!(names(&reg, &w.truth.target.types), ["letter E", "letter R", "letter T"]);
    }

    #[test]
    fn glob_expansion() {
        let names = ["dark red", "dark red and yellow stripe", "red and blue stripe", "red swirl", "dark red swirl"];
        assert_eq!(expand_selector("dark {red|pink}", names), ["dark red"]);
        assert_eq!(expand_selector("* swirl", names), ["red swirl", "dark red swirl"]);
        assert_eq!(
            expand_selector("* and * stripe", names),
            ["dark red and yellow stripe", "red and blue stripe"]
        );
        assert_eq!(expand_selector("ALL", names).len(), 5);
        assert!(expand_selector("red", names).is_empty());
    }

    #[test]
    fn unknown_name_is_reported() {
        let text = BUILTIN_SCENARIOS.replace("\"tiger\"] }", "\"tigerish\"] }");
        let err = Registry::from_json(Arc::new(Catalog::builtin()), &text).unwrap_err();
        assert!(err.to_string().contains("tigerish"), "{err}");
    }

    #[test]
    fn q2_splits_are_disjoint_subsets() {
        let reg = Registry::builtin();
        let with_split: Vec<_> = reg.scenarios().iter().filter(|s| s.q2.is_some()).map(|s| s.id.as_str()).collect();
        assert_eq!(with_split, ["heart", "letter", "rotate-drink-water", "sweep-block-pan"]);
    }

    #[test]
    fn utterance_lookup_covers_subtasks() {
        let reg = Registry::builtin();
        assert_eq!(reg.by_utterance("bring me a fruit.").unwrap().id, "pick-up-fruit:unseen");
        assert_eq!(reg.by_utterance("Bring me  the heart.").unwrap().id, "heart");
        assert!(reg.by_utterance("Bring me the moon.").is_none());
    }

    #[test]
    fn task_inference() {
        assert_eq!(TaskKind::infer("Sweep the block without touching the pan."), TaskKind::Sweep);
        assert_eq!(TaskKind::infer("Rotate the block."), TaskKind::Rotate);
        assert_eq!(TaskKind::infer("Bring me the heart."), TaskKind::PickPlace);
    }
}
