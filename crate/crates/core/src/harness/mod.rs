//! Evaluation and the three experiment protocols.
//!
//! Q1 sweeps the number of demonstrations, Q2 tests under covariate shift
//! (held-out textures, an extra distractor), Q3 trains one multi-task policy
//! and tests it zero-shot on a superordinate utterance.

mod protocol;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use protocol::{both_candidates_recipe, relabel_for, run, run_q1, run_q2, run_q3};
pub use report::{CellError, CellResult, CellTiming, Report, Shift};

use crate::abstraction::{AbstractFeatureSet, AbstractionError, Abstractor};
use crate::imitation::{DartConfig, ImitationError, TrainConfig, TrainedPolicy};
use crate::lm::{LiveClient, LiveConfig, LmError, ResponseCache, RuleOracle};
use crate::nn::Variant;
use crate::scenario::{Registry, ScenarioSpec, TaskKind};
use crate::sim::{check_success, oracle_action, sample_recipe, step, Action, Catalog, Scene, SceneRecipe, SimError};
use crate::util::{derive_seed, sha256_hex};

const BUILTIN_HUMAN_FEATURES: &str = include_str!("../../data/human_features.json");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Imitation(#[from] ImitationError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report format error: {0}")]
    Format(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Anything that maps a scene and utterance to an action.
pub trait Policy: Send + Sync {
    fn act(&self, scene: &Scene, utterance: &str) -> Result<Action, HarnessError>;
}

impl Policy for TrainedPolicy {
    fn act(&self, scene: &Scene, utterance: &str) -> Result<Action, HarnessError> {
        Ok(TrainedPolicy::act(self, scene, utterance)?)
    }
}

/// The scripted demonstrator, looked up by utterance.
pub struct OraclePolicy {
    registry: Arc<Registry>,
}

impl OraclePolicy {
    pub fn new(registry: Arc<Registry>) -> Self {
        Self { registry }
    }
}

impl Policy for OraclePolicy {
    fn act(&self, scene: &Scene, utterance: &str) -> Result<Action, HarnessError> {
        let spec = self
            .registry
            .by_utterance(utterance)
            .ok_or_else(|| HarnessError::Config(format!("no scenario for {utterance:?}")))?;
        Ok(oracle_action(self.registry.catalog(), spec, scene)?)
    }
}

/// Uniformly random actions, seeded per scene.
pub struct RandomPolicy {
    pub seed: u64,
}

impl Policy for RandomPolicy {
    fn act(&self, scene: &Scene, _utterance: &str) -> Result<Action, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[&scene.rng_seed.to_string()]));
        let mut a = [0.0; 4];
        for v in &mut a {
            *v = rng.gen_range(0.0..1.0);
        }
        if scene.task == TaskKind::Rotate {
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            a[2] = t.cos();
            a[3] = t.sin();
        }
        Ok(Action(a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub successes: usize,
    pub n: usize,
}

impl EvalResult {
    pub fn rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.successes as f64 / self.n as f64
        }
    }
}

/// Test scene `i` of an evaluation stream.
pub fn eval_seed(seed: u64, task_ref: &str, i: usize) -> u64 {
    derive_seed(seed, &["eval", task_ref, &i.to_string()])
}

/// Runs act → step → check_success on each scene. Actions the simulator
/// rejects count as failures; policy errors propagate.
pub fn evaluate_scenes(
    policy: &dyn Policy,
    catalog: &Catalog,
    spec: &ScenarioSpec,
    scenes: &[Scene],
) -> Result<EvalResult, HarnessError> {
    let mut successes = 0;
    for scene in scenes {
        let action = policy.act(scene, &spec.utterance)?;
        if let Ok(out) = step(catalog, scene, &action) {
            if check_success(catalog, spec, scene, &out.scene, &spec.success) {
                successes += 1;
            }
        }
    }
    Ok(EvalResult { successes, n: scenes.len() })
}

/// Samples `n` test scenes from `recipe` and evaluates `policy` on them.
pub fn evaluate(
    policy: &dyn Policy,
    catalog: &Catalog,
    spec: &ScenarioSpec,
    recipe: &SceneRecipe,
    n: usize,
    seed: u64,
) -> Result<EvalResult, HarnessError> {
    let scenes = (0..n)
        .map(|i| sample_recipe(catalog, recipe, eval_seed(seed, &recipe.task_ref, i)))
        .collect::<Result<Vec<_>, _>>()?;
    evaluate_scenes(policy, catalog, spec, &scenes)
}

/// A trained variant, optionally with DART-augmented demonstrations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Method {
    pub variant: Variant,
    pub dart: bool,
}

impl Method {
    pub const fn plain(variant: Variant) -> Self {
        Self { variant, dart: false }
    }

    pub const GCBC_DART: Method = Method { variant: Variant::Gcbc, dart: true };
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dart {
            write!(f, "{}-DART", self.variant)
        } else {
            write!(f, "{}", self.variant)
        }
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, dart) = match s.len().checked_sub(5).and_then(|i| s.get(i..)) {
            Some(tail) if tail.eq_ignore_ascii_case("-dart") => (&s[..s.len() - 5], true),
            _ => (s, false),
        };
        let variant = base.parse::<Variant>().map_err(|_| HarnessError::Config(format!("unknown method {s:?}")))?;
        Ok(Self { variant, dart })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Q1,
    Q2,
    Q3,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Q1 => "q1",
            Protocol::Q2 => "q2",
            Protocol::Q3 => "q3",
        })
    }
}

/// Where relevance verdicts come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Backend {
    Oracle,
    Lm {
        #[serde(default)]
        live: LiveConfig,
        /// JSONL response cache; in-memory when absent.
        #[serde(default)]
        cache: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub backend: Backend,
    pub methods: Vec<Method>,
    /// Scenario ids; multi-task ids for Q3.
    pub scenarios: Vec<String>,
    /// Q1 sweeps these; Q2 and Q3 use the first entry.
    pub demo_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub train: TrainConfig,
    pub dart: DartConfig,
    /// Parallel cells. Does not affect results.
    #[serde(skip)]
    pub workers: usize,
    /// φ̂ for the HUMAN variant, keyed by utterance. Built-in file when absent.
    pub human_features: Option<PathBuf>,
    /// Where to write checkpoints. Not written when absent.
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::q1()
    }
}

impl ExperimentConfig {
    fn base(protocol: Protocol) -> Self {
        Self {
            protocol,
            backend: Backend::Oracle,
            methods: Vec::new(),
            scenarios: Vec::new(),
            demo_counts: vec![50],
            seeds: vec![0, 1, 2],
            eval_episodes: 20,
            train: TrainConfig::default(),
            dart: DartConfig::default(),
            workers: 1,
            human_features: None,
            checkpoint_dir: None,
        }
    }

    /// Every variant and GCBC-DART on all single-task scenarios, 10 to 50 demos.
    pub fn q1() -> Self {
        let mut methods: Vec<Method> = Variant::ALL.iter().map(|&v| Method::plain(v)).collect();
        methods.push(Method::GCBC_DART);
        let reg = Registry::builtin();
        Self {
            methods,
            scenarios: reg.scenarios().iter().map(|s| s.id.clone()).collect(),
            demo_counts: vec![10, 20, 30, 40, 50],
            ..Self::base(Protocol::Q1)
        }
    }

    pub fn q2() -> Self {
        Self {
            methods: vec![
                Method::plain(Variant::Lga),
                Method::plain(Variant::LgaS),
                Method::plain(Variant::LgaL),
                Method::GCBC_DART,
            ],
            scenarios: ["heart", "letter", "rotate-drink-water", "sweep-block-pan"].map(String::from).to_vec(),
            ..Self::base(Protocol::Q2)
        }
    }

    pub fn q3() -> Self {
        let reg = Registry::builtin();
        Self {
            methods: vec![Method::plain(Variant::Lga), Method::plain(Variant::LgaL), Method::GCBC_DART],
            scenarios: reg.multitask().iter().map(|m| m.id.clone()).collect(),
            ..Self::base(Protocol::Q3)
        }
    }

    pub fn for_protocol(p: Protocol) -> Self {
        match p {
            Protocol::Q1 => Self::q1(),
            Protocol::Q2 => Self::q2(),
            Protocol::Q3 => Self::q3(),
        }
    }

    /// Hash of everything that can change results.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.methods.is_empty() || self.scenarios.is_empty() || self.seeds.is_empty() {
            return bad("methods, scenarios and seeds must be non-empty");
        }
        if self.demo_counts.is_empty() || self.demo_counts.contains(&0) {
            return bad("demo counts must be positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        self.dart.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// φ̂ file: a JSON object from utterance to feature set.
pub fn load_human_features(catalog: Arc<Catalog>, path: Option<&Path>) -> Result<Abstractor, HarnessError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(io_err(p))?,
        None => BUILTIN_HUMAN_FEATURES.to_string(),
    };
    let sets: BTreeMap<String, AbstractFeatureSet> =
        serde_json::from_str(&text).map_err(|e| HarnessError::Format(format!("human features: {e}")))?;
    Ok(Abstractor::fixed(catalog, sets)?)
}

/// Builds the abstraction pipeline for a backend.
pub fn build_abstractor(registry: &Arc<Registry>, backend: &Backend) -> Result<Abstractor, HarnessError> {
    let cat = registry.catalog().clone();
    Ok(match backend {
        Backend::Oracle => Abstractor::with_backend(cat, Arc::new(RuleOracle::new(registry.clone()))),
        Backend::Lm { live, cache } => {
            let cache = Arc::new(match cache {
                Some(p) => ResponseCache::open(p)?,
                None => ResponseCache::in_memory(),
            });
            let client = LiveClient::from_env(live.clone(), cat.clone(), cache)?;
            Abstractor::with_backend(cat, Arc::new(client))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_policy_solves_every_scenario() {
        let reg = Arc::new(Registry::builtin());
        let cat = reg.catalog();
        let policy = OraclePolicy::new(reg.clone());
        for spec in reg.scenarios() {
            let recipe = SceneRecipe::standard(spec, &spec.truth).unwrap();
            let r = evaluate(&policy, cat, spec, &recipe, 20, 7).unwrap();
            assert_eq!(r.rate(), 1.0, "{}", spec.id);
        }
    }

    #[test]
    fn random_policy_rarely_succeeds() {
        let reg = Arc::new(Registry::builtin());
        let cat = reg.catalog();
        let policy = RandomPolicy { seed: 3 };
        let (mut hits, mut n) = (0, 0);
        for spec in reg.scenarios() {
            let recipe = SceneRecipe::standard(spec, &spec.truth).unwrap();
            let r = evaluate(&policy, cat, spec, &recipe, 800, 1).unwrap();
            hits += r.successes;
            n += r.n;
        }
        let rate = hits as f64 / n as f64;
        assert!(n >= 10_000 && rate < 0.05, "random success {rate} over {n}");
    }

    #[test]
    fn evaluation_is_seeded() {
        let reg = Arc::new(Registry::builtin());
        let spec = reg.scenario("tiger").unwrap();
        let recipe = SceneRecipe::standard(spec, &spec.truth).unwrap();
        let policy = RandomPolicy { seed: 0 };
        let a = evaluate(&policy, reg.catalog(), spec, &recipe, 200, 5).unwrap();
        let b = evaluate(&policy, reg.catalog(), spec, &recipe, 200, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn method_labels() {
        for s in ["LGA", "LGA-S", "LGA-L", "GCBC", "GCBC-SEG", "HUMAN", "GCBC-DART"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert_eq!("gcbc-dart".parse::<Method>().unwrap(), Method::GCBC_DART);
        assert!("BC".parse::<Method>().is_err());
    }

    #[test]
    fn human_features_cover_builtin_utterances() {
        let reg = Registry::builtin();
        let abs = load_human_features(reg.catalog().clone(), None).unwrap();
        for s in reg.scenarios().iter().chain(reg.multitask().iter().flat_map(|m| m.seen.iter().chain([&m.unseen]))) {
            assert!(!abs.features(&s.utterance).unwrap().is_empty(), "{}", s.id);
        }
    }

    #[test]
    fn config_hash_ignores_workers() {
        let a = ExperimentConfig::q2();
        let b = ExperimentConfig { workers: 4, ..ExperimentConfig::q2() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), ExperimentConfig { seeds: vec![9], ..ExperimentConfig::q2() }.hash());
    }
}
