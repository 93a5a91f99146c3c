use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DemoSet, ImitationError};
use crate::abstraction::Abstractor;
use crate::nn::{embed_text, ImageInput, Mode, PolicyArch, PolicyInput, PolicyNet, Real, Tensor, TextInput, Variant};
use crate::scenario::TaskKind;
use crate::sim::{render, segment, Action, Catalog, Scene, MAX_OBJECTS};
use crate::util::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Stop once the epoch loss has not improved by `min_delta` for this many epochs.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 750,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            patience: 50,
            min_delta: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ImitationError> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.patience == 0 {
            return Err(ImitationError::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// Adam with β = (0.9, 0.999), ε = 1e-8.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new<T: Real>(net: &mut PolicyNet<T>, lr: f64) -> Self {
        let sizes: Vec<usize> = net.params_mut().iter().map(|p| p.value.len()).collect();
        Self {
            lr,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step<T: Real>(&mut self, net: &mut PolicyNet<T>) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((p, m), v) in net.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i].to_f64();
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g;
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g * g;
                let update = self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
                p.value[i] = T::of(p.value[i].to_f64() - update);
            }
        }
    }
}

fn sgd_step<T: Real>(net: &mut PolicyNet<T>, lr: f64) {
    for p in net.params_mut() {
        for (v, g) in p.value.iter_mut().zip(&p.grad) {
            *v = T::of(v.to_f64() - lr * g.to_f64());
        }
    }
}

/// Mean over the batch of the squared L2 error, and its gradient.
pub fn mse_loss<T: Real>(pred: &[T], target: &[T], batch: usize) -> (f64, Vec<T>) {
    assert_eq!(pred.len(), target.len());
    let scale = 2.0 / batch as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, a)| {
            let d = p.to_f64() - a.to_f64();
            loss += d * d;
            T::of(scale * d)
        })
        .collect();
    (loss / batch as f64, grad)
}

/// A demonstration step rendered into the variant's inputs.
#[derive(Clone, Debug)]
pub struct WiredSample {
    pub images: Vec<Vec<f32>>,
    pub text: Option<Arc<Vec<f32>>>,
    pub action: [f32; 4],
}

type TextCache = HashMap<String, Arc<Vec<f32>>>;

fn embedded(cache: &mut TextCache, text: &str) -> Result<Arc<Vec<f32>>, ImitationError> {
    if let Some(v) = cache.get(text) {
        return Ok(v.clone());
    }
    let v: Arc<Vec<f32>> = Arc::new(embed_text(text)?.into_iter().map(|x| x as f32).collect());
    cache.insert(text.to_string(), v.clone());
    Ok(v)
}

fn wire_cached(
    variant: Variant,
    catalog: &Catalog,
    scene: &Scene,
    utterance: &str,
    abstractor: Option<&Abstractor>,
    texts: &mut TextCache,
) -> Result<(Vec<Vec<f32>>, Option<Arc<Vec<f32>>>), ImitationError> {
    let need = || abstractor.ok_or(ImitationError::MissingAbstractor(variant));
    let mut images = Vec::new();
    for input in variant.images() {
        images.push(match input {
            ImageInput::Abstraction => need()?.observe(scene, utterance)?.mask,
            ImageInput::Observation => render(catalog, scene).pixels,
            ImageInput::Segmentation => {
                segment(catalog, scene).labels.iter().map(|&l| l as f32 / MAX_OBJECTS as f32).collect()
            }
        });
    }
    let text = match variant.text() {
        Some(TextInput::Utterance) => Some(embedded(texts, utterance)?),
        Some(TextInput::FeatureNames) => {
            let afs = need()?.features(utterance)?;
            Some(embedded(texts, &afs.feature_text())?)
        }
        None => None,
    };
    Ok((images, text))
}

/// Builds a variant's inputs for one scene and utterance.
pub fn wire(
    variant: Variant,
    catalog: &Catalog,
    scene: &Scene,
    utterance: &str,
    abstractor: Option<&Abstractor>,
) -> Result<PolicyInput<f32>, ImitationError> {
    let (images, text) = wire_cached(variant, catalog, scene, utterance, abstractor, &mut HashMap::new())?;
    let res = catalog.resolution();
    let images = images
        .into_iter()
        .zip(variant.images())
        .map(|(data, i)| Tensor::from_vec(&[1, res, res, i.channels()], data))
        .collect::<Result<Vec<_>, _>>()?;
    let text = text.map(|t| Tensor::from_vec(&[1, t.len()], t.to_vec())).transpose()?;
    Ok(PolicyInput { images, text })
}

fn assemble(variant: Variant, res: usize, samples: &[WiredSample], idx: &[usize]) -> (PolicyInput<f32>, Vec<f32>) {
    let b = idx.len();
    let images = variant
        .images()
        .iter()
        .enumerate()
        .map(|(t, input)| {
            let mut data = Vec::with_capacity(b * res * res * input.channels());
            for &i in idx {
                data.extend_from_slice(&samples[i].images[t]);
            }
            Tensor::from_vec(&[b, res, res, input.channels()], data).expect("wired image size")
        })
        .collect();
    let text = variant.text().map(|_| {
        let dim = samples[idx[0]].text.as_ref().map_or(0, |t| t.len());
        let mut data = Vec::with_capacity(b * dim);
        for &i in idx {
            data.extend_from_slice(samples[i].text.as_ref().expect("text wired"));
        }
        Tensor::from_vec(&[b, dim], data).expect("wired text size")
    });
    let mut actions = Vec::with_capacity(b * 4);
    for &i in idx {
        actions.extend_from_slice(&samples[i].action);
    }
    (PolicyInput { images, text }, actions)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: PolicyNet<f32>,
    /// Mean per-sample training loss of each epoch.
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Fits a fresh policy of `variant` to `demos`.
pub fn train(
    variant: Variant,
    demos: &DemoSet,
    cfg: &TrainConfig,
    catalog: &Catalog,
    abstractor: Option<&Abstractor>,
) -> Result<TrainOutcome, ImitationError> {
    train_with_arch(variant, PolicyArch::for_variant(variant), demos, cfg, catalog, abstractor)
}

pub(crate) fn train_with_arch(
    variant: Variant,
    arch: PolicyArch,
    demos: &DemoSet,
    cfg: &TrainConfig,
    catalog: &Catalog,
    abstractor: Option<&Abstractor>,
) -> Result<TrainOutcome, ImitationError> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(ImitationError::EmptyDemos);
    }
    if demos.catalog_hash != catalog.hash() {
        return Err(ImitationError::CatalogMismatch);
    }
    let mut texts = HashMap::new();
    let mut samples = Vec::new();
    for t in &demos.trajectories {
        for s in &t.steps {
            let (images, text) = wire_cached(variant, catalog, &s.scene, &t.utterance, abstractor, &mut texts)?;
            samples.push(WiredSample { images, text, action: s.action.0.map(|v| v as f32) });
        }
    }
    let mut net = PolicyNet::<f32>::with_arch(variant, arch, derive_seed(cfg.seed, &["init"]))?;
    let mut adam = Adam::new(&mut net, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["shuffle"]));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let res = catalog.resolution();
    let mut losses = Vec::new();
    let (mut best, mut since) = (f64::INFINITY, 0);
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let (input, target) = assemble(variant, res, &samples, idx);
            net.zero_grad();
            let (pred, cache) = net.forward(&input, Mode::Train)?;
            let (loss, grad) = mse_loss(&pred, &target, idx.len());
            if !loss.is_finite() {
                return Err(ImitationError::Diverged { epoch, loss });
            }
            net.backward(&cache, &grad);
            match cfg.optimizer {
                crate::imitation::Optimizer::Adam => adam.step(&mut net),
                crate::imitation::Optimizer::Sgd => sgd_step(&mut net, cfg.learning_rate),
            }
            total += loss * idx.len() as f64;
        }
        let epoch_loss = total / samples.len() as f64;
        losses.push(epoch_loss);
        if epoch_loss < best - cfg.min_delta {
            best = epoch_loss;
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { net, losses, stopped_early })
}

/// Clamps the pick point (and sweep/place point) into the workspace and
/// normalises rotation components.
fn finish_action(task: TaskKind, raw: &[f32]) -> Action {
    let mut a = [raw[0] as f64, raw[1] as f64, raw[2] as f64, raw[3] as f64];
    a[0] = a[0].clamp(0.0, 1.0);
    a[1] = a[1].clamp(0.0, 1.0);
    if task == TaskKind::Rotate {
        let n = (a[2] * a[2] + a[3] * a[3]).sqrt();
        if n > 0.0 && n.is_finite() {
            a[2] /= n;
            a[3] /= n;
        } else {
            a[2] = 1.0;
            a[3] = 0.0;
        }
    } else {
        a[2] = a[2].clamp(0.0, 1.0);
        a[3] = a[3].clamp(0.0, 1.0);
    }
    Action(a)
}

/// Runs the policy on one scene.
pub fn act(
    variant: Variant,
    net: &PolicyNet<f32>,
    catalog: &Catalog,
    scene: &Scene,
    utterance: &str,
    abstractor: Option<&Abstractor>,
) -> Result<Action, ImitationError> {
    let input = wire(variant, catalog, scene, utterance, abstractor)?;
    let out = net.predict(&input)?;
    Ok(finish_action(scene.task, &out))
}

/// A trained network bundled with what it needs to act.
pub struct TrainedPolicy {
    pub variant: Variant,
    pub net: PolicyNet<f32>,
    pub catalog: Arc<Catalog>,
    pub abstractor: Option<Arc<Abstractor>>,
}

impl TrainedPolicy {
    pub fn act(&self, scene: &Scene, utterance: &str) -> Result<Action, ImitationError> {
        act(self.variant, &self.net, &self.catalog, scene, utterance, self.abstractor.as_deref())
    }
}
