use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, BatchNorm, BnCache, Conv2d, ConvCache, Linear, Mode, Param};
use super::{NnError, Real, Tensor, EMBED_DIM};

/// Size of the language head output.
pub const TEXT_FEATURES: usize = 100;
pub const ACTION_DIM: usize = 4;

/// The six policy variants and the inputs each one consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "LGA")]
    Lga,
    #[serde(rename = "LGA-S")]
    LgaS,
    #[serde(rename = "LGA-L")]
    LgaL,
    #[serde(rename = "GCBC")]
    Gcbc,
    #[serde(rename = "GCBC-SEG")]
    GcbcSeg,
    #[serde(rename = "HUMAN")]
    Human,
}

/// One image input of a variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageInput {
    /// Two-channel goal mask (target, avoid).
    Abstraction,
    /// RGB observation.
    Observation,
    /// Segmentation labels scaled into one channel.
    Segmentation,
}

impl ImageInput {
    pub fn channels(self) -> usize {
        match self {
            ImageInput::Abstraction => 2,
            ImageInput::Observation => 3,
            ImageInput::Segmentation => 1,
        }
    }
}

/// Text input of a variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextInput {
    /// Embedding of the utterance.
    Utterance,
    /// Embedding of the abstracted feature names.
    FeatureNames,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Lga, Variant::LgaS, Variant::LgaL, Variant::Gcbc, Variant::GcbcSeg, Variant::Human];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lga => "LGA",
            Variant::LgaS => "LGA-S",
            Variant::LgaL => "LGA-L",
            Variant::Gcbc => "GCBC",
            Variant::GcbcSeg => "GCBC-SEG",
            Variant::Human => "HUMAN",
        }
    }

    /// Image inputs in tower order.
    pub fn images(self) -> &'static [ImageInput] {
        use ImageInput::*;
        match self {
            Variant::Lga | Variant::Human => &[Abstraction],
            Variant::LgaS => &[Abstraction, Observation],
            Variant::LgaL | Variant::Gcbc => &[Observation],
            Variant::GcbcSeg => &[Observation, Segmentation],
        }
    }

    pub fn text(self) -> Option<TextInput> {
        match self {
            Variant::LgaL => Some(TextInput::FeatureNames),
            Variant::Gcbc => Some(TextInput::Utterance),
            _ => None,
        }
    }

    /// Whether the variant needs abstracted features.
    pub fn uses_abstraction(self) -> bool {
        self.images().contains(&ImageInput::Abstraction) || self.text() == Some(TextInput::FeatureNames)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| NnError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub in_channels: usize,
    pub input_size: usize,
    pub layers: Vec<ConvSpec>,
}

impl TowerConfig {
    /// 32/64/32 channels, kernels 8/4/3, strides 4/2/1 on 64×64 inputs.
    pub fn standard(in_channels: usize) -> Self {
        let l = |out_channels, kernel, stride| ConvSpec { out_channels, kernel, stride };
        Self { in_channels, input_size: 64, layers: vec![l(32, 8, 4), l(64, 4, 2), l(32, 3, 1)] }
    }

    /// Spatial side after each layer, or `None` if a kernel does not fit.
    pub fn sides(&self) -> Option<Vec<usize>> {
        let mut side = self.input_size;
        let mut out = Vec::new();
        for l in &self.layers {
            if side < l.kernel || l.stride == 0 {
                return None;
            }
            side = (side - l.kernel) / l.stride + 1;
            out.push(side);
        }
        Some(out)
    }

    pub fn flat_dim(&self) -> usize {
        match (self.sides(), self.layers.last()) {
            (Some(s), Some(l)) => s.last().unwrap().pow(2) * l.out_channels,
            _ => self.input_size * self.input_size * self.in_channels,
        }
    }
}

/// Network shape: towers, optional text head, action head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub towers: Vec<TowerConfig>,
    pub text: Option<(usize, usize)>,
    pub action_dim: usize,
}

impl PolicyArch {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            towers: variant.images().iter().map(|i| TowerConfig::standard(i.channels())).collect(),
            text: variant.text().map(|_| (EMBED_DIM, TEXT_FEATURES)),
            action_dim: ACTION_DIM,
        }
    }

    pub fn head_inputs(&self) -> usize {
        self.towers.iter().map(TowerConfig::flat_dim).sum::<usize>() + self.text.map_or(0, |t| t.1)
    }

    fn validate(&self) -> Result<(), NnError> {
        for t in &self.towers {
            if t.sides().is_none() {
                return Err(NnError::Config(format!("tower {t:?} does not fit its input")));
            }
        }
        if self.towers.is_empty() && self.text.is_none() {
            return Err(NnError::Config("network has no inputs".into()));
        }
        Ok(())
    }
}

/// conv → BN → ReLU, repeated, then flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTower<T> {
    pub config: TowerConfig,
    pub convs: Vec<Conv2d<T>>,
    pub norms: Vec<BatchNorm<T>>,
}

pub(crate) struct TowerCache<T> {
    layers: Vec<(ConvCache<T>, BnCache<T>, Vec<T>)>,
}

impl<T: Real> ConvTower<T> {
    pub fn new(rng: &mut ChaCha8Rng, config: TowerConfig) -> Self {
        let mut cin = config.in_channels;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for l in &config.layers {
            convs.push(Conv2d::new(rng, cin, l.out_channels, l.kernel, l.stride));
            norms.push(BatchNorm::new(l.out_channels));
            cin = l.out_channels;
        }
        Self { config, convs, norms }
    }

    fn check(&self, x: &Tensor<T>) -> Result<(), NnError> {
        let s = &self.config;
        match x.shape() {
            [_, h, w, c] if *h == s.input_size && *w == s.input_size && *c == s.in_channels => Ok(()),
            other => Err(NnError::Shape(format!(
                "tower expects [B,{0},{0},{1}], got {other:?}",
                s.input_size, s.in_channels
            ))),
        }
    }

    /// Returns the flattened `[B, flat_dim]` activations.
    pub(crate) fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Vec<T>, TowerCache<T>), NnError> {
        self.check(x)?;
        let mut cache = TowerCache { layers: Vec::with_capacity(self.convs.len()) };
        let mut cur = x.clone();
        for (conv, bn) in self.convs.iter().zip(self.norms.iter_mut()) {
            let (mut y, cc) = conv.forward(&cur)?;
            let bc = bn.forward(y.data_mut(), mode);
            relu(y.data_mut());
            cache.layers.push((cc, bc, y.data().to_vec()));
            cur = y;
        }
        Ok((cur.into_data(), cache))
    }

    pub(crate) fn forward_eval(&self, x: &Tensor<T>) -> Result<Vec<T>, NnError> {
        self.check(x)?;
        let mut cur = x.clone();
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            let (mut y, _) = conv.forward(&cur)?;
            bn.forward_eval(y.data_mut());
            relu(y.data_mut());
            cur = y;
        }
        Ok(cur.into_data())
    }

    pub(crate) fn backward(&mut self, cache: &TowerCache<T>, dflat: Vec<T>) {
        let mut dy = dflat;
        for l in (0..self.convs.len()).rev() {
            let (cc, bc, y) = &cache.layers[l];
            relu_backward(y, &mut dy);
            self.norms[l].backward(bc, &mut dy);
            match self.convs[l].backward(cc, &dy, l > 0) {
                Some(dx) => dy = dx.into_data(),
                None => break,
            }
        }
    }
}

/// Batched inputs: one NHWC tensor per tower plus an optional `[B, 384]` text tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInput<T> {
    pub images: Vec<Tensor<T>>,
    pub text: Option<Tensor<T>>,
}

impl<T: Real> PolicyInput<T> {
    pub fn batch(&self) -> usize {
        self.images.first().map(|t| t.shape()[0]).or_else(|| self.text.as_ref().map(|t| t.shape()[0])).unwrap_or(0)
    }
}

/// Policy network: towers and text head concatenated into a linear action head.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet<T> {
    pub variant: Variant,
    pub arch: PolicyArch,
    pub towers: Vec<ConvTower<T>>,
    pub text_head: Option<Linear<T>>,
    pub head: Linear<T>,
}

pub struct ForwardCache<T> {
    towers: Vec<TowerCache<T>>,
    text_in: Option<Vec<T>>,
    head_in: Vec<T>,
    batch: usize,
}

impl<T: Real> PolicyNet<T> {
    pub fn new(variant: Variant, seed: u64) -> Self {
        Self::with_arch(variant, PolicyArch::for_variant(variant), seed).expect("standard architecture is valid")
    }

    pub fn with_arch(variant: Variant, arch: PolicyArch, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let towers = arch.towers.iter().map(|c| ConvTower::new(&mut rng, c.clone())).collect();
        let text_head = arch.text.map(|(i, o)| Linear::new(&mut rng, i, o));
        let head = Linear::new(&mut rng, arch.head_inputs(), arch.action_dim);
        Ok(Self { variant, arch, towers, text_head, head })
    }

    fn check_input(&self, input: &PolicyInput<T>) -> Result<usize, NnError> {
        if input.images.len() != self.towers.len() {
            return Err(NnError::Shape(format!(
                "{} expects {} image inputs, got {}",
                self.variant,
                self.towers.len(),
                input.images.len()
            )));
        }
        let b = input.batch();
        if b == 0 {
            return Err(NnError::Shape("empty batch".into()));
        }
        if input.images.iter().any(|t| t.shape().first() != Some(&b)) {
            return Err(NnError::Shape("image batch sizes differ".into()));
        }
        match (&self.text_head, &input.text) {
            (Some(h), Some(t)) if t.shape() == [b, h.in_features] => Ok(b),
            (None, None) => Ok(b),
            (Some(h), t) => Err(NnError::Shape(format!(
                "{} expects text [{b}, {}], got {:?}",
                self.variant,
                h.in_features,
                t.as_ref().map(|t| t.shape().to_vec())
            ))),
            (None, Some(_)) => Err(NnError::Shape(format!("{} takes no text input", self.variant))),
        }
    }

    fn concat(&self, parts: &[Vec<T>], batch: usize) -> Vec<T> {
        let widths: Vec<usize> = parts.iter().map(|p| p.len() / batch).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(batch * total);
        for b in 0..batch {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p[b * w..(b + 1) * w]);
            }
        }
        out
    }

    /// Forward pass recording what `backward` needs. Train mode updates BN running stats.
    pub fn forward(&mut self, input: &PolicyInput<T>, mode: Mode) -> Result<(Vec<T>, ForwardCache<T>), NnError> {
        let batch = self.check_input(input)?;
        let mut parts = Vec::new();
        let mut caches = Vec::new();
        for (tower, img) in self.towers.iter_mut().zip(&input.images) {
            let (flat, c) = tower.forward(img, mode)?;
            parts.push(flat);
            caches.push(c);
        }
        let text_in = match (&self.text_head, &input.text) {
            (Some(h), Some(t)) => {
                parts.push(h.forward(t.data(), batch)?);
                Some(t.data().to_vec())
            }
            _ => None,
        };
        let head_in = self.concat(&parts, batch);
        let out = self.head.forward(&head_in, batch)?;
        Ok((out, ForwardCache { towers: caches, text_in, head_in, batch }))
    }

    /// Eval-mode forward; `[B, action_dim]` row-major.
    pub fn predict(&self, input: &PolicyInput<T>) -> Result<Vec<T>, NnError> {
        let batch = self.check_input(input)?;
        let mut parts = Vec::new();
        for (tower, img) in self.towers.iter().zip(&input.images) {
            parts.push(tower.forward_eval(img)?);
        }
        if let (Some(h), Some(t)) = (&self.text_head, &input.text) {
            parts.push(h.forward(t.data(), batch)?);
        }
        self.head.forward(&self.concat(&parts, batch), batch)
    }

    /// Accumulates parameter gradients for `dout = ∂L/∂output`.
    pub fn backward(&mut self, cache: &ForwardCache<T>, dout: &[T]) {
        let b = cache.batch;
        let dhead = self.head.backward(&cache.head_in, dout, b, true).expect("input gradient requested");
        let mut widths: Vec<usize> = self.arch.towers.iter().map(TowerConfig::flat_dim).collect();
        if let Some((_, o)) = self.arch.text {
            widths.push(o);
        }
        let total: usize = widths.iter().sum();
        let mut offset = 0;
        let mut split = Vec::with_capacity(widths.len());
        for w in &widths {
            let mut part = Vec::with_capacity(b * w);
            for bi in 0..b {
                part.extend_from_slice(&dhead[bi * total + offset..bi * total + offset + w]);
            }
            split.push(part);
            offset += w;
        }
        let mut split = split.into_iter();
        for (tower, tc) in self.towers.iter_mut().zip(&cache.towers) {
            tower.backward(tc, split.next().expect("one slice per tower"));
        }
        if let (Some(h), Some(x)) = (self.text_head.as_mut(), cache.text_in.as_ref()) {
            h.backward(x, &split.next().expect("text slice"), b, false);
        }
    }

    /// Trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = Vec::new();
        for t in &mut self.towers {
            for (c, n) in t.convs.iter_mut().zip(t.norms.iter_mut()) {
                out.push(&mut c.weight);
                out.push(&mut n.gamma);
                out.push(&mut n.beta);
            }
        }
        if let Some(h) = &mut self.text_head {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// BN running statistics in a fixed order.
    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for t in &mut self.towers {
            for n in &mut t.norms {
                out.push(&mut n.running_mean);
                out.push(&mut n.running_var);
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }
}
