use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DemoSet, ImitationError};
use crate::scenario::TaskKind;
use crate::sim::Action;

/// Noise injection: `k` copies per demo, each action coordinate perturbed
/// with probability `beta` by `N(0, mu²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DartConfig {
    pub mu: f64,
    pub beta: f64,
    pub k: usize,
}

impl Default for DartConfig {
    fn default() -> Self {
        Self { mu: 0.1, beta: 0.5, k: 5 }
    }
}

impl DartConfig {
    pub fn validate(&self) -> Result<(), ImitationError> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) || !(0.0..=1.0).contains(&self.beta) || self.k == 0 {
            return Err(ImitationError::Config(format!("invalid DART config {self:?}")));
        }
        Ok(())
    }
}

fn perturb(rng: &mut ChaCha8Rng, noise: &Normal<f64>, beta: f64, task: TaskKind, a: &Action) -> Action {
    let mut out = a.0;
    for v in out.iter_mut() {
        if rng.gen_bool(beta) {
            *v += noise.sample(rng);
        }
    }
    out[0] = out[0].clamp(0.0, 1.0);
    out[1] = out[1].clamp(0.0, 1.0);
    if task == TaskKind::Rotate {
        if out[2] != a.0[2] || out[3] != a.0[3] {
            let n = (out[2] * out[2] + out[3] * out[3]).sqrt();
            if n > 0.0 {
                out[2] /= n;
                out[3] /= n;
            } else {
                out[2] = a.0[2];
                out[3] = a.0[3];
            }
        }
    } else {
        out[2] = out[2].clamp(0.0, 1.0);
        out[3] = out[3].clamp(0.0, 1.0);
    }
    Action(out)
}

/// Returns `k` noisy copies of every demonstration, in order
/// (all copies of the first demo, then the second, ...). Observations are shared.
pub fn dart_augment(demos: &DemoSet, cfg: &DartConfig, seed: u64) -> Result<DemoSet, ImitationError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.mu).map_err(|e| ImitationError::Config(e.to_string()))?;
    let mut trajectories = Vec::with_capacity(demos.len() * cfg.k);
    for t in &demos.trajectories {
        for _ in 0..cfg.k {
            let mut copy = t.clone();
            for s in &mut copy.steps {
                s.action = perturb(&mut rng, &noise, cfg.beta, s.scene.task, &s.action);
            }
            trajectories.push(copy);
        }
    }
    DemoSet::new(&demos.scenario, demos.seed, &demos.catalog_hash, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Registry;

    fn demos(n: usize, spec: &str) -> DemoSet {
        let reg = Registry::builtin();
        let spec = reg.scenario(spec).unwrap();
        DemoSet::generate(reg.catalog(), spec, &spec.truth, n, 3).unwrap()
    }

    #[test]
    fn five_copies_per_demo() {
        let d = demos(10, "heart");
        let out = dart_augment(&d, &DartConfig { mu: 0.1, beta: 0.5, k: 5 }, 0).unwrap();
        assert_eq!(out.len(), 50);
        for (i, t) in out.trajectories.iter().enumerate() {
            assert_eq!(t.steps[0].observation, d.trajectories[i / 5].steps[0].observation);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        for spec in ["heart", "rotate-block", "sweep-block-line"] {
            let d = demos(8, spec);
            let out = dart_augment(&d, &DartConfig { mu: 0.0, beta: 0.5, k: 5 }, 1).unwrap();
            for (i, t) in out.trajectories.iter().enumerate() {
                let a = t.steps[0].action.0.map(f64::to_bits);
                let b = d.trajectories[i / 5].steps[0].action.0.map(f64::to_bits);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn rotation_components_stay_unit() {
        let d = demos(20, "rotate-block");
        let out = dart_augment(&d, &DartConfig { mu: 0.2, beta: 0.5, k: 5 }, 2).unwrap();
        for t in &out.trajectories {
            let a = t.steps[0].action;
            a.validate(TaskKind::Rotate).unwrap();
        }
    }

    #[test]
    fn rejects_bad_config() {
        let d = demos(1, "heart");
        assert!(dart_augment(&d, &DartConfig { mu: -1.0, beta: 0.5, k: 5 }, 0).is_err());
        assert!(dart_augment(&d, &DartConfig { mu: 0.1, beta: 1.5, k: 5 }, 0).is_err());
        assert!(dart_augment(&d, &DartConfig { mu: 0.1, beta: 0.5, k: 0 }, 0).is_err());
    }
}
