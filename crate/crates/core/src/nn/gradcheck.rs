//! Finite-difference checks of the hand-written backward passes, in f64.
//!
//! Each check builds a small random instance, takes `L = Σ r ⊙ y` for a fixed
//! random `r`, and compares analytic gradients (parameters and input) with
//! central differences.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::{relu, relu_backward};
use super::{BatchNorm, Conv2d, Linear, Mode, Tensor};

const H: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    Relu,
    Linear,
}

impl LayerKind {
    pub const ALL: [LayerKind; 4] = [LayerKind::Conv2d, LayerKind::BatchNorm, LayerKind::Relu, LayerKind::Linear];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradCheck {
    pub layer: LayerKind,
    /// Number of gradient entries compared.
    pub checked: usize,
    pub max_relative_error: f64,
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compares `analytic` with central differences of `loss` over `values`.
fn compare(values: &mut Vec<f64>, analytic: &[f64], loss: &mut dyn FnMut(&[f64]) -> f64) -> (usize, f64) {
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = values[i];
        values[i] = orig + H;
        let lp = loss(values);
        values[i] = orig - H;
        let lm = loss(values);
        values[i] = orig;
        worst = worst.max(rel(a, (lp - lm) / (2.0 * H)));
    }
    (analytic.len(), worst)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn check_layer(layer: LayerKind, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (checked, max_relative_error) = match layer {
        LayerKind::Conv2d => conv(&mut rng),
        LayerKind::BatchNorm => batch_norm(&mut rng),
        LayerKind::Relu => relu_check(&mut rng),
        LayerKind::Linear => linear(&mut rng),
    };
    GradCheck { layer, checked, max_relative_error }
}

fn conv(rng: &mut ChaCha8Rng) -> (usize, f64) {
    let shape = [2, 7, 7, 3];
    let mut layer = Conv2d::<f64>::new(rng, 3, 4, 3, 2);
    let mut x = uniform(rng, shape.iter().product(), -1.0, 1.0);
    let out_len = 2 * 3 * 3 * 4;
    let r = uniform(rng, out_len, -1.0, 1.0);
    let forward = |l: &Conv2d<f64>, x: &[f64]| l.forward(&Tensor::from_vec(&shape, x.to_vec()).unwrap()).unwrap();
    let (_, cache) = forward(&layer, &x);
    let dx = layer.backward(&cache, &r, true).unwrap().into_data();
    let dw = layer.weight.grad.clone();
    let (n1, e1) = compare(&mut x, &dx, &mut |x| dot(forward(&layer, x).0.data(), &r));
    let mut w = layer.weight.value.clone();
    let (n2, e2) = compare(&mut w, &dw, &mut |w| {
        let mut l = layer.clone();
        l.weight.value = w.to_vec();
        dot(forward(&l, &x).0.data(), &r)
    });
    (n1 + n2, e1.max(e2))
}

fn batch_norm(rng: &mut ChaCha8Rng) -> (usize, f64) {
    let c = 4;
    let rows = 9;
    let mut bn = BatchNorm::<f64>::new(c);
    bn.gamma.value = uniform(rng, c, 0.5, 1.5);
    bn.beta.value = uniform(rng, c, -0.2, 0.2);
    let mut x = uniform(rng, rows * c, -1.0, 1.0);
    let r = uniform(rng, rows * c, -1.0, 1.0);
    let run = |bn: &BatchNorm<f64>, x: &[f64]| {
        let mut y = x.to_vec();
        bn.clone().forward(&mut y, Mode::Train);
        dot(&y, &r)
    };
    let mut y = x.clone();
    let cache = bn.forward(&mut y, Mode::Train);
    let mut dx = r.clone();
    bn.backward(&cache, &mut dx);
    let (dg, db) = (bn.gamma.grad.clone(), bn.beta.grad.clone());
    let (n1, e1) = compare(&mut x, &dx, &mut |x| run(&bn, x));
    let mut g = bn.gamma.value.clone();
    let (n2, e2) = compare(&mut g, &dg, &mut |g| {
        let mut b = bn.clone();
        b.gamma.value = g.to_vec();
        run(&b, &x)
    });
    let mut be = bn.beta.value.clone();
    let (n3, e3) = compare(&mut be, &db, &mut |be| {
        let mut b = bn.clone();
        b.beta.value = be.to_vec();
        run(&b, &x)
    });
    (n1 + n2 + n3, e1.max(e2).max(e3))
}

fn relu_check(rng: &mut ChaCha8Rng) -> (usize, f64) {
    // Keep inputs away from the kink so central differences are exact.
    let mut x: Vec<f64> = (0..40)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let r = uniform(rng, x.len(), -1.0, 1.0);
    let mut y = x.clone();
    relu(&mut y);
    let mut dx = r.clone();
    relu_backward(&y, &mut dx);
    compare(&mut x, &dx, &mut |x| {
        let mut y = x.to_vec();
        relu(&mut y);
        dot(&y, &r)
    })
}

fn linear(rng: &mut ChaCha8Rng) -> (usize, f64) {
    let (batch, fin, fout) = (3, 5, 4);
    let mut layer = Linear::<f64>::new(rng, fin, fout);
    layer.bias.value = uniform(rng, fout, -0.5, 0.5);
    let mut x = uniform(rng, batch * fin, -1.0, 1.0);
    let r = uniform(rng, batch * fout, -1.0, 1.0);
    let dx = layer.backward(&x, &r, batch, true).unwrap();
    let (dw, db) = (layer.weight.grad.clone(), layer.bias.grad.clone());
    let (n1, e1) = compare(&mut x, &dx, &mut |x| dot(&layer.forward(x, batch).unwrap(), &r));
    let mut w = layer.weight.value.clone();
    let (n2, e2) = compare(&mut w, &dw, &mut |w| {
        let mut l = layer.clone();
        l.weight.value = w.to_vec();
        dot(&l.forward(&x, batch).unwrap(), &r)
    });
    let mut b = layer.bias.value.clone();
    let (n3, e3) = compare(&mut b, &db, &mut |b| {
        let mut l = layer.clone();
        l.bias.value = b.to_vec();
        dot(&l.forward(&x, batch).unwrap(), &r)
    });
    (n1 + n2 + n3, e1.max(e2).max(e3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        for kind in LayerKind::ALL {
            let g = check_layer(kind, 5);
            assert!(g.checked > 0);
            assert!(g.max_relative_error < 1e-4, "{g:?}");
        }
    }
}
