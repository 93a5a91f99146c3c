use serde::{Deserialize, Serialize};

use super::catalog::{Pattern, Texture};
use super::{to_pixel, Catalog, Scene, SceneObject};

/// Top-down RGB image, row-major `H × W × 3`, values in `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Observation {
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Binary PPM encoding, handy for eyeballing scenes.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }
}

/// Per-pixel object labels: `0` is background, `i` is `objects[i-1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationMask {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl SegmentationMask {
    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

/// A pixel covered by an object together with the footprint cell it samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoveredPixel {
    pub x: i32,
    pub y: i32,
    pub cell: (i32, i32),
}

/// Pixels covered by an object's (possibly rotated) footprint, clipped to the image.
pub fn object_pixels(catalog: &Catalog, obj: &SceneObject) -> Vec<CoveredPixel> {
    let res = catalog.resolution() as i32;
    let fp = &catalog.object_type(obj.object_type).footprint;
    let ax = to_pixel(obj.position[0], res as usize);
    let ay = to_pixel(obj.position[1], res as usize);
    let mut out = Vec::with_capacity(fp.len());
    if obj.rotation == 0.0 {
        for &(dx, dy) in fp.cells() {
            let (x, y) = (ax + dx, ay + dy);
            if (0..res).contains(&x) && (0..res).contains(&y) {
                out.push(CoveredPixel { x, y, cell: (dx, dy) });
            }
        }
        return out;
    }
    // Inverse mapping: each nearby pixel samples the footprint cell it lands on.
    let (s, c) = obj.rotation.to_radians().sin_cos();
    let r = fp.radius() * 3 / 2 + 2;
    for y in (ay - r).max(0)..(ay + r + 1).min(res) {
        for x in (ax - r).max(0)..(ax + r + 1).min(res) {
            let (dx, dy) = ((x - ax) as f64, (y - ay) as f64);
            let u = (c * dx + s * dy).round() as i32;
            let v = (-s * dx + c * dy).round() as i32;
            if fp.contains(u, v) {
                out.push(CoveredPixel { x, y, cell: (u, v) });
            }
        }
    }
    out
}

pub fn render(catalog: &Catalog, scene: &Scene) -> Observation {
    let res = catalog.resolution();
    let bg = catalog.background();
    let mut pixels = Vec::with_capacity(res * res * 3);
    for _ in 0..res * res {
        pixels.extend_from_slice(&bg);
    }
    for obj in &scene.objects {
        let tex = catalog.texture(obj.texture);
        for p in object_pixels(catalog, obj) {
            let rgb = texel(tex, p.cell.0, p.cell.1);
            let i = (p.y as usize * res + p.x as usize) * 3;
            pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }
    Observation { height: res, width: res, pixels }
}

pub fn segment(catalog: &Catalog, scene: &Scene) -> SegmentationMask {
    let res = catalog.resolution();
    let mut labels = vec![0u8; res * res];
    for (k, obj) in scene.objects.iter().enumerate() {
        for p in object_pixels(catalog, obj) {
            labels[p.y as usize * res + p.x as usize] = (k + 1) as u8;
        }
    }
    SegmentationMask { height: res, width: res, labels }
}

fn hash2(i: i32, j: i32, salt: u32) -> f64 {
    let mut h = (i as u32).wrapping_mul(0x9E37_79B1) ^ (j as u32).wrapping_mul(0x85EB_CA77) ^ salt;
    h ^= h >> 15;
    h = h.wrapping_mul(0x2C1B_3C6D);
    h ^= h >> 12;
    h = h.wrapping_mul(0x297A_2D39);
    h ^= h >> 15;
    (h & 0xFFFF) as f64 / 65535.0
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match h6 as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Colour of footprint cell `(i, j)` under a texture.
fn texel(tex: &Texture, i: i32, j: i32) -> [f32; 3] {
    let a = tex.rgb;
    let b = tex.secondary.unwrap_or(a);
    let (fi, fj) = (i as f64, j as f64);
    let rgb = match tex.pattern {
        Pattern::Solid => a,
        Pattern::Swirl => {
            let r = (fi * fi + fj * fj).sqrt();
            let t = 0.5 + 0.5 * (0.9 * r + 2.5 * fj.atan2(fi)).sin();
            mix(a, b, t)
        }
        Pattern::Paisley => {
            if (i * i + 3 * j).rem_euclid(7) < 3 {
                b
            } else {
                a
            }
        }
        Pattern::Stripe => {
            if (i + j).div_euclid(2).rem_euclid(2) == 0 {
                a
            } else {
                b
            }
        }
        Pattern::PolkaDot => {
            let (u, v) = (i.rem_euclid(4) as f64 - 1.5, j.rem_euclid(4) as f64 - 1.5);
            if u * u + v * v < 1.6 {
                b
            } else {
                a
            }
        }
        Pattern::Checker => {
            if (i.div_euclid(2) + j.div_euclid(2)).rem_euclid(2) == 0 {
                a
            } else {
                b
            }
        }
        Pattern::Tiles => {
            if i.rem_euclid(5) == 0 || j.rem_euclid(5) == 0 {
                b
            } else {
                a
            }
        }
        Pattern::Brick => {
            let row = j.div_euclid(3);
            let offset = if row % 2 == 0 { 0 } else { 3 };
            if j.rem_euclid(3) == 0 || (i + offset).rem_euclid(6) == 0 {
                b
            } else {
                a
            }
        }
        Pattern::Wood => mix(a, b, 0.5 + 0.5 * (0.8 * fi + 0.05 * fj * fj).sin()),
        Pattern::Rainbow => hsv((fi + fj) * 0.06, 0.85, 0.95),
        Pattern::Tiger => {
            if (fi + 2.0 * (fj * 0.7).sin()).rem_euclid(5.0) < 1.6 {
                b
            } else {
                a
            }
        }
        Pattern::Magma => mix(a, b, hash2(i.div_euclid(2), j.div_euclid(2), 11)),
        Pattern::Granite => mix(a, b, hash2(i, j, 29)),
        Pattern::Marble => mix(a, b, 0.5 + 0.5 * (0.5 * fi + 3.0 * hash2(i.div_euclid(3), j.div_euclid(3), 5)).sin()),
        Pattern::Camouflage => {
            if hash2(i.div_euclid(3), j.div_euclid(3), 41) < 0.5 {
                a
            } else {
                b
            }
        }
        Pattern::Crystal => mix(a, b, ((i.abs() + j.abs()).rem_euclid(4)) as f64 / 3.0),
        Pattern::Metal => mix(a, b, 0.5 + 0.5 * (0.4 * fj).sin()),
        Pattern::Plastic => {
            if i + j < -4 {
                b
            } else {
                a
            }
        }
    };
    [rgb[0].clamp(0.0, 1.0) as f32, rgb[1].clamp(0.0, 1.0) as f32, rgb[2].clamp(0.0, 1.0) as f32]
}
