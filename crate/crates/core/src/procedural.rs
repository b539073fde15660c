//! Procedural test scenes: a spherical-cap surface carrying vessel tubes,
//! and exemplar textures with background, parenchyma and vessel regions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Vec3;
use crate::image::{LabelImage, RgbImage, CLASS_BACKGROUND, CLASS_PARENCHYMA, CLASS_VESSEL};
use crate::mesh::{FaceClass, SurfaceMesh};
use crate::texture::TextureExemplar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomeConfig {
    /// Rim diameter in mm.
    pub diameter: f64,
    /// Half-angle of the cap seen from the sphere centre.
    pub cap_angle_deg: f64,
    pub rings: usize,
    pub segments: usize,
    pub vessel_count: usize,
    pub vessel_radius: f64,
    pub seed: u64,
}

impl Default for DomeConfig {
    fn default() -> Self {
        Self {
            diameter: 35.0,
            cap_angle_deg: 50.0,
            rings: 24,
            segments: 72,
            vessel_count: 4,
            vessel_radius: 1.0,
            seed: 7,
        }
    }
}

const TUBE_SIDES: usize = 8;
const TUBE_STEPS: usize = 64;

/// Spherical cap bulging towards `-z` with vessel tubes lying on it,
/// translated so the vertex centroid is the origin.
pub fn dome_mesh(cfg: &DomeConfig) -> Result<SurfaceMesh> {
    if !(cfg.diameter > 0.0) || !(cfg.cap_angle_deg > 5.0 && cfg.cap_angle_deg < 90.0) {
        return Err(invalid("dome needs diameter > 0 and cap angle in (5, 90) degrees"));
    }
    if cfg.rings < 2 || cfg.segments < 3 || !(cfg.vessel_radius > 0.0) {
        return Err(invalid("dome needs rings >= 2, segments >= 3, vessel_radius > 0"));
    }
    let theta_max = cfg.cap_angle_deg.to_radians();
    let rs = 0.5 * cfg.diameter / theta_max.sin();
    let on_sphere = |theta: f64, phi: f64, r: f64| Vec3::new(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), -r * theta.cos());

    let mut vertices = vec![on_sphere(0.0, 0.0, rs)];
    let mut faces = Vec::new();
    let mut classes = Vec::new();
    for ring in 1..=cfg.rings {
        let theta = theta_max * ring as f64 / cfg.rings as f64;
        for s in 0..cfg.segments {
            vertices.push(on_sphere(theta, 2.0 * PI * s as f64 / cfg.segments as f64, rs));
        }
    }
    let idx = |ring: usize, s: usize| (1 + (ring - 1) * cfg.segments + s % cfg.segments) as u32;
    // Orientation: counter-clockwise seen from outside (from -z).
    for s in 0..cfg.segments {
        faces.push([0, idx(1, s + 1), idx(1, s)]);
        classes.push(FaceClass::Parenchyma);
    }
    for ring in 1..cfg.rings {
        for s in 0..cfg.segments {
            let (a, b, c, d) = (idx(ring, s), idx(ring, s + 1), idx(ring + 1, s), idx(ring + 1, s + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
            classes.push(FaceClass::Parenchyma);
            classes.push(FaceClass::Parenchyma);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lift = rs + 0.6 * cfg.vessel_radius;
    for v in 0..cfg.vessel_count {
        let base = 2.0 * PI * v as f64 / cfg.vessel_count.max(1) as f64;
        let phi0 = base + rng.gen_range(-0.3..0.3);
        let phi1 = phi0 + PI + rng.gen_range(-1.1..1.1);
        let a = on_sphere(theta_max, phi0, 1.0);
        let b = on_sphere(theta_max, phi1, 1.0);
        let wiggle = rng.gen_range(0.05..0.15);
        let waves = rng.gen_range(1.0..2.5);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let axis = a.cross(&b).normalize();
        let path: Vec<Vec3> = (0..=TUBE_STEPS)
            .map(|i| {
                let s = 0.1 + 0.8 * i as f64 / TUBE_STEPS as f64;
                let p = (a * (1.0 - s) + b * s).normalize();
                let lateral = wiggle * (PI * s).sin() * (2.0 * PI * waves * s + phase).sin();
                (p + axis * lateral).normalize() * lift
            })
            .collect();
        add_tube(&mut vertices, &mut faces, &mut classes, &path, cfg.vessel_radius);
    }

    let mesh = SurfaceMesh::new(vertices, faces, classes)?;
    let c = mesh.centroid();
    Ok(mesh.translated(-c))
}

fn add_tube(vertices: &mut Vec<Vec3>, faces: &mut Vec<[u32; 3]>, classes: &mut Vec<FaceClass>, path: &[Vec3], radius: f64) {
    let start = vertices.len();
    for (i, c) in path.iter().enumerate() {
        let next = path[(i + 1).min(path.len() - 1)];
        let prev = path[i.saturating_sub(1)];
        let tangent = (next - prev).normalize();
        let outward = c.normalize();
        let n = (outward - tangent * outward.dot(&tangent)).normalize();
        let b = tangent.cross(&n);
        for k in 0..TUBE_SIDES {
            let ang = 2.0 * PI * k as f64 / TUBE_SIDES as f64;
            vertices.push(c + (n * ang.cos() + b * ang.sin()) * radius);
        }
    }
    for i in 0..path.len() - 1 {
        for k in 0..TUBE_SIDES {
            let a = (start + i * TUBE_SIDES + k) as u32;
            let b = (start + i * TUBE_SIDES + (k + 1) % TUBE_SIDES) as u32;
            let c = a + TUBE_SIDES as u32;
            let d = b + TUBE_SIDES as u32;
            faces.push([a, c, d]);
            faces.push([a, d, b]);
            classes.push(FaceClass::Vessel);
            classes.push(FaceClass::Vessel);
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, x: i64, y: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((x as u64).wrapping_mul(0x1F1F_1F1F) ^ (y as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1]` with `octaves` halving amplitudes.
pub fn value_noise(seed: u64, x: f64, y: f64, octaves: u32) -> f64 {
    let (mut sum, mut amp, mut norm, mut freq) = (0.0, 1.0, 0.0, 1.0);
    for o in 0..octaves {
        let (fx, fy) = (x * freq, y * freq);
        let (x0, y0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0, fy - y0);
        let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
        let s = seed.wrapping_add(o as u64 * 0x51ED);
        let (xi, yi) = (x0 as i64, y0 as i64);
        let top = lattice(s, xi, yi) * (1.0 - sx) + lattice(s, xi + 1, yi) * sx;
        let bottom = lattice(s, xi, yi + 1) * (1.0 - sx) + lattice(s, xi + 1, yi + 1) * sx;
        sum += amp * (top * (1.0 - sy) + bottom * sy);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

#[derive(Debug, Clone, Copy)]
struct Palette {
    background: [f64; 3],
    parenchyma: [f64; 3],
    vessel: [f64; 3],
    contrast: f64,
    scale: f64,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn palette(rng: &mut ChaCha8Rng) -> Palette {
    let ph = rng.gen_range(-0.03..0.06);
    let parenchyma = hsv(ph, rng.gen_range(0.3..0.6), rng.gen_range(0.65..0.9));
    let vessel = hsv(ph + rng.gen_range(-0.04..0.02), rng.gen_range(0.6..0.9), rng.gen_range(0.3..0.5));
    let background = hsv(rng.gen_range(0.0..1.0), rng.gen_range(0.05..0.4), rng.gen_range(0.2..0.8));
    Palette {
        background,
        parenchyma,
        vessel,
        contrast: rng.gen_range(0.12..0.3),
        scale: rng.gen_range(4.0..10.0),
    }
}

/// `count` procedural exemplars of `size x size` pixels with ids
/// `proc-00`, `proc-01`, ...
pub fn procedural_textures(count: usize, size: usize, seed: u64) -> Result<Vec<TextureExemplar>> {
    if size < 16 {
        return Err(invalid("procedural textures need size >= 16"));
    }
    (0..count)
        .map(|i| procedural_texture(&format!("proc-{i:02}"), size, splitmix(seed.wrapping_add(i as u64))))
        .collect()
}

pub fn procedural_texture(id: &str, size: usize, seed: u64) -> Result<TextureExemplar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pal = palette(&mut rng);
    let s = size as f64;
    let mut labels = LabelImage::background(size, size);

    // Irregular opening covering most of the frame.
    let (cx, cy) = (s * rng.gen_range(0.45..0.55), s * rng.gen_range(0.45..0.55));
    let r0 = s * rng.gen_range(0.36..0.42);
    let edge_seed = rng.gen::<u64>();
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let ang = dy.atan2(dx);
            let wobble = 1.0 + 0.18 * (value_noise(edge_seed, ang.cos() * 2.0 + 5.0, ang.sin() * 2.0 + 5.0, 3) - 0.5);
            if (dx * dx + dy * dy).sqrt() < r0 * wobble {
                labels.set(x, y, CLASS_PARENCHYMA);
            }
        }
    }

    // Meandering vessels from the rim inwards.
    let n_vessels = rng.gen_range(4..=6);
    for _ in 0..n_vessels {
        let ang: f64 = rng.gen_range(0.0..2.0 * PI);
        let (mut px, mut py) = (cx + 0.85 * r0 * ang.cos(), cy + 0.85 * r0 * ang.sin());
        let mut dir = ang + PI + rng.gen_range(-0.5..0.5);
        let width = s * rng.gen_range(0.015..0.025);
        let bend = rng.gen_range(-0.02..0.02);
        for _ in 0..(2.0 * s) as usize {
            stamp(&mut labels, px, py, width);
            dir += bend + rng.gen_range(-0.08..0.08);
            px += 0.5 * dir.cos();
            py += 0.5 * dir.sin();
            if !(0.0..s).contains(&px) || !(0.0..s).contains(&py) || labels.get(px as usize, py as usize) == CLASS_BACKGROUND {
                break;
            }
        }
    }
    // Guarantee the vessel class is present.
    stamp(&mut labels, cx, cy, 2.0);

    let noise_seed = rng.gen::<u64>();
    let mut image = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / s * pal.scale, y as f64 / s * pal.scale);
            let n = value_noise(noise_seed, u, v, 4) - 0.5;
            let fine = value_noise(noise_seed ^ 0xABCD, u * 4.0, v * 4.0, 2) - 0.5;
            let (base, amp) = match labels.get(x, y) {
                CLASS_BACKGROUND => (pal.background, pal.contrast * 0.7),
                CLASS_VESSEL => (pal.vessel, pal.contrast * 0.6),
                _ => (pal.parenchyma, pal.contrast),
            };
            for c in 0..3 {
                let tint = 1.0 + 0.15 * (c as f64 - 1.0) * n;
                let val = base[c] * tint + amp * n + 0.4 * amp * fine;
                image.set(c, x, y, val.clamp(0.0, 1.0) as f32);
            }
        }
    }
    TextureExemplar::new(id, image.quantized(), labels)
}

fn stamp(labels: &mut LabelImage, cx: f64, cy: f64, r: f64) {
    let (w, h) = (labels.width() as i64, labels.height() as i64);
    let r = r.max(0.75);
    for y in ((cy - r).floor() as i64).max(0)..=((cy + r).ceil() as i64).min(h - 1) {
        for x in ((cx - r).floor() as i64).max(0)..=((cx + r).ceil() as i64).min(w - 1) {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                if labels.get(x as usize, y as usize) != CLASS_BACKGROUND {
                    labels.set(x as usize, y as usize, CLASS_VESSEL);
                }
            }
        }
    }
}
