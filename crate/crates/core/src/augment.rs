//! Elastic deformation of textured images.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::RgbImage;
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticDeformConfig {
    /// Coarse grid spacing in pixels.
    pub grid_spacing: f64,
    /// Standard deviation of each coarse displacement component, in pixels.
    pub displacement_sigma: f64,
    pub seed: u64,
}

impl ElasticDeformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_spacing >= 8.0) || !self.grid_spacing.is_finite() {
            return Err(invalid("grid_spacing must be >= 8 px"));
        }
        if !(self.displacement_sigma >= 0.0) || !self.displacement_sigma.is_finite() {
            return Err(invalid("displacement_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Coarse random displacements and the dense field interpolated from them.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    pub width: usize,
    pub height: usize,
    /// Node displacements `(dx, dy)`, row-major over the coarse grid.
    pub nodes: Vec<(f64, f64)>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

pub fn displacement_field(width: usize, height: usize, cfg: &ElasticDeformConfig) -> Result<DisplacementField> {
    cfg.validate()?;
    // One extra node before and two after each axis for the cubic support.
    let gw = (width as f64 / cfg.grid_spacing).ceil() as usize + 4;
    let gh = (height as f64 / cfg.grid_spacing).ceil() as usize + 4;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nodes: Vec<(f64, f64)> = if cfg.displacement_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.displacement_sigma).expect("finite sigma");
        (0..gw * gh).map(|_| (normal.sample(&mut rng), normal.sample(&mut rng))).collect()
    } else {
        vec![(0.0, 0.0); gw * gh]
    };
    let mut dx = vec![0.0; width * height];
    let mut dy = vec![0.0; width * height];
    if cfg.displacement_sigma > 0.0 {
        for y in 0..height {
            let gy = (y as f64 + 0.5) / cfg.grid_spacing;
            let (iy, ty) = (gy.floor() as usize, gy.fract());
            let wy = catmull_rom(ty);
            for x in 0..width {
                let gx = (x as f64 + 0.5) / cfg.grid_spacing;
                let (ix, tx) = (gx.floor() as usize, gx.fract());
                let wx = catmull_rom(tx);
                let (mut sx, mut sy) = (0.0, 0.0);
                for (j, wyj) in wy.iter().enumerate() {
                    for (i, wxi) in wx.iter().enumerate() {
                        let (nx, ny) = nodes[(iy + j) * gw + ix + i];
                        sx += wyj * wxi * nx;
                        sy += wyj * wxi * ny;
                    }
                }
                dx[y * width + x] = sx;
                dy[y * width + x] = sy;
            }
        }
    }
    Ok(DisplacementField {
        width,
        height,
        nodes,
        dx,
        dy,
    })
}

/// Bilinear sample at continuous pixel coordinates, clamped to the image.
fn sample_bilinear(plane: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

pub fn apply_field(image: &RgbImage, field: &DisplacementField) -> RgbImage {
    let (w, h) = (image.width(), image.height());
    assert_eq!((w, h), (field.width, field.height), "field size must match image");
    let mut out = RgbImage::new(w, h);
    for c in 0..3 {
        let src = image.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                dst[p] = sample_bilinear(src, w, h, x as f64 + field.dx[p], y as f64 + field.dy[p]);
            }
        }
    }
    out
}

pub fn elastic_deform(image: &RgbImage, cfg: &ElasticDeformConfig) -> Result<RgbImage> {
    if cfg.displacement_sigma == 0.0 {
        cfg.validate()?;
        return Ok(image.clone());
    }
    let field = displacement_field(image.width(), image.height(), cfg)?;
    Ok(apply_field(image, &field))
}

/// Image-space augmentation applied after synthesis; poses are unchanged.
pub trait Augmenter: Send + Sync {
    fn name(&self) -> &str;

    fn augment(&self, image: &RgbImage, seed: u64) -> Result<RgbImage>;
}

pub struct ElasticAugmenter {
    pub grid_spacing: f64,
    pub displacement_sigma: f64,
}

impl Augmenter for ElasticAugmenter {
    fn name(&self) -> &str {
        "elastic"
    }

    fn augment(&self, image: &RgbImage, seed: u64) -> Result<RgbImage> {
        elastic_deform(
            image,
            &ElasticDeformConfig {
                grid_spacing: self.grid_spacing,
                displacement_sigma: self.displacement_sigma,
                seed,
            },
        )
    }
}

pub struct IdentityAugmenter;

impl Augmenter for IdentityAugmenter {
    fn name(&self) -> &str {
        "none"
    }

    fn augment(&self, image: &RgbImage, _seed: u64) -> Result<RgbImage> {
        Ok(image.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Registered augmenter name.
    pub method: String,
    /// Augmented copies per (pose, texture) pair, on top of the original.
    pub n_augmentations: usize,
    pub grid_spacing: f64,
    pub displacement_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            method: "elastic".into(),
            n_augmentations: 0,
            grid_spacing: 16.0,
            displacement_sigma: 2.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        ElasticDeformConfig {
            grid_spacing: self.grid_spacing,
            displacement_sigma: self.displacement_sigma,
            seed: self.seed,
        }
        .validate()?;
        augmenter_registry().create(&self.method, self).map(|_| ())
    }
}

pub fn augmenter_registry() -> Registry<dyn Augmenter, AugmentConfig> {
    let mut r: Registry<dyn Augmenter, AugmentConfig> = Registry::new("augmenter");
    r.register("elastic", "coarse Gaussian grid, bicubic upsampling, bilinear warp", |c| {
        Ok(Box::new(ElasticAugmenter {
            grid_spacing: c.grid_spacing,
            displacement_sigma: c.displacement_sigma,
        }))
    });
    r.register("none", "identity", |_| Ok(Box::new(IdentityAugmenter)));
    r
}
