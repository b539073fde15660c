//! Planar RGB images and per-pixel class maps with PNG persistence.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid, io_err, Error, Result};

pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_PARENCHYMA: u8 = 1;
pub const CLASS_VESSEL: u8 = 2;
pub const NUM_CLASSES: usize = 3;

/// Channel-planar RGB image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for c in 0..3 {
            img.channel_mut(c).fill(rgb[c]);
        }
        img
    }

    /// `data` is channel-planar, length `3 * width * height`.
    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(invalid(format!(
                "planar buffer of {} values does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        [self.get(0, x, y), self.get(1, x, y), self.get(2, x, y)]
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// 8-bit interleaved RGB, the representation written to disk.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(3 * n);
        for p in 0..n {
            for c in 0..3 {
                out.push(quantize(self.data[c * n + p]));
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let n = width * height;
        if bytes.len() != 3 * n {
            return Err(invalid("RGB8 buffer size mismatch"));
        }
        let mut data = vec![0.0f32; 3 * n];
        for p in 0..n {
            for c in 0..3 {
                data[c * n + p] = f32::from(bytes[3 * p + c]) / 255.0;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Round-trips through 8-bit storage.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(self.width, self.height, &self.to_rgb8()).expect("same dims")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = ::image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .ok_or_else(|| invalid("image buffer size"))?;
        buf.save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| annotate(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let img = ::image::open(path).map_err(|e| annotate(path, e))?.to_rgb8();
        Self::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
    }

    /// Like [`RgbImage::load_png`] but rejects files that do not store
    /// exactly three colour channels.
    pub fn load_png_rgb_only(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let img = ::image::open(path).map_err(|e| annotate(path, e))?;
        let channels = img.color().channel_count();
        if channels != 3 {
            return Err(invalid(format!("{}: expected 3 colour channels, found {channels}", path.display())));
        }
        let img = img.to_rgb8();
        Self::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = Self::new(width, height);
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                for c in 0..3 {
                    let top = self.get(c, x0, y0) * (1.0 - wx) + self.get(c, x1, y0) * wx;
                    let bot = self.get(c, x0, y1) * (1.0 - wx) + self.get(c, x1, y1) * wx;
                    out.set(c, x, y, top * (1.0 - wy) + bot * wy);
                }
            }
        }
        out
    }
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn annotate(path: &Path, e: ::image::ImageError) -> Error {
    match e {
        ::image::ImageError::IoError(source) => io_err(path)(source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Per-pixel class map: 0 background, 1 parenchyma, 2 vessel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelImage {
    pub fn background(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![CLASS_BACKGROUND; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(invalid("label buffer size mismatch"));
        }
        if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= NUM_CLASSES) {
            return Err(invalid(format!("label value {bad} outside {{0,1,2}}")));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        debug_assert!(usize::from(class) < NUM_CLASSES);
        self.labels[y * self.width + x] = class;
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }

    /// Nearest-neighbour resample (pixel-center aligned).
    pub fn resized_nearest(&self, width: usize, height: usize) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (((y as f64 + 0.5) * self.height as f64 / height as f64) as usize).min(self.height - 1);
            for x in 0..width {
                let sx = (((x as f64 + 0.5) * self.width as f64 / width as f64) as usize).min(self.width - 1);
                labels.push(self.get(sx, sy));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    /// Hex SHA-256 of the vessel pixel set (dimensions included).
    pub fn vessel_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        let bits: Vec<u8> = self.labels.iter().map(|&l| u8::from(l == CLASS_VESSEL)).collect();
        h.update(&bits);
        hex::encode(h.finalize())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, self.labels.clone())
            .ok_or_else(|| invalid("label buffer size"))?;
        buf.save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| annotate(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let img = ::image::open(path).map_err(|e| annotate(path, e))?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::from_labels(w, h, img.into_raw()).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::new(5, 4);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i % 256) as f32 / 255.0;
        }
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(RgbImage::load_png(&p).unwrap(), img.quantized());

        let labels = LabelImage::from_labels(3, 2, vec![0, 1, 2, 2, 1, 0]).unwrap();
        let q = dir.path().join("l.png");
        labels.save_png(&q).unwrap();
        assert_eq!(LabelImage::load_png(&q).unwrap(), labels);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(LabelImage::from_labels(2, 1, vec![0, 3]).is_err());
        assert!(LabelImage::from_labels(2, 2, vec![0, 1]).is_err());
    }

    #[test]
    fn nearest_downsample_picks_block_centers() {
        let l = LabelImage::from_labels(4, 2, vec![0, 1, 2, 2, 1, 1, 0, 0]).unwrap();
        let d = l.resized_nearest(2, 1);
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = RgbImage::filled(6, 6, [0.2, 0.4, 0.6]);
        let r = img.resized(3, 5);
        assert!(r.data().iter().all(|v| (v - 0.2).abs() < 1e-6 || (v - 0.4).abs() < 1e-6 || (v - 0.6).abs() < 1e-6));
        assert_eq!(img.resized(6, 6), img);
    }
}
