//! Texture exemplars: an RGB image paired with its class map.
//!
//! On disk a texture set is a directory holding `<id>.png`,
//! `<id>.labels.png` and a tab-separated `manifest.tsv` with the columns
//! `id`, `provenance`, `license`.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid, io_err, Error, Result};
use crate::image::{LabelImage, RgbImage, NUM_CLASSES};

pub const TEXTURE_MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct TextureExemplar {
    pub id: String,
    pub image: RgbImage,
    pub class_map: LabelImage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextureEntry {
    pub id: String,
    pub provenance: String,
    pub license: String,
}

impl TextureExemplar {
    pub fn new(id: impl Into<String>, image: RgbImage, class_map: LabelImage) -> Result<Self> {
        let tex = Self {
            id: id.into(),
            image,
            class_map,
        };
        tex.validate()?;
        Ok(tex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\', '\t', '\n']) {
            return Err(invalid(format!("bad texture id `{}`", self.id)));
        }
        if self.image.width() != self.class_map.width() || self.image.height() != self.class_map.height() {
            return Err(invalid(format!("texture `{}`: image and class map sizes differ", self.id)));
        }
        let counts = self.class_map.class_counts();
        if let Some(c) = (0..NUM_CLASSES).find(|&c| counts[c] == 0) {
            return Err(invalid(format!("texture `{}`: class {c} absent from class map", self.id)));
        }
        Ok(())
    }

    /// Per-class mean colour, `None` for classes with no pixels.
    pub fn class_means(&self) -> [Option<[f64; 3]>; NUM_CLASSES] {
        class_means(&self.image, &self.class_map)
    }

    /// Hex SHA-256 over both images, as stored on disk.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.id.as_bytes());
        h.update((self.image.width() as u64).to_le_bytes());
        h.update((self.image.height() as u64).to_le_bytes());
        h.update(self.image.to_rgb8());
        h.update(self.class_map.labels());
        hex::encode(h.finalize())
    }

    pub fn load(dir: &Path, id: &str) -> Result<Self> {
        let image = RgbImage::load_png(&dir.join(format!("{id}.png")))?;
        let class_map = LabelImage::load_png(&dir.join(format!("{id}.labels.png")))?;
        Self::new(id, image, class_map)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.image.save_png(&dir.join(format!("{}.png", self.id)))?;
        self.class_map.save_png(&dir.join(format!("{}.labels.png", self.id)))
    }
}

pub fn class_means(image: &RgbImage, labels: &LabelImage) -> [Option<[f64; 3]>; NUM_CLASSES] {
    let mut sums = [[0.0f64; 3]; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    let n = labels.width() * labels.height();
    for p in 0..n {
        let c = usize::from(labels.labels()[p]);
        counts[c] += 1;
        for (ch, s) in sums[c].iter_mut().enumerate() {
            *s += f64::from(image.channel(ch)[p]);
        }
    }
    let mut out = [None; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        if counts[c] > 0 {
            out[c] = Some(sums[c].map(|s| s / counts[c] as f64));
        }
    }
    out
}

pub fn read_manifest(dir: &Path) -> Result<Vec<TextureEntry>> {
    let path = dir.join(TEXTURE_MANIFEST);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("id\t")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Format {
                path: path.clone(),
                message: format!("line {}: expected 3 tab-separated columns", i + 1),
            });
        }
        entries.push(TextureEntry {
            id: cols[0].to_string(),
            provenance: cols[1].to_string(),
            license: cols[2].to_string(),
        });
    }
    Ok(entries)
}

pub fn write_manifest(dir: &Path, entries: &[TextureEntry]) -> Result<()> {
    let mut s = String::from("id\tprovenance\tlicense\n");
    for e in entries {
        let _ = writeln!(s, "{}\t{}\t{}", e.id, e.provenance, e.license);
    }
    let path = dir.join(TEXTURE_MANIFEST);
    std::fs::write(&path, s).map_err(io_err(&path))
}

/// Loads the listed textures (all manifest entries when `ids` is `None`),
/// in manifest order.
pub fn load_texture_set(dir: &Path, ids: Option<&[String]>) -> Result<Vec<TextureExemplar>> {
    let entries = read_manifest(dir)?;
    if let Some(ids) = ids {
        for id in ids {
            if !entries.iter().any(|e| &e.id == id) {
                return Err(invalid(format!("texture `{id}` not listed in {}", dir.join(TEXTURE_MANIFEST).display())));
            }
        }
    }
    entries
        .iter()
        .filter(|e| ids.map_or(true, |ids| ids.contains(&e.id)))
        .map(|e| TextureExemplar::load(dir, &e.id))
        .collect()
}
