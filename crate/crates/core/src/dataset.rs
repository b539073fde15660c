//! Per-case training corpora: generation, manifests and texture splits.
//!
//! Case directory layout:
//!
//! ```text
//! <case>/mesh.ply
//! <case>/intrinsics.json
//! <case>/labels/p<pose>.png
//! <case>/images/<sample_id>.png
//! <case>/manifest.json
//! ```

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augmenter_registry, AugmentConfig};
use crate::error::{invalid, io_err, Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::RgbImage;
use crate::mesh::SurfaceMesh;
use crate::render::rasterize_labels;
use crate::sampling::{sample_hemisphere_poses, PoseSamplingConfig};
use crate::synthesis::{AppearanceSynthesizer, SynthesisConfig};
use crate::texture::TextureExemplar;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const MESH_FILE: &str = "mesh.ply";
pub const IMAGES_DIR: &str = "images";
pub const LABELS_DIR: &str = "labels";

const FLUSH_EVERY: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceSample {
    pub id: String,
    /// Relative to the case directory.
    pub image_path: String,
    pub pose: Pose,
    pub texture_id: String,
    /// `None` for the un-augmented synthesis output.
    pub aug_seed: Option<u64>,
    pub pose_index: usize,
    /// Vessel-pixel hash of the label image the sample was synthesized from.
    pub label_hash: String,
    /// SHA-256 of the stored 8-bit RGB pixels.
    pub image_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub pose_index: usize,
    pub texture_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDataset {
    pub case_id: String,
    #[serde(skip)]
    pub root: PathBuf,
    pub mesh: String,
    pub intrinsics: CameraIntrinsics,
    pub texture_ids: Vec<String>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub complete: bool,
    pub samples: Vec<AppearanceSample>,
    #[serde(default)]
    pub failures: Vec<GenerationFailure>,
}

impl CaseDataset {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let ids: BTreeSet<&str> = self.texture_ids.iter().map(String::as_str).collect();
        if ids.len() != self.texture_ids.len() {
            return Err(invalid("duplicate texture ids in dataset"));
        }
        if let Some(s) = self.samples.iter().find(|s| !ids.contains(s.texture_id.as_str())) {
            return Err(invalid(format!("sample `{}` references unknown texture `{}`", s.id, s.texture_id)));
        }
        Ok(())
    }

    pub fn load(case_dir: &Path) -> Result<Self> {
        let path = case_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut ds: CaseDataset = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        ds.root = case_dir.to_path_buf();
        ds.validate()?;
        Ok(ds)
    }

    /// Atomic write of `manifest.json` and `intrinsics.json`.
    pub fn save(&self, case_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(case_dir).map_err(io_err(case_dir))?;
        write_atomic(&case_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())?;
        save_intrinsics(case_dir, &self.intrinsics)
    }

    pub fn image_path(&self, sample: &AppearanceSample) -> PathBuf {
        self.root.join(&sample.image_path)
    }

    pub fn load_image(&self, sample: &AppearanceSample) -> Result<RgbImage> {
        RgbImage::load_png(&self.image_path(sample))
    }

    pub fn load_mesh(&self) -> Result<SurfaceMesh> {
        SurfaceMesh::load(&self.root.join(&self.mesh))
    }

    /// Hash over the manifest content that matters for training.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.case_id.as_bytes());
        for s in &self.samples {
            h.update(serde_json::to_vec(s).expect("sample serializes"));
        }
        hex::encode(h.finalize())
    }

    fn with_samples(&self, texture_ids: Vec<String>, samples: Vec<AppearanceSample>) -> Self {
        Self {
            texture_ids,
            samples,
            failures: Vec::new(),
            ..self.clone()
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn save_intrinsics(case_dir: &Path, intr: &CameraIntrinsics) -> Result<()> {
    write_atomic(&case_dir.join(INTRINSICS_FILE), serde_json::to_string_pretty(intr)?.as_bytes())
}

pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let intr: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    intr.validate()?;
    Ok(intr)
}

/// Mixes a base seed with indices into an independent stream seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn image_hash(image: &RgbImage) -> String {
    hex::encode(Sha256::digest(image.to_rgb8()))
}

/// Everything needed to build one case corpus.
pub struct GenerationRequest<'a> {
    pub case_id: &'a str,
    pub mesh: &'a SurfaceMesh,
    pub intrinsics: &'a CameraIntrinsics,
    pub textures: &'a [TextureExemplar],
    pub pose_cfg: &'a PoseSamplingConfig,
    pub synth_cfg: &'a SynthesisConfig,
    pub aug_cfg: &'a AugmentConfig,
    pub synthesizer: &'a dyn AppearanceSynthesizer,
    /// Thread cap; 0 uses rayon's default.
    pub workers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationSummary {
    pub generated: usize,
    pub resumed: usize,
    pub failures: Vec<GenerationFailure>,
}

fn config_hash(req: &GenerationRequest<'_>) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(req.pose_cfg)?);
    h.update(serde_json::to_vec(req.synth_cfg)?);
    h.update(serde_json::to_vec(req.aug_cfg)?);
    h.update(serde_json::to_vec(req.intrinsics)?);
    h.update(req.mesh.to_ply().as_bytes());
    for t in req.textures {
        h.update(t.content_hash().as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn sample_id(pose: usize, texture: &str, aug: usize) -> String {
    format!("p{pose:04}_{texture}_a{aug}")
}

/// Renders labels for sampled poses, synthesizes one image per texture,
/// adds augmented copies and writes the case directory.
///
/// Samples already on disk from a run with the same configuration hash are
/// kept after their image hashes are verified. A failed (pose, texture)
/// synthesis is recorded and skipped.
pub fn generate_case_dataset(req: &GenerationRequest<'_>, out_dir: &Path) -> Result<(CaseDataset, GenerationSummary)> {
    if req.textures.is_empty() {
        return Err(invalid("at least one texture is required"));
    }
    req.pose_cfg.validate()?;
    req.synth_cfg.validate()?;
    req.aug_cfg.validate()?;
    req.intrinsics.validate()?;
    let texture_ids: Vec<String> = req.textures.iter().map(|t| t.id.clone()).collect();
    if texture_ids.iter().collect::<BTreeSet<_>>().len() != texture_ids.len() {
        return Err(invalid("duplicate texture ids"));
    }
    let augmenter = augmenter_registry().create(&req.aug_cfg.method, req.aug_cfg)?;
    let hash = config_hash(req)?;

    for dir in [out_dir.to_path_buf(), out_dir.join(IMAGES_DIR), out_dir.join(LABELS_DIR)] {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    req.mesh.save_ply(&out_dir.join(MESH_FILE))?;

    let previous: HashMap<String, AppearanceSample> = match CaseDataset::load(out_dir) {
        Ok(ds) if ds.config_hash.as_deref() == Some(hash.as_str()) => ds.samples.into_iter().map(|s| (s.id.clone(), s)).collect(),
        _ => HashMap::new(),
    };

    let poses = sample_hemisphere_poses(req.mesh, req.intrinsics, req.pose_cfg)?;
    let mut labels = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let (label, _) = rasterize_labels(req.mesh, req.intrinsics, pose);
        label.save_png(&out_dir.join(LABELS_DIR).join(format!("p{i:04}.png")))?;
        labels.push(label);
    }

    let n_aug = req.aug_cfg.n_augmentations;
    let jobs: Vec<(usize, usize)> = (0..poses.len()).flat_map(|i| (0..req.textures.len()).map(move |j| (i, j))).collect();

    let mut ds = CaseDataset {
        case_id: req.case_id.to_string(),
        root: out_dir.to_path_buf(),
        mesh: MESH_FILE.to_string(),
        intrinsics: *req.intrinsics,
        texture_ids,
        config_hash: Some(hash),
        complete: false,
        samples: Vec::new(),
        failures: Vec::new(),
    };

    let template = ds.clone();
    struct Progress {
        samples: Vec<AppearanceSample>,
        failures: Vec<GenerationFailure>,
        generated: usize,
        resumed: usize,
        since_flush: usize,
    }
    let progress = Mutex::new(Progress {
        samples: Vec::new(),
        failures: Vec::new(),
        generated: 0,
        resumed: 0,
        since_flush: 0,
    });

    let run_job = |&(i, j): &(usize, usize)| -> Result<()> {
        let tex = &req.textures[j];
        let ids: Vec<String> = (0..=n_aug).map(|a| sample_id(i, &tex.id, a)).collect();
        let reusable: Option<Vec<AppearanceSample>> = ids
            .iter()
            .map(|id| {
                let s = previous.get(id)?;
                let img = RgbImage::load_png(&out_dir.join(&s.image_path)).ok()?;
                (image_hash(&img) == s.image_hash).then(|| s.clone())
            })
            .collect();
        if let Some(samples) = reusable {
            let mut p = progress.lock().expect("progress lock");
            p.samples.extend(samples);
            p.resumed += ids.len();
            return Ok(());
        }

        let label = &labels[i];
        let synth_seed = derive_seed(req.synth_cfg.seed, &[i as u64, j as u64]);
        let outcome = match req.synthesizer.synthesize(label, tex, synth_seed) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("synthesis failed for pose {i}, texture {}: {e}", tex.id);
                progress.lock().expect("progress lock").failures.push(GenerationFailure {
                    pose_index: i,
                    texture_id: tex.id.clone(),
                    message: e.to_string(),
                });
                return Ok(());
            }
        };
        let base = outcome.image.quantized();
        let label_hash = label.vessel_hash();
        let mut made = Vec::with_capacity(ids.len());
        for (a, id) in ids.iter().enumerate() {
            let (img, aug_seed) = if a == 0 {
                (base.clone(), None)
            } else {
                let seed = derive_seed(req.aug_cfg.seed, &[i as u64, j as u64, a as u64]);
                (augmenter.augment(&base, seed)?.quantized(), Some(seed))
            };
            let rel = format!("{IMAGES_DIR}/{id}.png");
            img.save_png(&out_dir.join(&rel))?;
            made.push(AppearanceSample {
                id: id.clone(),
                image_path: rel,
                pose: poses[i],
                texture_id: tex.id.clone(),
                aug_seed,
                pose_index: i,
                label_hash: label_hash.clone(),
                image_hash: image_hash(&img),
            });
        }
        let mut p = progress.lock().expect("progress lock");
        p.generated += made.len();
        p.samples.extend(made);
        p.since_flush += 1;
        if p.since_flush >= FLUSH_EVERY {
            p.since_flush = 0;
            let mut snapshot = template.clone();
            snapshot.samples = sorted_samples(&p.samples, &template.texture_ids);
            snapshot.failures = p.failures.clone();
            snapshot.save(out_dir)?;
        }
        Ok(())
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.workers)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().try_for_each(run_job))?;

    let p = progress.into_inner().expect("progress lock");
    ds.samples = sorted_samples(&p.samples, &ds.texture_ids);
    let mut failures = p.failures;
    failures.sort_by(|a, b| (a.pose_index, &a.texture_id).cmp(&(b.pose_index, &b.texture_id)));
    ds.failures = failures.clone();
    ds.complete = true;
    ds.save(out_dir)?;
    Ok((
        ds,
        GenerationSummary {
            generated: p.generated,
            resumed: p.resumed,
            failures,
        },
    ))
}

fn sorted_samples(samples: &[AppearanceSample], texture_order: &[String]) -> Vec<AppearanceSample> {
    let rank: HashMap<&str, usize> = texture_order.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut out = samples.to_vec();
    out.sort_by_key(|s| (s.pose_index, rank[s.texture_id.as_str()], s.aug_seed.is_some(), s.id.clone()));
    out
}

/// Splits off every sample of the held-out textures.
pub fn make_loto_split(ds: &CaseDataset, held_out: &[String]) -> Result<(CaseDataset, CaseDataset)> {
    if held_out.is_empty() {
        return Err(invalid("held-out texture set is empty"));
    }
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    if let Some(t) = held.iter().find(|t| !ds.texture_ids.iter().any(|id| id == *t)) {
        return Err(invalid(format!("held-out texture `{t}` is not in the dataset")));
    }
    if held.len() >= ds.texture_ids.len() {
        return Err(invalid("cannot hold out every texture"));
    }
    let (val, train): (Vec<_>, Vec<_>) = ds.samples.iter().cloned().partition(|s| held.contains(s.texture_id.as_str()));
    let (val_ids, train_ids): (Vec<_>, Vec<_>) = ds.texture_ids.iter().cloned().partition(|t| held.contains(t.as_str()));
    Ok((ds.with_samples(train_ids, train), ds.with_samples(val_ids, val)))
}

/// Keeps `k` textures (a seeded permutation prefix, so subsets are nested
/// in `k`) and resamples their samples with replacement, balanced, back to
/// the original sample count.
pub fn subsample_textures(ds: &CaseDataset, k: usize, seed: u64) -> Result<CaseDataset> {
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    if k > ds.texture_ids.len() {
        return Err(invalid(format!("k = {k} exceeds the {} available textures", ds.texture_ids.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = ds.texture_ids.clone();
    order.shuffle(&mut rng);
    let keep: BTreeSet<&str> = order[..k].iter().map(String::as_str).collect();
    let kept: Vec<AppearanceSample> = ds.samples.iter().filter(|s| keep.contains(s.texture_id.as_str())).cloned().collect();
    let target = ds.samples.len();
    if kept.is_empty() {
        return Err(invalid("selected textures have no samples"));
    }
    let mut out = Vec::with_capacity(target);
    while out.len() + kept.len() <= target {
        out.extend(kept.iter().cloned());
    }
    let mut extra = kept.clone();
    extra.shuffle(&mut rng);
    out.extend(extra.into_iter().take(target - out.len()));
    let ids = ds.texture_ids.iter().filter(|t| keep.contains(t.as_str())).cloned().collect();
    Ok(ds.with_samples(ids, out))
}
