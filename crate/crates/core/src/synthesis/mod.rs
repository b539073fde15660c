//! Expected-appearance synthesis: per-class Gram-matrix texture transfer
//! onto a label image, optimized with L-BFGS.
//!
//! For every configured layer `l` and class `c`, the candidate's Gram
//! matrix over the pixels of class `c` (label image mask, downsampled to the
//! layer resolution) is matched to the exemplar's Gram matrix over its own
//! class-`c` pixels. Each masked Gram is normalized by its mask pixel count,
//! and the loss is the squared Frobenius distance summed over layers and
//! classes. A class with no pixels on either side contributes nothing.

pub mod extractor;
pub mod lbfgs;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{LabelImage, RgbImage, NUM_CLASSES};
use crate::nn::Real;
use crate::registry::Registry;
use crate::texture::TextureExemplar;

pub use extractor::{FeatureExtractor, FeatureMap, VggNet};
pub use lbfgs::{LbfgsOptions, LbfgsReport, StopReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Uniform noise in `[0, 1]`.
    Noise,
    /// Exemplar class-mean colours plus Gaussian noise.
    #[default]
    ClassMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Registered synthesizer name.
    pub method: String,
    /// Registered feature extractor name.
    pub extractor: String,
    pub layer_set: Vec<String>,
    pub max_iterations: usize,
    /// Relative loss decrease below which optimization stops.
    pub convergence_tol: f64,
    pub init_mode: InitMode,
    /// Standard deviation of the class-mean initialization noise.
    pub init_noise: f64,
    pub history_size: usize,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            method: "gram-lbfgs".into(),
            extractor: "vgg19".into(),
            layer_set: ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"]
                .map(String::from)
                .to_vec(),
            max_iterations: 100,
            convergence_tol: 1e-5,
            init_mode: InitMode::ClassMean,
            init_noise: 0.05,
            history_size: 10,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_set.is_empty() {
            return Err(invalid("layer_set must not be empty"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be >= 1"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(invalid("convergence_tol must be >= 0"));
        }
        if !(self.init_noise >= 0.0) {
            return Err(invalid("init_noise must be >= 0"));
        }
        if self.history_size == 0 {
            return Err(invalid("history_size must be >= 1"));
        }
        Ok(())
    }
}

/// `sum_p mask(p) F(p) F(p)^T / sum_p mask(p)`; zero when the mask is empty.
pub fn masked_gram(features: &FeatureMap, mask: &[bool]) -> Vec<f64> {
    let c = features.channels;
    let hw = features.height * features.width;
    assert_eq!(mask.len(), hw, "mask must match the feature resolution");
    let gathered = gather_masked(&features.data, c, hw, mask);
    let n = gathered.len() / c.max(1);
    let mut g = vec![0.0; c * c];
    if n == 0 {
        return g;
    }
    f64::gemm(c, n, c, &gathered, false, &gathered, true, 0.0, &mut g);
    let inv = 1.0 / n as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    g
}

fn gather_masked(data: &[f64], c: usize, hw: usize, mask: &[bool]) -> Vec<f64> {
    let idx: Vec<usize> = (0..hw).filter(|&p| mask[p]).collect();
    let mut out = Vec::with_capacity(c * idx.len());
    for ch in 0..c {
        let plane = &data[ch * hw..(ch + 1) * hw];
        out.extend(idx.iter().map(|&p| plane[p]));
    }
    out
}

/// Per-class binary masks of `labels` at `height x width` (nearest
/// neighbour, then binarized).
pub fn class_masks(labels: &LabelImage, height: usize, width: usize) -> [Vec<bool>; NUM_CLASSES] {
    let small = labels.resized_nearest(width, height);
    std::array::from_fn(|c| small.labels().iter().map(|&l| usize::from(l) == c).collect())
}

fn to_planar_f64(img: &RgbImage) -> Vec<f64> {
    img.data().iter().map(|&v| f64::from(v)).collect()
}

/// Exemplar Gram matrices per configured layer and class.
#[derive(Debug, Clone)]
pub struct TextureTargets {
    pub layers: Vec<usize>,
    pub grams: Vec<[Option<Vec<f64>>; NUM_CLASSES]>,
}

impl TextureTargets {
    pub fn compute(extractor: &dyn FeatureExtractor, tex: &TextureExemplar, layers: &[usize]) -> Self {
        let (h, w) = (tex.image.height(), tex.image.width());
        let maps = extractor.features(&to_planar_f64(&tex.image), h, w, layers);
        let grams = maps
            .iter()
            .map(|m| {
                let masks = class_masks(&tex.class_map, m.height, m.width);
                std::array::from_fn(|c| masks[c].iter().any(|&b| b).then(|| masked_gram(m, &masks[c])))
            })
            .collect();
        Self {
            layers: layers.to_vec(),
            grams,
        }
    }
}

/// Loss and gradient with respect to the candidate's activations.
fn gram_loss(maps: &[FeatureMap], label: &LabelImage, targets: &TextureTargets) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(maps.len());
    for (m, target) in maps.iter().zip(&targets.grams) {
        let c = m.channels;
        let hw = m.height * m.width;
        let masks = class_masks(label, m.height, m.width);
        let mut grad = vec![0.0; m.data.len()];
        for class in 0..NUM_CLASSES {
            let Some(tg) = &target[class] else { continue };
            let idx: Vec<usize> = (0..hw).filter(|&p| masks[class][p]).collect();
            if idx.is_empty() {
                continue;
            }
            let n = idx.len();
            let fm = gather_masked(&m.data, c, hw, &masks[class]);
            let mut g = vec![0.0; c * c];
            f64::gemm(c, n, c, &fm, false, &fm, true, 0.0, &mut g);
            let inv = 1.0 / n as f64;
            let mut diff = vec![0.0; c * c];
            for ((d, gi), ti) in diff.iter_mut().zip(&g).zip(tg) {
                *d = gi * inv - ti;
                loss += *d * *d;
            }
            // dL/dFm = 4/n * D Fm  (D symmetric)
            let mut dfm = vec![0.0; c * n];
            f64::gemm(c, c, n, &diff, false, &fm, false, 0.0, &mut dfm);
            let scale = 4.0 * inv;
            for ch in 0..c {
                let src = &dfm[ch * n..(ch + 1) * n];
                let dst = &mut grad[ch * hw..(ch + 1) * hw];
                for (k, &p) in idx.iter().enumerate() {
                    dst[p] += scale * src[k];
                }
            }
        }
        grads.push(grad);
    }
    (loss, grads)
}

/// Masked Gram loss of a planar candidate image and its input gradient.
pub fn synthesis_loss_planar(
    extractor: &dyn FeatureExtractor,
    candidate: &[f64],
    height: usize,
    width: usize,
    label: &LabelImage,
    targets: &TextureTargets,
) -> (f64, Vec<f64>) {
    let mut f = |maps: &[FeatureMap]| gram_loss(maps, label, targets);
    extractor.loss_and_input_grad(candidate, height, width, &targets.layers, &mut f)
}

/// Loss of `candidate` against exemplar `tex` under `label`, with the
/// gradient in planar layout (`3 x H x W`).
pub fn synthesis_loss(
    extractor: &dyn FeatureExtractor,
    candidate: &RgbImage,
    label: &LabelImage,
    tex: &TextureExemplar,
    layer_set: &[String],
) -> Result<(f64, Vec<f64>)> {
    if candidate.width() != label.width() || candidate.height() != label.height() {
        return Err(invalid("candidate and label image sizes differ"));
    }
    let layers = extractor::resolve_layers(extractor, layer_set)?;
    let targets = TextureTargets::compute(extractor, tex, &layers);
    Ok(synthesis_loss_planar(
        extractor,
        &to_planar_f64(candidate),
        candidate.height(),
        candidate.width(),
        label,
        &targets,
    ))
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub image: RgbImage,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub iterations: usize,
    pub loss_history: Vec<f64>,
    pub stop: Option<StopReason>,
}

/// One way of producing an appearance image for a label map.
pub trait AppearanceSynthesizer: Send + Sync {
    fn name(&self) -> &str;

    fn synthesize(&self, label: &LabelImage, tex: &TextureExemplar, seed: u64) -> Result<SynthesisOutcome>;
}

/// Class-mean colours (plus optional noise) painted through the label map.
pub fn class_mean_image(label: &LabelImage, tex: &TextureExemplar, noise: f64, seed: u64) -> RgbImage {
    let means = tex.class_means();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite std");
    let (w, h) = (label.width(), label.height());
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mean = means[usize::from(label.get(x, y))].unwrap_or([0.5; 3]);
            for (c, &m) in mean.iter().enumerate() {
                let n = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                img.set(c, x, y, (m + n) as f32);
            }
        }
    }
    img
}

fn initial_image(label: &LabelImage, tex: &TextureExemplar, cfg: &SynthesisConfig, seed: u64) -> RgbImage {
    match cfg.init_mode {
        InitMode::ClassMean => class_mean_image(label, tex, cfg.init_noise, seed),
        InitMode::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..3 * label.width() * label.height()).map(|_| rng.gen::<f32>()).collect();
            RgbImage::from_planar(label.width(), label.height(), data).expect("sized")
        }
    }
}

/// Masked-Gram neural image analogy minimized with L-BFGS.
pub struct GramLbfgsSynthesizer {
    extractor: Arc<dyn FeatureExtractor>,
    cfg: SynthesisConfig,
    layers: Vec<usize>,
    targets: Mutex<HashMap<String, Arc<TextureTargets>>>,
}

impl GramLbfgsSynthesizer {
    pub fn new(extractor: Arc<dyn FeatureExtractor>, cfg: SynthesisConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = extractor::resolve_layers(extractor.as_ref(), &cfg.layer_set)?;
        Ok(Self {
            extractor,
            cfg,
            layers,
            targets: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SynthesisConfig {
        &self.cfg
    }

    pub fn extractor(&self) -> &dyn FeatureExtractor {
        self.extractor.as_ref()
    }

    fn targets_for(&self, tex: &TextureExemplar) -> Arc<TextureTargets> {
        let key = tex.content_hash();
        if let Some(t) = self.targets.lock().expect("cache lock").get(&key) {
            return Arc::clone(t);
        }
        let t = Arc::new(TextureTargets::compute(self.extractor.as_ref(), tex, &self.layers));
        self.targets.lock().expect("cache lock").insert(key, Arc::clone(&t));
        t
    }

    /// Optimizes from an explicit starting image.
    pub fn synthesize_from(&self, label: &LabelImage, tex: &TextureExemplar, init: &RgbImage) -> Result<SynthesisOutcome> {
        if init.width() != label.width() || init.height() != label.height() {
            return Err(invalid("initial image and label sizes differ"));
        }
        let targets = self.targets_for(tex);
        let (h, w) = (label.height(), label.width());
        let opts = LbfgsOptions {
            max_iterations: self.cfg.max_iterations,
            rel_tol: self.cfg.convergence_tol,
            history: self.cfg.history_size,
            ..Default::default()
        };
        let report = lbfgs::minimize(
            to_planar_f64(init),
            |x| synthesis_loss_planar(self.extractor.as_ref(), x, h, w, label, &targets),
            &opts,
        );
        if report.reason == StopReason::NonFinite {
            return Err(Error::NonFinite(format!(
                "synthesis loss for texture `{}` after {} iteration(s), last finite loss {:?}",
                tex.id,
                report.iterations,
                report.loss_history.iter().rev().find(|v| v.is_finite())
            )));
        }
        let data: Vec<f32> = report.x.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
        let image = RgbImage::from_planar(w, h, data)?;
        Ok(SynthesisOutcome {
            image,
            initial_loss: report.loss_history.first().copied(),
            final_loss: Some(report.final_loss()),
            iterations: report.iterations,
            loss_history: report.loss_history,
            stop: Some(report.reason),
        })
    }
}

impl AppearanceSynthesizer for GramLbfgsSynthesizer {
    fn name(&self) -> &str {
        "gram-lbfgs"
    }

    fn synthesize(&self, label: &LabelImage, tex: &TextureExemplar, seed: u64) -> Result<SynthesisOutcome> {
        let init = initial_image(label, tex, &self.cfg, seed);
        self.synthesize_from(label, tex, &init)
    }
}

/// Flat per-class colours with noise; a fast baseline without optimization.
pub struct ClassMeanSynthesizer {
    noise: f64,
}

impl ClassMeanSynthesizer {
    pub fn new(noise: f64) -> Self {
        Self { noise }
    }
}

impl AppearanceSynthesizer for ClassMeanSynthesizer {
    fn name(&self) -> &str {
        "class-mean"
    }

    fn synthesize(&self, label: &LabelImage, tex: &TextureExemplar, seed: u64) -> Result<SynthesisOutcome> {
        let mut image = class_mean_image(label, tex, self.noise, seed);
        image.clamp01();
        Ok(SynthesisOutcome {
            image,
            initial_loss: None,
            final_loss: None,
            iterations: 0,
            loss_history: Vec::new(),
            stop: None,
        })
    }
}

pub struct ExtractorArgs {
    pub cache_dir: PathBuf,
}

pub struct SynthesizerArgs {
    pub config: SynthesisConfig,
    pub cache_dir: PathBuf,
}

pub fn extractor_registry() -> Registry<dyn FeatureExtractor, ExtractorArgs> {
    let mut r: Registry<dyn FeatureExtractor, ExtractorArgs> = Registry::new("feature extractor");
    r.register("vgg19", "pretrained VGG-19 convolutions loaded from the extractor cache", |a| {
        let path = a.cache_dir.join(extractor::VGG19_WEIGHTS_FILE);
        Ok(Box::new(VggNet::load_pretrained(&path)?))
    });
    r.register("vgg19-tiny", "VGG-19 topology with narrow, fixed random weights", |_| {
        Ok(Box::new(VggNet::tiny()))
    });
    r
}

pub fn synthesizer_registry() -> Registry<dyn AppearanceSynthesizer, SynthesizerArgs> {
    let mut r: Registry<dyn AppearanceSynthesizer, SynthesizerArgs> = Registry::new("synthesizer");
    r.register("gram-lbfgs", "per-class Gram-matrix texture transfer with L-BFGS", |a| {
        let extractor: Arc<dyn FeatureExtractor> = Arc::from(extractor_registry().create(
            &a.config.extractor,
            &ExtractorArgs {
                cache_dir: a.cache_dir.clone(),
            },
        )?);
        Ok(Box::new(GramLbfgsSynthesizer::new(extractor, a.config.clone())?))
    });
    r.register("class-mean", "exemplar class-mean colours with Gaussian noise", |a| {
        Ok(Box::new(ClassMeanSynthesizer::new(a.config.init_noise)))
    });
    r
}

/// Builds the configured synthesizer and runs it once.
pub fn synthesize_appearance(label: &LabelImage, tex: &TextureExemplar, cfg: &SynthesisConfig) -> Result<SynthesisOutcome> {
    cfg.validate()?;
    let synth = synthesizer_registry().create(
        &cfg.method,
        &SynthesizerArgs {
            config: cfg.clone(),
            cache_dir: extractor::default_cache_dir(),
        },
    )?;
    synth.synthesize(label, tex, cfg.seed)
}
