//! Patient-specific pose regression network.
//!
//! Three convolutional blocks (conv, conv, ReLU) with 2x2 average pooling
//! after the first two, then fully connected layers 128-64-32 with ReLU and
//! a linear 6-unit output `[r_x, r_y, r_z, t_x, t_y, t_z]`.
//!
//! Training uses Adam with a per-epoch exponential learning-rate decay, on
//! inputs standardized per channel and targets standardized per dimension.
//! Mini-batch gradients are accumulated sample by sample in a fixed order,
//! so a run is bitwise reproducible for a given seed.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::dataset::CaseDataset;
use crate::error::{invalid, io_err, Error, Result};
use crate::geometry::Pose;
use crate::image::RgbImage;
use crate::nn::{avg_pool2, avg_pool2_backward, relu_backward_inplace, relu_inplace, Conv2d, Linear};

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const META_FILE: &str = "meta.json";
pub const META_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    /// Square input side in pixels; must be divisible by 4.
    pub input_size: usize,
    pub block_channels: [usize; 3],
    pub fc_sizes: [usize; 3],
    pub kernel_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            block_channels: [16, 32, 64],
            fc_sizes: [128, 64, 32],
            kernel_size: 3,
            epochs: 200,
            batch_size: 8,
            lr_start: 1e-3,
            lr_end: 1e-4,
            seed: 0,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size < 4 || self.input_size % 4 != 0 {
            return Err(invalid(format!(
                "input_size {} must be a positive multiple of 4 (two stride-2 poolings)",
                self.input_size
            )));
        }
        if self.block_channels.contains(&0) || self.fc_sizes.contains(&0) {
            return Err(invalid("channel and layer sizes must be >= 1"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(invalid("kernel_size must be odd"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return Err(invalid("learning rates need lr_start >= lr_end > 0"));
        }
        Ok(())
    }

    /// `lr_start * (lr_end / lr_start)^(epoch / (epochs - 1))`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || epoch == 0 {
            return self.lr_start;
        }
        if epoch >= self.epochs - 1 {
            return self.lr_end;
        }
        self.lr_start * (self.lr_end / self.lr_start).powf(epoch as f64 / (self.epochs - 1) as f64)
    }
}

/// `||t_gt - t_pred|| + ||r_gt - r_pred||` for `[r, t]` 6-vectors.
pub fn pose_loss_single(pred: &[f64; 6], gt: &[f64; 6]) -> f64 {
    pose_loss_grad(pred, gt).0
}

/// Loss and its gradient with respect to `pred`; the subgradient of a
/// norm at zero is taken as zero.
pub fn pose_loss_grad(pred: &[f64; 6], gt: &[f64; 6]) -> (f64, [f64; 6]) {
    let mut grad = [0.0; 6];
    let mut loss = 0.0;
    for part in [0..3, 3..6] {
        let d: Vec<f64> = part.clone().map(|i| pred[i] - gt[i]).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        loss += n;
        if n > 0.0 {
            for (k, i) in part.enumerate() {
                grad[i] = d[k] / n;
            }
        }
    }
    (loss, grad)
}

/// Batch mean of [`pose_loss_single`].
pub fn pose_loss(pred: &[[f64; 6]], gt: &[[f64; 6]]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(invalid("pose_loss needs equally sized, non-empty batches"));
    }
    if pred.iter().chain(gt).flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pose_loss input".into()));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| pose_loss_single(p, g)).sum::<f64>() / pred.len() as f64)
}

/// The network weights; immutable during inference.
#[derive(Debug, Clone)]
pub struct PoseNet {
    input_size: usize,
    convs: Vec<Conv2d<f32>>,
    fcs: Vec<Linear<f32>>,
}

struct Cache {
    cols: Vec<Vec<f32>>,
    /// Post-ReLU block outputs (pre-pool), one per block.
    block_out: Vec<Vec<f32>>,
    fc_in: Vec<Vec<f32>>,
    fc_out: Vec<Vec<f32>>,
}

impl PoseNet {
    pub fn build(cfg: &RegressorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut convs = Vec::new();
        let mut cin = 3;
        for &c in &cfg.block_channels {
            convs.push(Conv2d::new_he(&mut rng, cin, c, cfg.kernel_size));
            convs.push(Conv2d::new_he(&mut rng, c, c, cfg.kernel_size));
            cin = c;
        }
        let side = cfg.input_size / 4;
        let mut fan_in = cfg.block_channels[2] * side * side;
        let mut fcs = Vec::new();
        for &n in &cfg.fc_sizes {
            fcs.push(Linear::new_he(&mut rng, fan_in, n));
            fan_in = n;
        }
        fcs.push(Linear::new_he(&mut rng, fan_in, 6));
        Ok(Self {
            input_size: cfg.input_size,
            convs,
            fcs,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv2d::param_count).sum::<usize>() + self.fcs.iter().map(Linear::param_count).sum::<usize>()
    }

    fn forward_cached(&self, x: &[f32]) -> (Vec<f32>, Cache) {
        let mut cache = Cache {
            cols: Vec::with_capacity(6),
            block_out: Vec::with_capacity(3),
            fc_in: Vec::with_capacity(4),
            fc_out: Vec::with_capacity(4),
        };
        let mut side = self.input_size;
        let mut act = x.to_vec();
        for b in 0..3 {
            for conv in &self.convs[2 * b..2 * b + 2] {
                let mut col = Vec::new();
                act = conv.forward(&act, side, side, &mut col);
                cache.cols.push(col);
            }
            relu_inplace(&mut act);
            cache.block_out.push(act.clone());
            if b < 2 {
                let c = self.convs[2 * b + 1].cout;
                let (pooled, s, _) = avg_pool2(&act, c, side, side);
                act = pooled;
                side = s;
            }
        }
        let last = self.fcs.len() - 1;
        for (i, fc) in self.fcs.iter().enumerate() {
            cache.fc_in.push(act.clone());
            act = fc.forward(&act);
            if i < last {
                relu_inplace(&mut act);
            }
            cache.fc_out.push(act.clone());
        }
        (act, cache)
    }

    /// Raw (normalized-space) output for a standardized input tensor.
    pub fn forward(&self, x: &[f32]) -> [f32; 6] {
        let (out, _) = self.forward_cached(x);
        out.try_into().expect("six outputs")
    }

    fn backward(&self, cache: &Cache, dout: &[f32], grads: &mut Grads) {
        let last = self.fcs.len() - 1;
        let mut g = dout.to_vec();
        for i in (0..self.fcs.len()).rev() {
            if i < last {
                relu_backward_inplace(&cache.fc_out[i], &mut g);
            }
            let (dw, db) = grads.fc_mut(i);
            g = self.fcs[i].backward(&g, &cache.fc_in[i], dw, db, true).expect("dx requested");
        }
        let mut side = self.input_size / 4;
        for b in (0..3).rev() {
            if b < 2 {
                let c = self.convs[2 * b + 1].cout;
                g = avg_pool2_backward(&g, c, side * 2, side * 2);
                side *= 2;
            }
            relu_backward_inplace(&cache.block_out[b], &mut g);
            for k in (2 * b..2 * b + 2).rev() {
                let need_dx = k > 0;
                let (dw, db) = grads.conv_mut(k);
                let dx = self.convs[k].backward(&g, &cache.cols[k], side, side, Some((dw, db)), need_dx);
                if let Some(dx) = dx {
                    g = dx;
                }
            }
        }
    }

    fn tensors(&self) -> Vec<(String, &[f32], Vec<usize>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), c.weight.as_slice(), vec![c.cout, c.cin, c.kernel, c.kernel]));
            out.push((format!("conv{i}.bias"), c.bias.as_slice(), vec![c.cout]));
        }
        for (i, f) in self.fcs.iter().enumerate() {
            out.push((format!("fc{i}.weight"), f.weight.as_slice(), vec![f.fan_out, f.fan_in]));
            out.push((format!("fc{i}.bias"), f.bias.as_slice(), vec![f.fan_out]));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for f in &mut self.fcs {
            out.push(&mut f.weight);
            out.push(&mut f.bias);
        }
        out
    }
}

/// Parameter-shaped gradient buffers in `params_mut` order.
struct Grads {
    bufs: Vec<Vec<f32>>,
    n_convs: usize,
}

impl Grads {
    fn zeros_like(net: &mut PoseNet) -> Self {
        let n_convs = net.convs.len();
        Self {
            bufs: net.params_mut().iter().map(|p| vec![0.0; p.len()]).collect(),
            n_convs,
        }
    }

    fn zero(&mut self) {
        self.bufs.iter_mut().for_each(|b| b.fill(0.0));
    }

    fn pair(&mut self, i: usize) -> (&mut [f32], &mut [f32]) {
        let (a, b) = self.bufs.split_at_mut(i + 1);
        (&mut a[i], &mut b[0])
    }

    fn conv_mut(&mut self, k: usize) -> (&mut [f32], &mut [f32]) {
        self.pair(2 * k)
    }

    fn fc_mut(&mut self, k: usize) -> (&mut [f32], &mut [f32]) {
        self.pair(2 * (self.n_convs + k))
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(grads: &Grads) -> Self {
        Self {
            m: grads.bufs.iter().map(|b| vec![0.0; b.len()]).collect(),
            v: grads.bufs.iter().map(|b| vec![0.0; b.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: Vec<&mut Vec<f32>>, grads: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let (b1, b2, eps) = (Self::B1 as f32, Self::B2 as f32, (Self::EPS * c2.sqrt()) as f32);
        for (((p, g), m), v) in params.into_iter().zip(&grads.bufs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
    pub target_mean: [f64; 6],
    pub target_std: [f64; 6],
}

impl Normalization {
    fn validate(&self) -> Result<()> {
        let all = self.input_mean.iter().chain(&self.input_std).chain(&self.target_mean).chain(&self.target_std);
        if all.clone().any(|v| !v.is_finite()) || self.input_std.iter().chain(&self.target_std).any(|&s| s <= 0.0) {
            return Err(Error::NonFinite("normalization constants".into()));
        }
        Ok(())
    }

    fn fit(images: &[Vec<f32>], targets: &[[f64; 6]], hw: usize) -> Self {
        let mut input_mean = [0.0; 3];
        let mut input_std = [0.0; 3];
        for c in 0..3 {
            let (mut s, mut s2) = (0.0f64, 0.0f64);
            for img in images {
                for &v in &img[c * hw..(c + 1) * hw] {
                    s += f64::from(v);
                    s2 += f64::from(v) * f64::from(v);
                }
            }
            let n = (images.len() * hw) as f64;
            input_mean[c] = s / n;
            input_std[c] = (s2 / n - input_mean[c] * input_mean[c]).max(0.0).sqrt().max(1e-3);
        }
        let mut target_mean = [0.0; 6];
        let mut target_std = [0.0; 6];
        let n = targets.len() as f64;
        for d in 0..6 {
            target_mean[d] = targets.iter().map(|t| t[d]).sum::<f64>() / n;
            let var = targets.iter().map(|t| (t[d] - target_mean[d]).powi(2)).sum::<f64>() / n;
            target_std[d] = var.sqrt().max(1e-6);
        }
        Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    fn normalize_input(&self, raw: &mut [f32], hw: usize) {
        for c in 0..3 {
            let (m, s) = (self.input_mean[c] as f32, self.input_std[c] as f32);
            for v in &mut raw[c * hw..(c + 1) * hw] {
                *v = (*v - m) / s;
            }
        }
    }

    fn normalize_target(&self, t: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|d| (t[d] - self.target_mean[d]) / self.target_std[d])
    }

    fn denormalize_target(&self, t: &[f32; 6]) -> [f64; 6] {
        std::array::from_fn(|d| f64::from(t[d]) * self.target_std[d] + self.target_mean[d])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean pose loss in normalized target space.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: PoseNet,
    pub config: RegressorConfig,
    pub normalization: Normalization,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    config: RegressorConfig,
    normalization: Normalization,
    history: Vec<EpochRecord>,
    param_count: usize,
}

/// Resized raw planar `[0, 1]` tensor at the network resolution.
fn raw_input(image: &RgbImage, size: usize) -> Vec<f32> {
    if image.width() == size && image.height() == size {
        image.data().to_vec()
    } else {
        image.resized(size, size).into_data()
    }
}

fn pose_target(p: &Pose) -> [f64; 6] {
    p.to_array()
}

impl TrainedModel {
    /// Pose for an RGB image; resized to the network input when needed.
    pub fn predict(&self, image: &RgbImage) -> Result<Pose> {
        let size = self.config.input_size;
        let mut x = raw_input(image, size);
        self.normalization.normalize_input(&mut x, size * size);
        self.pose_from_output(&self.net.forward(&x))
    }

    /// Pose for a planar tensor with an explicit channel count.
    pub fn predict_planar(&self, data: &[f32], channels: usize, width: usize, height: usize) -> Result<Pose> {
        if channels != 3 {
            return Err(invalid(format!("expected a 3-channel RGB image, got {channels} channel(s)")));
        }
        let image = RgbImage::from_planar(width, height, data.to_vec())?;
        self.predict(&image)
    }

    fn pose_from_output(&self, out: &[f32; 6]) -> Result<Pose> {
        let v = self.normalization.denormalize_target(out);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Pose::canonical([v[0], v[1], v[2]].into(), [v[3], v[4], v[5]].into())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tensors = self.net.tensors();
        let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = tensors
            .iter()
            .map(|(n, data, shape)| (n.clone(), data.iter().flat_map(|v| v.to_le_bytes()).collect(), shape.clone()))
            .collect();
        let views: Vec<(String, TensorView<'_>)> = bytes
            .iter()
            .map(|(n, b, s)| Ok((n.clone(), TensorView::new(Dtype::F32, s.clone(), b).map_err(|e| invalid(e.to_string()))?)))
            .collect::<Result<_>>()?;
        let path = dir.join(WEIGHTS_FILE);
        safetensors::serialize_to_file(views, &None, &path).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let meta = Meta {
            format_version: META_FORMAT_VERSION,
            config: self.config.clone(),
            normalization: self.normalization.clone(),
            history: self.history.clone(),
            param_count: self.net.param_count(),
        };
        let mpath = dir.join(META_FILE);
        std::fs::write(&mpath, serde_json::to_string_pretty(&meta)?).map_err(io_err(&mpath))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (wpath, mpath) = (dir.join(WEIGHTS_FILE), dir.join(META_FILE));
        for p in [&wpath, &mpath] {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.clone()));
            }
        }
        let meta_text = std::fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| Error::Format {
            path: mpath.clone(),
            message: e.to_string(),
        })?;
        if meta.format_version != META_FORMAT_VERSION {
            return Err(Error::Format {
                path: mpath,
                message: format!("unsupported format_version {}", meta.format_version),
            });
        }
        meta.normalization.validate()?;
        let mut net = PoseNet::build(&meta.config)?;
        let raw = std::fs::read(&wpath).map_err(io_err(&wpath))?;
        let st = SafeTensors::deserialize(&raw).map_err(|e| Error::Format {
            path: wpath.clone(),
            message: e.to_string(),
        })?;
        let names: Vec<(String, usize)> = net.tensors().iter().map(|(n, d, _)| (n.clone(), d.len())).collect();
        let mut loaded: HashMap<String, Vec<f32>> = HashMap::new();
        for (name, len) in &names {
            let t = st.tensor(name).map_err(|e| Error::Format {
                path: wpath.clone(),
                message: format!("{name}: {e}"),
            })?;
            if t.dtype() != Dtype::F32 || t.data().len() != len * 4 {
                return Err(Error::Format {
                    path: wpath.clone(),
                    message: format!("{name}: expected {len} f32 values"),
                });
            }
            let vals = t.data().chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            loaded.insert(name.clone(), vals);
        }
        for ((name, _), p) in names.iter().zip(net.params_mut()) {
            *p = loaded.remove(name).expect("loaded above");
        }
        if net.param_count() != meta.param_count {
            return Err(Error::Format {
                path: mpath,
                message: "parameter count mismatch".into(),
            });
        }
        Ok(Self {
            net,
            config: meta.config,
            normalization: meta.normalization,
            history: meta.history,
        })
    }
}

/// Trains a fresh network on in-memory `(image, pose)` pairs.
pub fn train_pairs(train: &[(RgbImage, Pose)], val: &[(RgbImage, Pose)], cfg: &RegressorConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let size = cfg.input_size;
    let hw = size * size;
    let mut xs: Vec<Vec<f32>> = train.iter().map(|(img, _)| raw_input(img, size)).collect();
    let targets: Vec<[f64; 6]> = train.iter().map(|(_, p)| pose_target(p)).collect();
    let norm = Normalization::fit(&xs, &targets, hw);
    xs.iter_mut().for_each(|x| norm.normalize_input(x, hw));
    let ys: Vec<[f64; 6]> = targets.iter().map(|t| norm.normalize_target(t)).collect();
    let val_xs: Vec<Vec<f32>> = val
        .iter()
        .map(|(img, _)| {
            let mut x = raw_input(img, size);
            norm.normalize_input(&mut x, hw);
            x
        })
        .collect();
    let val_ys: Vec<[f64; 6]> = val.iter().map(|(_, p)| norm.normalize_target(&pose_target(p))).collect();

    let mut net = PoseNet::build(cfg)?;
    let mut grads = Grads::zeros_like(&mut net);
    let mut adam = Adam::new(&grads);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7EA1_5EED);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_id, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (out, cache) = net.forward_cached(&xs[i]);
                let pred: [f64; 6] = std::array::from_fn(|d| f64::from(out[d]));
                let (loss, g) = pose_loss_grad(&pred, &ys[i]);
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss in epoch {epoch}, batch {batch_id}")));
                }
                epoch_loss += loss;
                let dout: Vec<f32> = g.iter().map(|v| (v * scale) as f32).collect();
                net.backward(&cache, &dout, &mut grads);
            }
            if grads.bufs.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient in epoch {epoch}, batch {batch_id}")));
            }
            adam.step(net.params_mut(), &grads, lr);
        }
        let val_loss = (!val_xs.is_empty()).then(|| {
            val_xs
                .iter()
                .zip(&val_ys)
                .map(|(x, y)| {
                    let out = net.forward(x);
                    pose_loss_single(&std::array::from_fn(|d| f64::from(out[d])), y)
                })
                .sum::<f64>()
                / val_xs.len() as f64
        });
        let train_loss = epoch_loss / xs.len() as f64;
        log::debug!("epoch {epoch}: lr {lr:.2e} train {train_loss:.5} val {val_loss:?}");
        history.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            val_loss,
        });
    }
    Ok(TrainedModel {
        net,
        config: cfg.clone(),
        normalization: norm,
        history,
    })
}

pub fn load_pairs(ds: &CaseDataset) -> Result<Vec<(RgbImage, Pose)>> {
    ds.samples.iter().map(|s| Ok((ds.load_image(s)?, s.pose))).collect()
}

/// Trains on a case dataset, reporting validation loss on `val` if given.
pub fn train(train_ds: &CaseDataset, val_ds: Option<&CaseDataset>, cfg: &RegressorConfig) -> Result<TrainedModel> {
    let train_pairs_v = load_pairs(train_ds)?;
    let val_pairs = match val_ds {
        Some(v) => load_pairs(v)?,
        None => Vec::new(),
    };
    train_pairs(&train_pairs_v, &val_pairs, cfg)
}
