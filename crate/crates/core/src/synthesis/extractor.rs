//! Frozen VGG-style feature extractors.
//!
//! Both registered extractors share the VGG-19 topology: five blocks of
//! 2, 2, 4, 4 and 4 same-padded 3x3 convolutions, each followed by ReLU,
//! with 2x2 pooling between blocks. Layer `convB_I` names the post-ReLU
//! activation of convolution `I` in block `B`. Pooling is average pooling,
//! which gives smoother gradients for image optimization than max pooling.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::SafeTensors;

use crate::error::{invalid, io_err, Error, Result};
use crate::nn::{avg_pool2, avg_pool2_backward, relu_backward_inplace, relu_inplace, Conv2d};

pub const VGG19_BLOCK_DEPTHS: [usize; 5] = [2, 2, 4, 4, 4];
pub const VGG19_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
pub const TINY_WIDTHS: [usize; 5] = [8, 16, 32, 48, 64];
pub const TINY_WEIGHT_SEED: u64 = 0x5EED_F00D;

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// File looked up inside the extractor cache directory.
pub const VGG19_WEIGHTS_FILE: &str = "vgg19.safetensors";

/// A `C x H x W` activation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Loss callback: receives the requested activations and returns the loss
/// together with its gradient with respect to each activation.
pub type LossFn<'a> = dyn FnMut(&[FeatureMap]) -> (f64, Vec<Vec<f64>>) + 'a;

pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn layer_names(&self) -> Vec<String>;

    fn layer_index(&self, name: &str) -> Option<usize> {
        self.layer_names().iter().position(|n| n == name)
    }

    /// Activations for `layers` (indices into [`Self::layer_names`]) of a
    /// planar RGB image in `[0, 1]`.
    fn features(&self, image: &[f64], height: usize, width: usize, layers: &[usize]) -> Vec<FeatureMap>;

    /// Evaluates `loss` on the activations and back-propagates its gradient
    /// to the input image.
    fn loss_and_input_grad(
        &self,
        image: &[f64],
        height: usize,
        width: usize,
        layers: &[usize],
        loss: &mut LossFn<'_>,
    ) -> (f64, Vec<f64>);
}

/// VGG-topology network with frozen weights.
pub struct VggNet {
    name: String,
    /// Flattened convolutions; `block_of[i]` gives the block of conv `i`.
    convs: Vec<Conv2d<f64>>,
    block_of: Vec<usize>,
    names: Vec<String>,
    mean: [f64; 3],
    std: [f64; 3],
}

struct ConvRecord {
    h: usize,
    w: usize,
    col: Vec<f64>,
    out: Vec<f64>,
    /// Input spatial size before the pool preceding this conv, if any.
    pooled_from: Option<(usize, usize, usize)>,
}

impl VggNet {
    fn from_convs(name: &str, convs: Vec<Conv2d<f64>>, mean: [f64; 3], std: [f64; 3]) -> Self {
        let mut block_of = Vec::new();
        let mut names = Vec::new();
        for (b, &depth) in VGG19_BLOCK_DEPTHS.iter().enumerate() {
            for i in 0..depth {
                block_of.push(b);
                names.push(format!("conv{}_{}", b + 1, i + 1));
            }
        }
        assert_eq!(convs.len(), names.len());
        Self {
            name: name.to_string(),
            convs,
            block_of,
            names,
            mean,
            std,
        }
    }

    /// Random He-initialized weights with the given per-block widths.
    pub fn random(name: &str, widths: [usize; 5], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::new();
        let mut cin = 3;
        for (b, &depth) in VGG19_BLOCK_DEPTHS.iter().enumerate() {
            for _ in 0..depth {
                let mut conv = Conv2d::new_he(&mut rng, cin, widths[b], 3);
                let env = centre_envelope(ENVELOPE_SIGMA);
                for (i, w) in conv.weight.iter_mut().enumerate() {
                    *w *= env[i % 9];
                }
                convs.push(conv);
                cin = widths[b];
            }
        }
        Self::from_convs(name, convs, IMAGENET_MEAN, IMAGENET_STD)
    }

    /// The small random-weight stand-in used for hermetic runs.
    pub fn tiny() -> Self {
        Self::random("vgg19-tiny", TINY_WIDTHS, TINY_WEIGHT_SEED)
    }

    /// Pretrained VGG-19 convolution weights from a safetensors file using
    /// torchvision's `features.N.{weight,bias}` naming.
    pub fn load_pretrained(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let fmt = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let st = SafeTensors::deserialize(&bytes).map_err(|e| fmt(e.to_string()))?;
        let torch_index = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34];
        let mut convs = Vec::new();
        let mut cin = 3;
        let mut flat = 0;
        for (b, &depth) in VGG19_BLOCK_DEPTHS.iter().enumerate() {
            for _ in 0..depth {
                let cout = VGG19_WIDTHS[b];
                let idx = torch_index[flat];
                let weight = read_f32_tensor(&st, &format!("features.{idx}.weight"), &[cout, cin, 3, 3]).map_err(fmt)?;
                let bias = read_f32_tensor(&st, &format!("features.{idx}.bias"), &[cout]).map_err(fmt)?;
                convs.push(Conv2d {
                    cin,
                    cout,
                    kernel: 3,
                    weight,
                    bias,
                });
                cin = cout;
                flat += 1;
            }
        }
        Ok(Self::from_convs("vgg19", convs, IMAGENET_MEAN, IMAGENET_STD))
    }

    fn normalize(&self, image: &[f64], hw: usize) -> Vec<f64> {
        let mut x = image.to_vec();
        for c in 0..3 {
            for v in &mut x[c * hw..(c + 1) * hw] {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        x
    }

    fn run(&self, image: &[f64], height: usize, width: usize, last: usize, keep_cols: bool) -> Vec<ConvRecord> {
        assert_eq!(image.len(), 3 * height * width, "planar RGB expected");
        let mut x = self.normalize(image, height * width);
        let (mut h, mut w) = (height, width);
        let mut records: Vec<ConvRecord> = Vec::with_capacity(last + 1);
        for i in 0..=last {
            let mut pooled_from = None;
            if i > 0 && self.block_of[i] != self.block_of[i - 1] {
                let c = self.convs[i - 1].cout;
                let (p, ho, wo) = avg_pool2(&x, c, h, w);
                pooled_from = Some((c, h, w));
                x = p;
                h = ho;
                w = wo;
            }
            let conv = &self.convs[i];
            let mut col = Vec::new();
            let mut out = conv.forward(&x, h, w, &mut col);
            relu_inplace(&mut out);
            x = out.clone();
            records.push(ConvRecord {
                h,
                w,
                col: if keep_cols { col } else { Vec::new() },
                out,
                pooled_from,
            });
        }
        records
    }

    fn to_map(&self, i: usize, r: &ConvRecord) -> FeatureMap {
        FeatureMap {
            channels: self.convs[i].cout,
            height: r.h,
            width: r.w,
            data: r.out.clone(),
        }
    }
}

fn read_f32_tensor(st: &SafeTensors<'_>, key: &str, shape: &[usize]) -> std::result::Result<Vec<f64>, String> {
    let view = st.tensor(key).map_err(|e| format!("{key}: {e}"))?;
    if view.shape() != shape {
        return Err(format!("{key}: expected shape {shape:?}, found {:?}", view.shape()));
    }
    if view.dtype() != safetensors::Dtype::F32 {
        return Err(format!("{key}: expected F32, found {:?}", view.dtype()));
    }
    Ok(view
        .data()
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect())
}

impl FeatureExtractor for VggNet {
    fn name(&self) -> &str {
        &self.name
    }

    fn layer_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn layer_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn features(&self, image: &[f64], height: usize, width: usize, layers: &[usize]) -> Vec<FeatureMap> {
        let Some(&last) = layers.iter().max() else {
            return Vec::new();
        };
        let records = self.run(image, height, width, last, false);
        layers.iter().map(|&l| self.to_map(l, &records[l])).collect()
    }

    fn loss_and_input_grad(
        &self,
        image: &[f64],
        height: usize,
        width: usize,
        layers: &[usize],
        loss: &mut LossFn<'_>,
    ) -> (f64, Vec<f64>) {
        let Some(&last) = layers.iter().max() else {
            let (l, _) = loss(&[]);
            return (l, vec![0.0; image.len()]);
        };
        let records = self.run(image, height, width, last, true);
        let maps: Vec<FeatureMap> = layers.iter().map(|&l| self.to_map(l, &records[l])).collect();
        let (value, grads) = loss(&maps);
        drop(maps);

        let mut upstream: Option<Vec<f64>> = None;
        for i in (0..=last).rev() {
            let r = &records[i];
            let mut g = upstream.take().unwrap_or_else(|| vec![0.0; r.out.len()]);
            for (k, &l) in layers.iter().enumerate() {
                if l == i {
                    for (a, b) in g.iter_mut().zip(&grads[k]) {
                        *a += b;
                    }
                }
            }
            relu_backward_inplace(&r.out, &mut g);
            let mut dx = self.convs[i]
                .backward(&g, &r.col, r.h, r.w, None, true)
                .expect("input gradient requested");
            if let Some((c, ph, pw)) = r.pooled_from {
                dx = avg_pool2_backward(&dx, c, ph, pw);
            }
            upstream = Some(dx);
        }
        let mut dimg = upstream.unwrap_or_default();
        let hw = height * width;
        for c in 0..3 {
            for v in &mut dimg[c * hw..(c + 1) * hw] {
                *v /= self.std[c];
            }
        }
        (value, dimg)
    }
}

const ENVELOPE_SIGMA: f64 = 0.5;

fn centre_envelope(sigma: f64) -> [f64; 9] {
    let mut e = [0.0; 9];
    for (i, v) in e.iter_mut().enumerate() {
        let (dy, dx) = ((i / 3) as f64 - 1.0, (i % 3) as f64 - 1.0);
        *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
    }
    let norm = (e.iter().map(|v| v * v).sum::<f64>() / 9.0).sqrt();
    e.map(|v| v / norm)
}

/// Location of the pretrained weights: `$EP_CACHE_DIR`, else
/// `$HOME/.cache/expected-appearance`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("EP_CACHE_DIR") {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("expected-appearance")
}

/// Resolves layer names against an extractor.
pub fn resolve_layers(extractor: &dyn FeatureExtractor, names: &[String]) -> Result<Vec<usize>> {
    if names.is_empty() {
        return Err(invalid("layer_set must not be empty"));
    }
    names
        .iter()
        .map(|n| {
            extractor.layer_index(n).ok_or_else(|| {
                invalid(format!(
                    "extractor `{}` has no layer `{n}` (layers: {})",
                    extractor.name(),
                    extractor.layer_names().join(", ")
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn layer_names_follow_vgg19() {
        let net = VggNet::tiny();
        let names = net.layer_names();
        assert_eq!(names.len(), 16);
        assert_eq!(names[0], "conv1_1");
        assert_eq!(names[4], "conv3_1");
        assert_eq!(names[15], "conv5_4");
    }

    #[test]
    fn feature_resolutions_halve_per_block() {
        let net = VggNet::tiny();
        let img = vec![0.5; 3 * 32 * 32];
        let idx = resolve_layers(&net, &["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"].map(String::from)).unwrap();
        let maps = net.features(&img, 32, 32, &idx);
        let sizes: Vec<_> = maps.iter().map(|m| (m.channels, m.height)).collect();
        assert_eq!(sizes, vec![(8, 32), (16, 16), (32, 8), (48, 4), (64, 2)]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = VggNet::random("t", [3, 4, 4, 4, 4], 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, w) = (8, 8);
        let img: Vec<f64> = (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        let layers = vec![1, 2, 4];
        let weights: Vec<Vec<f64>> = net
            .features(&img, h, w, &layers)
            .iter()
            .map(|m| (0..m.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut lin = |maps: &[FeatureMap]| {
            let v = maps
                .iter()
                .zip(&weights)
                .map(|(m, wv)| m.data.iter().zip(wv).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            (v, weights.clone())
        };
        let (_, g) = net.loss_and_input_grad(&img, h, w, &layers, &mut lin);
        let eps = 1e-6;
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..img.len() {
            let (mut p, mut m) = (img.clone(), img.clone());
            p[i] += eps;
            m[i] -= eps;
            let fp = net.loss_and_input_grad(&p, h, w, &layers, &mut lin).0;
            let fm = net.loss_and_input_grad(&m, h, w, &layers, &mut lin).0;
            let fd = (fp - fm) / (2.0 * eps);
            err += (fd - g[i]).powi(2);
            norm += fd * fd;
        }
        assert!(err.sqrt() / norm.sqrt() < 1e-5, "relative error {}", err.sqrt() / norm.sqrt());
    }

    #[test]
    fn missing_pretrained_weights_reported() {
        let err = VggNet::load_pretrained(Path::new("/nonexistent/vgg19.safetensors")).err().unwrap();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }

    #[test]
    fn pretrained_loader_reads_torchvision_layout() {
        // Write a fake checkpoint with the real shapes but constant values.
        let dir = tempfile::tempdir().unwrap();
        let torch_index = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34];
        let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
        let mut cin = 3;
        let mut flat = 0;
        for (b, &depth) in VGG19_BLOCK_DEPTHS.iter().enumerate() {
            for _ in 0..depth {
                let cout = VGG19_WIDTHS[b];
                let idx = torch_index[flat];
                let n = cout * cin * 9;
                let w: Vec<u8> = (0..n).flat_map(|i| ((i % 7) as f32 * 0.01).to_le_bytes()).collect();
                tensors.push((format!("features.{idx}.weight"), vec![cout, cin, 3, 3], w));
                tensors.push((format!("features.{idx}.bias"), vec![cout], vec![0u8; 4 * cout]));
                cin = cout;
                flat += 1;
            }
        }
        let views: Vec<(String, safetensors::tensor::TensorView<'_>)> = tensors
            .iter()
            .map(|(k, s, d)| (k.clone(), safetensors::tensor::TensorView::new(safetensors::Dtype::F32, s.clone(), d).unwrap()))
            .collect();
        let path = dir.path().join(VGG19_WEIGHTS_FILE);
        safetensors::serialize_to_file(views, &None, &path).unwrap();
        let net = VggNet::load_pretrained(&path).unwrap();
        assert_eq!(net.convs[2].cin, 64);
        assert_eq!(net.convs[2].weight[1], 0.01f32 as f64);
    }
}
