use std::sync::Arc;

use ea_core::geometry::CameraIntrinsics;
use ea_core::procedural::{dome_mesh, procedural_texture, DomeConfig};
use ea_core::render::rasterize_labels;
use ea_core::sampling::{sample_hemisphere_poses, PoseSamplingConfig};
use ea_core::synthesis::{AppearanceSynthesizer, GramLbfgsSynthesizer, SynthesisConfig, VggNet};
use ea_core::texture::class_means;

#[test]
fn rendered_label_converges_and_keeps_class_colours() {
    let mesh = dome_mesh(&DomeConfig::default()).unwrap();
    let intr = CameraIntrinsics::with_default_focal(128, 128).unwrap();
    let poses = sample_hemisphere_poses(&mesh, &intr, &PoseSamplingConfig { n_poses: 1, seed: 4, ..Default::default() }).unwrap();
    let (label, _) = rasterize_labels(&mesh, &intr, &poses[0]);
    let tex = procedural_texture("t", 128, 21).unwrap();
    let cfg = SynthesisConfig { extractor: "vgg19-tiny".into(), ..Default::default() };
    let synth = GramLbfgsSynthesizer::new(Arc::new(VggNet::tiny()), cfg).unwrap();
    let out = synth.synthesize(&label, &tex, 0).unwrap();
    let ratio = out.final_loss.unwrap() / out.initial_loss.unwrap();
    assert!(out.iterations <= 100);
    assert!(ratio <= 0.1, "loss ratio {ratio}");
    let got = class_means(&out.image, &label);
    let want = tex.class_means();
    for c in 0..3 {
        let (Some(g), Some(w)) = (got[c], want[c]) else { continue };
        let diff: f64 = (0..3).map(|ch| (g[ch] - w[ch]).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm <= 0.15, "class {c}: {g:?} vs {w:?}");
    }
}

#[test]
fn same_inputs_same_image() {
    let mesh = dome_mesh(&DomeConfig::default()).unwrap();
    let intr = CameraIntrinsics::with_default_focal(24, 24).unwrap();
    let poses = sample_hemisphere_poses(&mesh, &intr, &PoseSamplingConfig { n_poses: 1, seed: 8, ..Default::default() }).unwrap();
    let (label, _) = rasterize_labels(&mesh, &intr, &poses[0]);
    let tex = procedural_texture("t", 32, 2).unwrap();
    let cfg = SynthesisConfig { extractor: "vgg19-tiny".into(), max_iterations: 5, ..Default::default() };
    let a = GramLbfgsSynthesizer::new(Arc::new(VggNet::tiny()), cfg.clone()).unwrap().synthesize(&label, &tex, 3).unwrap();
    let b = GramLbfgsSynthesizer::new(Arc::new(VggNet::tiny()), cfg).unwrap().synthesize(&label, &tex, 3).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.loss_history, b.loss_history);
}
