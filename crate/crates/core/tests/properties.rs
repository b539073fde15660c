use proptest::prelude::*;

use ea_core::dataset::{AppearanceSample, CaseDataset};
use ea_core::eval::{accuracy_threshold_curve, EvalRecord, EvalResult, CURVE_MAX_MM, CURVE_STEP_MM};
use ea_core::geometry::{add_metric, project_points, rodrigues_to_matrix, CameraIntrinsics, Pose, Vec3};
use ea_core::image::{LabelImage, RgbImage};
use ea_core::mesh::SurfaceMesh;
use ea_core::procedural::{dome_mesh, DomeConfig};
use ea_core::regressor::{pose_loss_grad, pose_loss_single};
use ea_core::render::{rasterize_labels, render_overlay, OverlayMode};
use ea_core::sampling::{sample_hemisphere_poses, PoseSamplingConfig};
use ea_core::synthesis::extractor::FeatureMap;
use ea_core::synthesis::masked_gram;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rot_vec() -> impl Strategy<Value = Vec3> {
    vec3(1.7).prop_filter("inside the principal ball", |v| v.norm() < 3.0)
}

fn pose() -> impl Strategy<Value = Pose> {
    (rot_vec(), vec3(50.0)).prop_map(|(r, t)| Pose::new(r, t).unwrap())
}

fn dome() -> SurfaceMesh {
    dome_mesh(&DomeConfig { rings: 8, segments: 24, ..Default::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rodrigues_gives_rotations(r in rot_vec()) {
        let m = rodrigues_to_matrix(&r);
        prop_assert!((m.transpose() * m - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn add_is_symmetric_and_left_invariant(a in pose(), b in pose(), g in pose(), pts in prop::collection::vec(vec3(20.0), 1..30)) {
        let ab = add_metric(&pts, &a, &b).unwrap();
        prop_assert!((ab - add_metric(&pts, &b, &a).unwrap()).abs() < 1e-9);
        let ga = g.compose(&a).unwrap();
        let gb = g.compose(&b).unwrap();
        prop_assert!((ab - add_metric(&pts, &ga, &gb).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn add_of_pure_translation_is_its_norm(p in pose(), d in vec3(10.0), pts in prop::collection::vec(vec3(20.0), 1..30)) {
        let q = Pose::new(*p.r_vec(), p.translation() + d).unwrap();
        prop_assert_eq!(add_metric(&pts, &p, &q).unwrap(), (q.translation() - p.translation()).norm());
    }

    #[test]
    fn projection_matches_homogeneous_product(r in rot_vec(), pts in prop::collection::vec(vec3(10.0), 1..50)) {
        let pose = Pose::new(r, Vec3::new(0.0, 0.0, 100.0)).unwrap();
        let intr = CameraIntrinsics::new(300.0, 310.0, 64.0, 60.0, 128, 120).unwrap();
        let proj = project_points(&intr, &pose, &pts).unwrap();
        let mut rt = nalgebra::Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation());
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(pose.translation());
        let p = intr.matrix() * rt;
        for (x, px) in pts.iter().zip(&proj.pixels) {
            let h = p * nalgebra::Vector4::new(x.x, x.y, x.z, 1.0);
            prop_assert!((h.x / h.z - px.x).abs() < 1e-9 && (h.y / h.z - px.y).abs() < 1e-9);
        }
    }

    #[test]
    fn pose_loss_is_nonnegative_and_zero_only_at_gt(p in prop::array::uniform6(-5.0..5.0f64), g in prop::array::uniform6(-5.0..5.0f64)) {
        let l = pose_loss_single(&p, &g);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, p == g);
        prop_assert_eq!(pose_loss_single(&g, &g), 0.0);
    }

    #[test]
    fn pose_loss_gradient_matches_differences(p in prop::array::uniform6(-5.0..5.0f64), g in prop::array::uniform6(-5.0..5.0f64)) {
        let dr = (0..3).map(|i| (p[i] - g[i]).powi(2)).sum::<f64>().sqrt();
        let dt = (3..6).map(|i| (p[i] - g[i]).powi(2)).sum::<f64>().sqrt();
        prop_assume!(dr > 1e-2 && dt > 1e-2);
        let (_, grad) = pose_loss_grad(&p, &g);
        for i in 0..6 {
            let h = 1e-6;
            let (mut a, mut b) = (p, p);
            a[i] += h;
            b[i] -= h;
            let fd = (pose_loss_single(&a, &g) - pose_loss_single(&b, &g)) / (2.0 * h);
            prop_assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-6) + 1e-7, "{} vs {}", fd, grad[i]);
        }
    }

    #[test]
    fn masked_gram_is_symmetric_psd(c in 1usize..6, data in prop::collection::vec(-2.0..2.0f64, 6 * 25), mask in prop::collection::vec(any::<bool>(), 25), v in prop::collection::vec(-1.0..1.0f64, 6)) {
        let f = FeatureMap { channels: c, height: 5, width: 5, data: data[..c * 25].to_vec() };
        let g = masked_gram(&f, &mask);
        for i in 0..c {
            for j in 0..c {
                prop_assert!((g[i * c + j] - g[j * c + i]).abs() < 1e-12);
            }
        }
        let q: f64 = (0..c).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| v[i] * g[i * c + j] * v[j]).sum();
        prop_assert!(q >= -1e-9);
    }

    #[test]
    fn curve_is_monotone_and_saturates(errs in prop::collection::vec((0.0..19.0f64, 0.0..19.0f64), 1..40)) {
        let records = errs.iter().enumerate().map(|(i, &(t, r))| EvalRecord {
            id: i.to_string(), add_mm: t, translation_err_mm: t, rotation_err_deg: r,
            within_3mm3deg: t <= 3.0 && r <= 3.0, gt: [0.0; 6], pred: [0.0; 6],
        }).collect::<Vec<_>>();
        let result = EvalResult::from_records(records.clone()).unwrap();
        let curve = accuracy_threshold_curve(&result, CURVE_MAX_MM, CURVE_STEP_MM).unwrap();
        prop_assert_eq!(curve.len(), 41);
        for w in curve.windows(2) {
            prop_assert!(w[1].accuracy >= w[0].accuracy);
            prop_assert!((w[1].threshold - w[0].threshold - 0.5).abs() < 1e-12);
        }
        let worst = errs.iter().map(|&(t, r)| t.max(r)).fold(0.0, f64::max);
        for p in curve.iter().filter(|p| p.threshold > worst) {
            prop_assert_eq!(p.accuracy, 100.0);
        }
        let mut shuffled = records;
        shuffled.reverse();
        let again = EvalResult::from_records(shuffled).unwrap();
        prop_assert!((again.summary.mean_add_mm - result.summary.mean_add_mm).abs() < 1e-9);
        prop_assert_eq!(again.summary.accuracy_3mm3deg, result.summary.accuracy_3mm3deg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampled_poses_keep_the_mesh_in_view(seed in any::<u64>()) {
        let mesh = dome();
        let intr = CameraIntrinsics::with_default_focal(64, 48).unwrap();
        let poses = sample_hemisphere_poses(&mesh, &intr, &PoseSamplingConfig { n_poses: 5, seed, ..Default::default() }).unwrap();
        for p in &poses {
            let proj = project_points(&intr, p, mesh.vertices()).unwrap();
            prop_assert!(proj.depths.iter().all(|&d| d > 0.0));
            prop_assert!(proj.pixels.iter().all(|px| intr.contains(px)));
        }
    }

    #[test]
    fn labels_ignore_face_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mesh = dome();
        let intr = CameraIntrinsics::with_default_focal(48, 48).unwrap();
        let pose = sample_hemisphere_poses(&mesh, &intr, &PoseSamplingConfig { n_poses: 1, seed, ..Default::default() }).unwrap()[0];
        let mut order: Vec<usize> = (0..mesh.faces().len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled = SurfaceMesh::new(
            mesh.vertices().to_vec(),
            order.iter().map(|&i| mesh.faces()[i]).collect(),
            order.iter().map(|&i| mesh.face_classes()[i]).collect(),
        ).unwrap();
        let (a, _) = rasterize_labels(&mesh, &intr, &pose);
        let (b, _) = rasterize_labels(&shuffled, &intr, &pose);
        let differ = a.labels().iter().zip(b.labels()).filter(|(x, y)| x != y).count();
        prop_assert!(differ == 0, "{} pixels differ", differ);
        let covered = |l: &LabelImage| l.labels().iter().map(|&c| c != 0).collect::<Vec<_>>();
        prop_assert_eq!(covered(&a), covered(&b));
    }

    #[test]
    fn covered_region_is_four_connected(seed in any::<u64>()) {
        let mesh = dome();
        let intr = CameraIntrinsics::with_default_focal(48, 48).unwrap();
        let pose = sample_hemisphere_poses(&mesh, &intr, &PoseSamplingConfig { n_poses: 1, seed, ..Default::default() }).unwrap()[0];
        let (l, _) = rasterize_labels(&mesh, &intr, &pose);
        let (w, h) = (l.width(), l.height());
        let on: Vec<bool> = l.labels().iter().map(|&c| c != 0).collect();
        let total = on.iter().filter(|&&b| b).count();
        let start = on.iter().position(|&b| b).unwrap();
        let mut seen = vec![false; w * h];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| if on[j] && !seen[j] { seen[j] = true; stack.push(j) };
            if x > 0 { push(i - 1) }
            if x + 1 < w { push(i + 1) }
            if y > 0 { push(i - w) }
            if y + 1 < h { push(i + w) }
        }
        prop_assert_eq!(reached, total);
    }

    #[test]
    fn overlay_is_linear_in_opacity(alpha in 0.0f32..1.0) {
        let mesh = dome();
        let intr = CameraIntrinsics::with_default_focal(32, 32).unwrap();
        let pose = sample_hemisphere_poses(&mesh, &intr, &PoseSamplingConfig { n_poses: 1, seed: 3, ..Default::default() }).unwrap()[0];
        let base = RgbImage::filled(32, 32, [0.2, 0.4, 0.6]);
        let color = [0.0, 1.0, 0.0];
        let full = render_overlay(&base, &mesh, &intr, &pose, color, 1.0, OverlayMode::Silhouette).unwrap();
        let part = render_overlay(&base, &mesh, &intr, &pose, color, alpha, OverlayMode::Silhouette).unwrap();
        for ((b, f), p) in base.data().iter().zip(full.data()).zip(part.data()) {
            prop_assert!((p - (b + alpha * (f - b))).abs() < 1e-5);
        }
    }

    #[test]
    fn manifest_round_trips(n in 1usize..8, seed in any::<u64>(), r in rot_vec(), t in vec3(80.0)) {
        let dir = tempfile::tempdir().unwrap();
        let pose = Pose::new(r, t).unwrap();
        let samples = (0..n).map(|i| AppearanceSample {
            id: format!("p{i:04}_t_a0"),
            image_path: format!("images/p{i:04}_t_a0.png"),
            pose,
            texture_id: "t".into(),
            aug_seed: (i % 2 == 1).then_some(seed.wrapping_add(i as u64)),
            pose_index: i,
            label_hash: format!("{seed:x}"),
            image_hash: format!("{i}"),
        }).collect();
        let ds = CaseDataset {
            case_id: "c".into(),
            root: dir.path().to_path_buf(),
            mesh: "mesh.ply".into(),
            intrinsics: CameraIntrinsics::with_default_focal(32, 24).unwrap(),
            texture_ids: vec!["t".into()],
            config_hash: Some("abc".into()),
            complete: true,
            samples,
            failures: Vec::new(),
        };
        ds.save(dir.path()).unwrap();
        let back = CaseDataset::load(dir.path()).unwrap();
        prop_assert_eq!(back, ds);
    }
}
