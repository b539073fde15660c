//! Z-buffered label rasterization and AR-style overlays.
//!
//! A pixel belongs to a triangle when its center is inside the projected
//! triangle; centers exactly on an edge follow the top-left rule. Depth is
//! interpolated perspective-correctly. Near-equal depths (within
//! [`DEPTH_TIE`]) resolve to the vessel class, then to the lower face index,
//! so the result does not depend on face order.

use crate::error::{invalid, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec2, MIN_DEPTH};
use crate::image::{LabelImage, RgbImage, CLASS_BACKGROUND};
use crate::mesh::SurfaceMesh;

pub const DEPTH_TIE: f64 = 1e-9;

pub const GROUND_TRUTH_COLOR: [f32; 3] = [0.0, 1.0, 0.0];
pub const PREDICTION_COLOR: [f32; 3] = [0.0, 0.35, 1.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterDiagnostics {
    pub degenerate_faces: usize,
    /// Faces with a vertex at or behind the camera; skipped.
    pub clipped_faces: usize,
    pub covered_pixels: usize,
}

/// Per-pixel winning face, if any.
#[derive(Debug, Clone)]
pub struct Coverage {
    pub width: usize,
    pub height: usize,
    pub face: Vec<Option<u32>>,
    pub depth: Vec<f64>,
    pub diagnostics: RasterDiagnostics,
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Top or left edge for a triangle with positive [`edge`] area (clockwise
/// on screen with `y` down).
#[inline]
fn is_top_left(a: &Vec2, b: &Vec2) -> bool {
    (a.y == b.y && b.x > a.x) || b.y < a.y
}

#[inline]
fn inside(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// Rasterizes every face, keeping the nearest surface per pixel.
pub fn rasterize_coverage(mesh: &SurfaceMesh, intr: &CameraIntrinsics, pose: &Pose) -> Coverage {
    let (w, h) = (intr.width as usize, intr.height as usize);
    let rot = pose.rotation();
    let cam: Vec<_> = mesh
        .vertices()
        .iter()
        .map(|v| rot * v + pose.translation())
        .collect();
    let classes = mesh.face_classes();
    let mut face_buf: Vec<Option<u32>> = vec![None; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    let mut diag = RasterDiagnostics::default();

    for (fi, f) in mesh.faces().iter().enumerate() {
        let pc = [cam[f[0] as usize], cam[f[1] as usize], cam[f[2] as usize]];
        if pc.iter().any(|p| !(p.z > MIN_DEPTH)) {
            diag.clipped_faces += 1;
            continue;
        }
        let mut s = [
            intr.project_camera_point(&pc[0]),
            intr.project_camera_point(&pc[1]),
            intr.project_camera_point(&pc[2]),
        ];
        let mut inv_z = [1.0 / pc[0].z, 1.0 / pc[1].z, 1.0 / pc[2].z];
        let mut area = edge(&s[0], &s[1], &s[2]);
        if area == 0.0 || !area.is_finite() {
            diag.degenerate_faces += 1;
            continue;
        }
        if area < 0.0 {
            s.swap(1, 2);
            inv_z.swap(1, 2);
            area = -area;
        }
        let tl = [
            is_top_left(&s[1], &s[2]),
            is_top_left(&s[2], &s[0]),
            is_top_left(&s[0], &s[1]),
        ];
        let min_x = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        // pixel i covers [i, i+1); its center is i + 0.5
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_x - 0.5).floor()).min(w as f64 - 1.0);
        let y1 = ((max_y - 0.5).floor()).min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let this_vessel = classes[fi] == crate::mesh::FaceClass::Vessel;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let w0 = edge(&s[1], &s[2], &p);
                let w1 = edge(&s[2], &s[0], &p);
                let w2 = edge(&s[0], &s[1], &p);
                if !(inside(w0, tl[0]) && inside(w1, tl[1]) && inside(w2, tl[2])) {
                    continue;
                }
                let z = area / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                let idx = y * w + x;
                let take = match face_buf[idx] {
                    None => true,
                    Some(other) => {
                        let dz = z - depth[idx];
                        if dz < -DEPTH_TIE {
                            true
                        } else if dz > DEPTH_TIE {
                            false
                        } else {
                            let other_vessel = classes[other as usize] == crate::mesh::FaceClass::Vessel;
                            match (this_vessel, other_vessel) {
                                (true, false) => true,
                                (false, true) => false,
                                _ => (fi as u32) < other,
                            }
                        }
                    }
                };
                if take {
                    face_buf[idx] = Some(fi as u32);
                    depth[idx] = z;
                }
            }
        }
    }
    diag.covered_pixels = face_buf.iter().filter(|f| f.is_some()).count();
    Coverage {
        width: w,
        height: h,
        face: face_buf,
        depth,
        diagnostics: diag,
    }
}

/// Class map of the mesh seen from `pose`.
pub fn rasterize_labels(
    mesh: &SurfaceMesh,
    intr: &CameraIntrinsics,
    pose: &Pose,
) -> (LabelImage, RasterDiagnostics) {
    let cov = rasterize_coverage(mesh, intr, pose);
    let classes = mesh.face_classes();
    let labels = cov
        .face
        .iter()
        .map(|f| f.map_or(CLASS_BACKGROUND, |fi| classes[fi as usize].label()))
        .collect();
    let img = LabelImage::from_labels(cov.width, cov.height, labels).expect("valid class codes");
    (img, cov.diagnostics)
}

/// Which covered pixels an overlay paints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlayMode {
    /// Every pixel covered by any face.
    Silhouette,
    /// Only pixels whose visible surface is a vessel.
    #[default]
    Vessels,
}

/// Blends `color` with `opacity` over the pixels the mesh covers. The input
/// image is left untouched.
pub fn render_overlay(
    image: &RgbImage,
    mesh: &SurfaceMesh,
    intr: &CameraIntrinsics,
    pose: &Pose,
    color: [f32; 3],
    opacity: f32,
    mode: OverlayMode,
) -> Result<RgbImage> {
    if image.width() != intr.width as usize || image.height() != intr.height as usize {
        return Err(invalid(format!(
            "image is {}x{} but intrinsics describe {}x{}",
            image.width(),
            image.height(),
            intr.width,
            intr.height
        )));
    }
    if !(0.0..=1.0).contains(&opacity) {
        return Err(invalid("opacity must be in [0, 1]"));
    }
    let mut out = image.clone();
    if opacity == 0.0 {
        return Ok(out);
    }
    let cov = rasterize_coverage(mesh, intr, pose);
    let classes = mesh.face_classes();
    let w = cov.width;
    for (idx, f) in cov.face.iter().enumerate() {
        let Some(fi) = f else { continue };
        if mode == OverlayMode::Vessels && classes[*fi as usize] != crate::mesh::FaceClass::Vessel {
            continue;
        }
        let (x, y) = (idx % w, idx / w);
        for (c, &col) in color.iter().enumerate() {
            let v = image.get(c, x, y);
            out.set(c, x, y, v + opacity * (col - v));
        }
    }
    Ok(out)
}

/// Ground truth in green and prediction in blue over the same image.
pub fn render_pose_comparison(
    image: &RgbImage,
    mesh: &SurfaceMesh,
    intr: &CameraIntrinsics,
    gt: &Pose,
    predicted: &Pose,
    opacity: f32,
    mode: OverlayMode,
) -> Result<RgbImage> {
    let with_gt = render_overlay(image, mesh, intr, gt, GROUND_TRUTH_COLOR, opacity, mode)?;
    render_overlay(&with_gt, mesh, intr, predicted, PREDICTION_COLOR, opacity, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::image::{CLASS_PARENCHYMA, CLASS_VESSEL};
    use crate::mesh::FaceClass;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn big_triangle(z: f64, class: FaceClass) -> (Vec<Vec3>, [u32; 3], FaceClass) {
        (
            vec![
                Vec3::new(-1000.0, -1000.0, z),
                Vec3::new(1000.0, -1000.0, z),
                Vec3::new(0.0, 1000.0, z),
            ],
            [0, 1, 2],
            class,
        )
    }

    fn mesh_of(parts: &[(Vec<Vec3>, [u32; 3], FaceClass)]) -> SurfaceMesh {
        let mut v = Vec::new();
        let mut f = Vec::new();
        let mut c = Vec::new();
        for (verts, face, class) in parts {
            let base = v.len() as u32;
            v.extend(verts.iter().copied());
            f.push([face[0] + base, face[1] + base, face[2] + base]);
            c.push(*class);
        }
        SurfaceMesh::new(v, f, c).unwrap()
    }

    #[test]
    fn mesh_out_of_view_is_all_background() {
        let mut tri = big_triangle(50.0, FaceClass::Vessel);
        for p in &mut tri.0 {
            p.x = p.x * 0.001 + 500.0;
            p.y *= 0.001;
        }
        let (img, _) = rasterize_labels(&mesh_of(&[tri]), &intr(), &Pose::identity());
        assert!(img.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn center_pixel_of_large_triangle() {
        let (img, diag) = rasterize_labels(
            &mesh_of(&[big_triangle(50.0, FaceClass::Parenchyma), {
                let mut t = big_triangle(60.0, FaceClass::Vessel);
                t.0.iter_mut().for_each(|p| p.x += 5000.0);
                t
            }]),
            &intr(),
            &Pose::identity(),
        );
        assert_eq!(img.get(32, 32), CLASS_PARENCHYMA);
        assert_eq!(diag.degenerate_faces, 0);
    }

    #[test]
    fn nearer_face_wins_and_ties_go_to_vessel() {
        let near_par = big_triangle(40.0, FaceClass::Parenchyma);
        let far_ves = big_triangle(50.0, FaceClass::Vessel);
        let (img, _) = rasterize_labels(&mesh_of(&[far_ves.clone(), near_par.clone()]), &intr(), &Pose::identity());
        assert_eq!(img.get(32, 32), CLASS_PARENCHYMA);

        let tie_par = big_triangle(50.0, FaceClass::Parenchyma);
        for order in [vec![tie_par.clone(), far_ves.clone()], vec![far_ves, tie_par]] {
            let (img, _) = rasterize_labels(&mesh_of(&order), &intr(), &Pose::identity());
            assert_eq!(img.get(32, 32), CLASS_VESSEL);
        }
    }

    #[test]
    fn degenerate_faces_are_counted() {
        let mesh = SurfaceMesh::new(
            vec![Vec3::new(0.0, 0.0, 10.0), Vec3::new(1.0, 0.0, 10.0), Vec3::new(2.0, 0.0, 10.0)],
            vec![[0, 1, 2]],
            vec![FaceClass::Vessel],
        )
        .unwrap();
        let (_, diag) = rasterize_labels(&mesh, &intr(), &Pose::identity());
        assert_eq!(diag.degenerate_faces, 1);
    }

    #[test]
    fn shared_edge_pixels_are_not_double_counted() {
        // Two triangles forming an axis-aligned square whose edges fall on
        // pixel centers: the top-left rule must cover each center once.
        let z = 100.0;
        let s = |px: f64| (px - 32.0) * z / 100.0;
        let v = vec![
            Vec3::new(s(10.5), s(10.5), z),
            Vec3::new(s(20.5), s(10.5), z),
            Vec3::new(s(20.5), s(20.5), z),
            Vec3::new(s(10.5), s(20.5), z),
        ];
        let mesh = SurfaceMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![FaceClass::Vessel, FaceClass::Vessel]).unwrap();
        let cov = rasterize_coverage(&mesh, &intr(), &Pose::identity());
        // centers 10.5..=19.5 on both axes: top and left edges included,
        // bottom and right excluded
        assert_eq!(cov.diagnostics.covered_pixels, 100);
    }

    #[test]
    fn overlay_opacity_extremes() {
        let mesh = mesh_of(&[big_triangle(50.0, FaceClass::Vessel)]);
        let img = RgbImage::filled(64, 64, [0.2, 0.3, 0.4]);
        let same = render_overlay(&img, &mesh, &intr(), &Pose::identity(), [1.0, 0.0, 0.0], 0.0, OverlayMode::Silhouette).unwrap();
        assert_eq!(same, img);
        let full = render_overlay(&img, &mesh, &intr(), &Pose::identity(), [1.0, 0.0, 0.0], 1.0, OverlayMode::Silhouette).unwrap();
        assert_eq!(full.pixel(32, 32), [1.0, 0.0, 0.0]);
        let half = render_overlay(&img, &mesh, &intr(), &Pose::identity(), [1.0, 0.0, 0.0], 0.25, OverlayMode::Silhouette).unwrap();
        let px = half.pixel(32, 32);
        assert!((px[0] - (0.2 + 0.25 * 0.8)).abs() < 1e-6);
        assert!((px[1] - 0.3 * 0.75).abs() < 1e-6);
    }

    #[test]
    fn overlay_rejects_dimension_mismatch() {
        let mesh = mesh_of(&[big_triangle(50.0, FaceClass::Vessel)]);
        let img = RgbImage::new(10, 10);
        assert!(render_overlay(&img, &mesh, &intr(), &Pose::identity(), [1.0; 3], 0.5, OverlayMode::Vessels).is_err());
    }

    #[test]
    fn comparison_uses_two_colors() {
        let mesh = mesh_of(&[big_triangle(50.0, FaceClass::Vessel)]);
        let img = RgbImage::new(64, 64);
        let shifted = Pose::new(Vec3::zeros(), Vec3::new(1000.0, 0.0, 0.0)).unwrap();
        let out = render_pose_comparison(&img, &mesh, &intr(), &Pose::identity(), &shifted, 1.0, OverlayMode::Vessels).unwrap();
        assert_eq!(out.pixel(32, 32), GROUND_TRUTH_COLOR);
    }
}
