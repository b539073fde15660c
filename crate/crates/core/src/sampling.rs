//! Upper-hemisphere camera pose sampling around a mesh.
//!
//! The hemisphere "up" direction is world `-z`: a camera at elevation 90°
//! with zero roll looks straight along `+z` and has the identity rotation.
//! Azimuth is measured in the world `x`/`-y` plane from `+x`. Roll 0 aligns
//! the image `x` axis with the projection of world `+x` onto the image
//! plane, so rotation vectors stay far from the half-turn wraparound.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{CameraIntrinsics, Mat3, Pose, Vec3, MIN_DEPTH};
use crate::mesh::SurfaceMesh;

pub const UP: Vec3 = Vec3::new(0.0, 0.0, -1.0);
const AZIMUTH_X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
const AZIMUTH_Y: Vec3 = Vec3::new(0.0, -1.0, 0.0);

/// Attempts per pose before giving up on the frustum constraint.
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSamplingConfig {
    pub n_poses: usize,
    /// Camera distance from the mesh centroid, mm.
    pub radius_range: (f64, f64),
    /// Radians above the centroid plane; the minimum must be positive.
    pub elevation_range: (f64, f64),
    pub azimuth_range: (f64, f64),
    pub roll_range: (f64, f64),
    /// Radius of the uniform ball the look-at target is drawn from, mm.
    pub lookat_jitter: f64,
    pub seed: u64,
}

fn full_turn() -> (f64, f64) {
    (0.0, TAU)
}

impl Default for PoseSamplingConfig {
    fn default() -> Self {
        Self {
            n_poses: 100,
            radius_range: (60.0, 70.0),
            elevation_range: (60f64.to_radians(), 90f64.to_radians()),
            azimuth_range: full_turn(),
            roll_range: (-10f64.to_radians(), 10f64.to_radians()),
            lookat_jitter: 2.0,
            seed: 0,
        }
    }
}

impl PoseSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("radius_range", self.radius_range),
            ("elevation_range", self.elevation_range),
            ("azimuth_range", self.azimuth_range),
            ("roll_range", self.roll_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(invalid(format!("{name}: need finite min <= max, got ({lo}, {hi})")));
            }
        }
        if self.radius_range.0 <= 0.0 {
            return Err(invalid("radius_range: minimum must be positive"));
        }
        if self.elevation_range.0 <= 0.0 || self.elevation_range.1 > PI / 2.0 {
            return Err(invalid("elevation_range: must lie in (0, pi/2]"));
        }
        if !(self.lookat_jitter >= 0.0) {
            return Err(invalid("lookat_jitter: must be >= 0"));
        }
        if self.n_poses == 0 {
            return Err(invalid("n_poses: must be >= 1"));
        }
        Ok(())
    }
}

/// Camera placement before conversion to a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub radius: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub roll: f64,
    pub target_offset: Vec3,
}

/// Pose of a camera orbiting `center` and looking at `center + target_offset`.
pub fn look_at_pose(center: &Vec3, vp: &Viewpoint) -> Result<Pose> {
    let (se, ce) = vp.elevation.sin_cos();
    let (sa, ca) = vp.azimuth.sin_cos();
    let eye = center + (AZIMUTH_X * ca + AZIMUTH_Y * sa) * (ce * vp.radius) + UP * (se * vp.radius);
    let target = center + vp.target_offset;
    let z = (target - eye).normalize();
    let x_ref = AZIMUTH_X - z * AZIMUTH_X.dot(&z);
    if x_ref.norm() < 1e-9 {
        return Err(Error::Sampling("optical axis parallel to the roll reference".into()));
    }
    let x0 = x_ref.normalize();
    let y0 = z.cross(&x0);
    let (sr, cr) = vp.roll.sin_cos();
    let x = x0 * cr + y0 * sr;
    let y = z.cross(&x);
    let rot = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Pose::from_matrix(&rot, -(rot * eye))
}

/// True when every vertex is in front of the camera and projects inside
/// the image.
pub fn mesh_in_view(mesh: &SurfaceMesh, intr: &CameraIntrinsics, pose: &Pose) -> bool {
    let rot = pose.rotation();
    mesh.vertices().iter().all(|v| {
        let c = rot * v + pose.translation();
        c.z > MIN_DEPTH && intr.contains(&intr.project_camera_point(&c))
    })
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn jitter(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    if radius == 0.0 {
        return Vec3::zeros();
    }
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Draws `n_poses` viewpoints uniformly in radius, elevation, azimuth and
/// roll, rejecting any that would let the mesh leave the image.
pub fn sample_hemisphere_poses(
    mesh: &SurfaceMesh,
    intr: &CameraIntrinsics,
    cfg: &PoseSamplingConfig,
) -> Result<Vec<Pose>> {
    cfg.validate()?;
    intr.validate()?;
    let center = mesh.centroid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut poses = Vec::with_capacity(cfg.n_poses);
    for i in 0..cfg.n_poses {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let vp = Viewpoint {
                radius: uniform(&mut rng, cfg.radius_range),
                elevation: uniform(&mut rng, cfg.elevation_range),
                azimuth: uniform(&mut rng, cfg.azimuth_range),
                roll: uniform(&mut rng, cfg.roll_range),
                target_offset: jitter(&mut rng, cfg.lookat_jitter),
            };
            let pose = look_at_pose(&center, &vp)?;
            if mesh_in_view(mesh, intr, &pose) {
                accepted = Some(pose);
                break;
            }
        }
        match accepted {
            Some(p) => poses.push(p),
            None => {
                return Err(Error::Sampling(format!(
                    "pose {i}: no viewpoint in {MAX_ATTEMPTS} attempts keeps the mesh inside the \
                     frustum; increase radius_range"
                )))
            }
        }
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FaceClass;
    use approx::assert_relative_eq;

    fn plate() -> SurfaceMesh {
        let v = vec![
            Vec3::new(-10.0, -10.0, 0.0),
            Vec3::new(10.0, -10.0, 0.0),
            Vec3::new(10.0, 10.0, 0.0),
            Vec3::new(-10.0, 10.0, 0.0),
        ];
        SurfaceMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![FaceClass::Parenchyma, FaceClass::Vessel]).unwrap()
    }

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::with_default_focal(128, 128).unwrap()
    }

    #[test]
    fn hundred_poses_all_above_and_in_view() {
        let mesh = plate();
        let cfg = PoseSamplingConfig::default();
        let poses = sample_hemisphere_poses(&mesh, &intr(), &cfg).unwrap();
        assert_eq!(poses.len(), 100);
        for p in &poses {
            let c = p.camera_center() - mesh.centroid();
            assert!(c.dot(&UP) > 0.0);
            assert!(mesh_in_view(&mesh, &intr(), p));
            assert!(p.r_vec().norm() < PI);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = PoseSamplingConfig {
            n_poses: 20,
            ..Default::default()
        };
        let a = sample_hemisphere_poses(&plate(), &intr(), &cfg).unwrap();
        let b = sample_hemisphere_poses(&plate(), &intr(), &cfg).unwrap();
        let bits = |v: &[Pose]| v.iter().flat_map(|p| p.to_array().map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    fn collapsed(radius: f64, el: f64, az: f64) -> PoseSamplingConfig {
        PoseSamplingConfig {
            n_poses: 1,
            radius_range: (radius, radius),
            elevation_range: (el, el),
            azimuth_range: (az, az),
            roll_range: (0.0, 0.0),
            lookat_jitter: 0.0,
            seed: 5,
        }
    }

    #[test]
    fn collapsed_ranges_give_closed_form_look_at() {
        let mesh = plate();
        // Straight down: identity rotation, camera 80 mm away.
        let p = sample_hemisphere_poses(&mesh, &intr(), &collapsed(80.0, PI / 2.0, 0.3)).unwrap()[0];
        assert_relative_eq!(p.rotation(), Mat3::identity(), epsilon = 1e-12);
        assert_relative_eq!(*p.translation(), Vec3::new(0.0, 0.0, 80.0), epsilon = 1e-12);

        // 45° elevation toward +x: a 45° turn about +y.
        let p = sample_hemisphere_poses(&mesh, &intr(), &collapsed(80.0, PI / 4.0, 0.0)).unwrap()[0];
        assert_relative_eq!(*p.r_vec(), Vec3::new(0.0, PI / 4.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(*p.translation(), Vec3::new(0.0, 0.0, 80.0), epsilon = 1e-12);
    }

    #[test]
    fn too_close_radius_fails() {
        let err = sample_hemisphere_poses(&plate(), &intr(), &collapsed(5.0, PI / 2.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }

    #[test]
    fn config_validation() {
        let mut c = PoseSamplingConfig::default();
        c.elevation_range = (0.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = PoseSamplingConfig::default();
        c.radius_range = (80.0, 70.0);
        assert!(c.validate().is_err());
    }
}
