//! Rigid transforms and the pinhole camera.
//!
//! Cameras look down `+z`; `u` grows to the right and `v` grows downwards.
//! Integer pixel coordinates sit at pixel centres, so the image covers
//! `[-0.5, width - 0.5) × [-0.5, height - 0.5)`.

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;
pub(crate) const MIN_DEPTH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// `p' = rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates that `rotation` is a proper rotation.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Mat3::identity();
        if gram.iter().any(|e| e.abs() > ORTHONORMAL_TOL)
            || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(Error::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// World-to-camera pose for a camera at `eye` looking at `target`,
    /// with `up` pointing towards the top of the image.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidParameter("look_at target equals eye"));
        }
        let z = forward.normalize();
        let x = z.cross(up);
        if x.norm() < 1e-12 {
            return Err(Error::InvalidParameter("look_at up is parallel to view"));
        }
        // Image v grows downwards, so the camera y axis points against `up`.
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Camera centre in world coordinates for a world-to-camera transform.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Transform mapping camera-`m` coordinates into camera-`n` coordinates,
/// `T_n ∘ T_m⁻¹`, for world-to-camera poses `t_m` and `t_n`.
pub fn relative_transform(t_m: &RigidTransform, t_n: &RigidTransform) -> RigidTransform {
    t_n.compose(&t_m.inverse())
}

/// Rotation matrix of the quaternion `(w, x, y, z)`, normalised first.
pub fn quaternion_to_rotation(q: &[f64; 4]) -> Result<Mat3> {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(norm > 1e-12) {
        return Err(Error::ZeroQuaternion);
    }
    let [w, x, y, z] = q.map(|c| c / norm);
    Ok(rotation_from_unit_quaternion(w, x, y, z))
}

#[inline]
pub(crate) fn rotation_from_unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> Mat3 {
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera.
    pub pose: RigidTransform,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: RigidTransform,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera("focal lengths must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidCamera("principal point must be finite"));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be at least 1x1"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Square-pixel camera with the principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize, pose: RigidTransform) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            pose,
        )
    }

    /// Mean focal length, used where a single `f` is needed.
    #[inline]
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn with_pose(&self, pose: RigidTransform) -> Self {
        Self { pose, ..*self }
    }

    pub fn intrinsics(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a world-space point to pixel coordinates and camera-frame depth.
    pub fn project(&self, world: &Vec3) -> Result<(Pixel, f64)> {
        self.project_camera_frame(&self.pose.apply(world))
    }

    #[inline]
    pub fn project_camera_frame(&self, p: &Vec3) -> Result<(Pixel, f64)> {
        if !(p.z > MIN_DEPTH) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok((
            Pixel::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy),
            p.z,
        ))
    }

    /// Back-projects a pixel at camera-frame depth `depth` into the camera frame.
    #[inline]
    pub fn unproject(&self, px: Pixel, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.ray(px) * depth)
    }

    /// `K⁻¹ [u, v, 1]ᵀ`: camera-frame direction with unit z.
    #[inline]
    pub fn ray(&self, px: Pixel) -> Vec3 {
        Vec3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn contains(&self, px: Pixel) -> bool {
        px.u >= -0.5
            && px.u < self.width as f64 - 0.5
            && px.v >= -0.5
            && px.v < self.height as f64 - 0.5
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_4;
    use proptest::prelude::*;

    fn cam(pose: RigidTransform) -> Camera {
        Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64, pose).unwrap()
    }

    fn rotation_from_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    fn random_transform(seed: [f64; 7]) -> RigidTransform {
        let axis = Vec3::new(seed[0], seed[1], seed[2] + 0.1);
        RigidTransform::new(
            rotation_from_axis_angle(axis, seed[3] * 3.0),
            Vec3::new(seed[4], seed[5], seed[6]),
        )
        .unwrap()
    }

    #[test]
    fn project_on_axis_hits_principal_point() {
        let (px, d) = cam(RigidTransform::identity())
            .project(&Vec3::new(0.0, 0.0, 2.0))
            .unwrap();
        assert_eq!(px, Pixel::new(32.0, 32.0));
        assert_eq!(d, 2.0);
    }

    #[test]
    fn project_off_axis() {
        let (px, d) = cam(RigidTransform::identity())
            .project(&Vec3::new(1.0, 0.0, 2.0))
            .unwrap();
        assert!((px.u - 82.0).abs() < 1e-12);
        assert!((px.v - 32.0).abs() < 1e-12);
        assert_eq!(d, 2.0);
    }

    #[test]
    fn project_zero_depth_fails() {
        assert!(matches!(
            cam(RigidTransform::identity()).project(&Vec3::new(1.0, 0.0, 0.0)),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn unproject_examples() {
        let c = cam(RigidTransform::identity());
        assert_eq!(
            c.unproject(Pixel::new(32.0, 32.0), 3.0).unwrap(),
            Vec3::new(0.0, 0.0, 3.0)
        );
        let p = c.unproject(Pixel::new(82.0, 32.0), 2.0).unwrap();
        assert!((p - Vec3::new(1.0, 0.0, 2.0)).norm() < 1e-12);
        assert!(c.unproject(Pixel::new(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn relative_transform_identities() {
        let a = random_transform([0.3, -0.2, 0.5, 0.7, 1.0, -2.0, 0.5]);
        let rel = relative_transform(&a, &a);
        assert!((rel.rotation - Mat3::identity()).abs().max() < 1e-12);
        assert!(rel.translation.norm() < 1e-12);
        let rel = relative_transform(&RigidTransform::identity(), &a);
        assert!((rel.rotation - a.rotation).abs().max() < 1e-15);
        assert!((rel.translation - a.translation).norm() < 1e-15);
    }

    #[test]
    fn quaternion_examples() {
        let r = quaternion_to_rotation(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r, Mat3::identity());
        let (s, c) = (FRAC_PI_4.sin(), FRAC_PI_4.cos());
        let r = quaternion_to_rotation(&[c, s, 0.0, 0.0]).unwrap();
        let expected = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((r - expected).abs().max() < 1e-12);
        assert_eq!(
            quaternion_to_rotation(&[0.0; 4]),
            Err(Error::ZeroQuaternion)
        );
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let eye = Vec3::new(1.0, 2.0, 3.0);
        let target = Vec3::new(0.0, 1.0, -1.0);
        let pose = RigidTransform::look_at(&eye, &target, &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        RigidTransform::new(pose.rotation, pose.translation).unwrap();
        let p = pose.apply(&target);
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        assert!((pose.center() - eye).norm() < 1e-12);
        // A point above the target lands in the upper half of the image.
        let above = pose.apply(&(target + Vec3::new(0.0, 0.5, 0.0)));
        assert!(above.y < 0.0);
    }

    proptest! {
        #[test]
        fn projection_round_trip(u in -10.0..74.0f64, v in -10.0..74.0f64, z in 0.1..100.0f64) {
            let c = cam(RigidTransform::identity());
            let p = c.unproject(Pixel::new(u, v), z).unwrap();
            let (px, d) = c.project_camera_frame(&p).unwrap();
            prop_assert!((px.u - u).abs() < 1e-9);
            prop_assert!((px.v - v).abs() < 1e-9);
            prop_assert!((d - z).abs() < 1e-9);
        }

        #[test]
        fn relative_transform_matches_world_composition(
            a in proptest::array::uniform7(-1.0..1.0f64),
            b in proptest::array::uniform7(-1.0..1.0f64),
            p in proptest::array::uniform3(-5.0..5.0f64),
        ) {
            let (t_m, t_n) = (random_transform(a), random_transform(b));
            let p_m = Vec3::from(p);
            let world = t_m.inverse().apply(&p_m);
            let via_world = t_n.apply(&world);
            let direct = relative_transform(&t_m, &t_n).apply(&p_m);
            prop_assert!((via_world - direct).norm() < 1e-12);
        }

        #[test]
        fn relative_transform_chains(
            a in proptest::array::uniform7(-1.0..1.0f64),
            b in proptest::array::uniform7(-1.0..1.0f64),
            c in proptest::array::uniform7(-1.0..1.0f64),
        ) {
            let (ta, tb, tc) = (random_transform(a), random_transform(b), random_transform(c));
            let chained = relative_transform(&tb, &tc).compose(&relative_transform(&ta, &tb));
            let direct = relative_transform(&ta, &tc);
            prop_assert!((chained.rotation - direct.rotation).abs().max() < 1e-12);
            prop_assert!((chained.translation - direct.translation).norm() < 1e-12);
        }

        #[test]
        fn quaternion_rotation_is_proper(q in proptest::array::uniform4(-1.0..1.0f64)) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>() > 1e-6);
            let r = quaternion_to_rotation(&q).unwrap();
            prop_assert!(RigidTransform::new(r, Vec3::zeros()).is_ok());
            let neg = quaternion_to_rotation(&q.map(|c| -c)).unwrap();
            prop_assert!((r - neg).abs().max() < 1e-15);
            let t = RigidTransform::new(r, Vec3::new(q[0], q[1], q[2])).unwrap();
            let id = t.compose(&t.inverse());
            prop_assert!((id.rotation - Mat3::identity()).abs().max() < 1e-9);
            prop_assert!(id.translation.norm() < 1e-9);
        }
    }
}
