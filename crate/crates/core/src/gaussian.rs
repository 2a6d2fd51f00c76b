//! Gaussian primitives, their parameterisation and screen-space projection.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix2x3, Vector2};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{rotation_from_unit_quaternion, Camera, Mat3, Vec3, MIN_DEPTH};

/// Number of scalar parameters per Gaussian.
pub const PARAM_COUNT: usize = 14;

/// Offsets into the flat per-Gaussian parameter vector.
pub mod param {
    use core::ops::Range;
    pub const MU: Range<usize> = 0..3;
    pub const LOG_SCALE: Range<usize> = 3..6;
    pub const QUAT: Range<usize> = 6..10;
    pub const OPACITY: usize = 10;
    pub const COLOR: Range<usize> = 11..14;
}

/// Isotropic floor added to the diagonal of every projected covariance, in px².
pub const COV2D_FLOOR: f64 = 0.3;

pub type Params = [f64; PARAM_COUNT];

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One Gaussian, stored in unconstrained form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPoint {
    pub mu: Vec3,
    pub log_scale: Vec3,
    /// `(w, x, y, z)`, normalised on use.
    pub quat: [f64; 4],
    pub opacity_logit: f64,
    pub color_logit: Vec3,
}

impl GaussianPoint {
    /// Isotropic Gaussian from decoded values.
    pub fn isotropic(mu: Vec3, scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self {
            mu,
            log_scale: Vec3::repeat(scale.ln()),
            quat: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            color_logit: Vec3::from(color.map(logit)),
        }
    }

    #[inline]
    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(|s| s.exp())
    }

    #[inline]
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    #[inline]
    pub fn color(&self) -> [f64; 3] {
        [
            sigmoid(self.color_logit.x),
            sigmoid(self.color_logit.y),
            sigmoid(self.color_logit.z),
        ]
    }

    /// Every parameter and every derived scale is finite.
    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
            && self.scale().iter().all(|s| s.is_finite() && *s > 0.0)
    }

    pub fn covariance(&self) -> Result<Mat3> {
        build_covariance(&self.scale(), &self.quat)
    }

    /// Flat parameters in checkpoint order.
    pub fn to_params(&self) -> Params {
        let mut p = [0.0; PARAM_COUNT];
        p[param::MU].copy_from_slice(self.mu.as_slice());
        p[param::LOG_SCALE].copy_from_slice(self.log_scale.as_slice());
        p[param::QUAT].copy_from_slice(&self.quat);
        p[param::OPACITY] = self.opacity_logit;
        p[param::COLOR].copy_from_slice(self.color_logit.as_slice());
        p
    }

    pub fn from_params(p: &Params) -> Self {
        Self {
            mu: Vec3::from_column_slice(&p[param::MU]),
            log_scale: Vec3::from_column_slice(&p[param::LOG_SCALE]),
            quat: [p[6], p[7], p[8], p[9]],
            opacity_logit: p[param::OPACITY],
            color_logit: Vec3::from_column_slice(&p[param::COLOR]),
        }
    }
}

/// The optimisable scene with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    points: Vec<GaussianPoint>,
    grads: Vec<Params>,
}

impl GaussianCloud {
    pub fn new(points: Vec<GaussianPoint>) -> Self {
        let grads = vec![[0.0; PARAM_COUNT]; points.len()];
        Self { points, grads }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[GaussianPoint] {
        &self.points
    }

    #[inline]
    pub fn points_mut(&mut self) -> &mut [GaussianPoint] {
        &mut self.points
    }

    pub fn push(&mut self, point: GaussianPoint) {
        self.points.push(point);
        self.grads.push([0.0; PARAM_COUNT]);
    }

    #[inline]
    pub fn grads(&self) -> &[Params] {
        &self.grads
    }

    #[inline]
    pub fn grads_mut(&mut self) -> &mut [Params] {
        &mut self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = [0.0; PARAM_COUNT]);
    }

    pub fn split_mut(&mut self) -> (&mut [GaussianPoint], &mut [Params]) {
        (&mut self.points, &mut self.grads)
    }

    pub fn into_points(self) -> Vec<GaussianPoint> {
        self.points
    }
}

/// `Σ = R S Sᵀ Rᵀ` for positive `scale` and quaternion `quat`.
pub fn build_covariance(scale: &Vec3, quat: &[f64; 4]) -> Result<Mat3> {
    let r = crate::geometry::quaternion_to_rotation(quat)?;
    let m = r * Mat3::from_diagonal(scale);
    Ok(m * m.transpose())
}

/// Unnormalised density `exp(-½ (X-μ)ᵀ Σ⁻¹ (X-μ))`.
pub fn eval_gaussian(g: &GaussianPoint, x: &Vec3) -> Result<f64> {
    let cov = g.covariance()?;
    let inv = cov
        .try_inverse()
        .ok_or(Error::InvalidParameter("singular covariance"))?;
    let d = x - g.mu;
    Ok((-0.5 * d.dot(&(inv * d))).exp())
}

/// A Gaussian splatted to the image plane, with the intermediates the
/// backward pass needs.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedGaussian {
    pub center: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    /// Camera-frame z of the centre.
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    p_cam: Vec3,
    jac: Matrix2x3<f64>,
    cov_cam: Mat3,
    rot: Mat3,
    scale: Vec3,
    quat_unit: [f64; 4],
    quat_norm: f64,
}

/// Splats `g` with the local-affine approximation `J W Σ Wᵀ Jᵀ`.
pub fn project_gaussian(g: &GaussianPoint, cam: &Camera) -> Result<ProjectedGaussian> {
    let p = cam.pose.apply(&g.mu);
    if !(p.z > MIN_DEPTH) {
        return Err(Error::BehindCamera);
    }
    let q = &g.quat;
    let quat_norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(quat_norm > 1e-12) {
        return Err(Error::ZeroQuaternion);
    }
    let quat_unit = q.map(|c| c / quat_norm);
    let rot = rotation_from_unit_quaternion(quat_unit[0], quat_unit[1], quat_unit[2], quat_unit[3]);
    let scale = g.scale();
    let m = rot * Mat3::from_diagonal(&scale);
    let w = cam.pose.rotation;
    let cov_cam = w * (m * m.transpose()) * w.transpose();

    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    let jac = Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * p.x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * p.y * iz2,
    );
    let mut cov2d = jac * cov_cam * jac.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += COV2D_FLOOR;
    cov2d[(1, 1)] += COV2D_FLOOR;
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(0, 1)];
    if !(det > 0.0) {
        return Err(Error::InvalidParameter("degenerate projected covariance"));
    }
    let conic = Matrix2::new(
        cov2d[(1, 1)] / det,
        -cov2d[(0, 1)] / det,
        -cov2d[(0, 1)] / det,
        cov2d[(0, 0)] / det,
    );
    Ok(ProjectedGaussian {
        center: Vector2::new(cam.fx * p.x * iz + cam.cx, cam.fy * p.y * iz + cam.cy),
        cov2d,
        conic,
        depth: p.z,
        opacity: g.opacity(),
        color: g.color(),
        p_cam: p,
        jac,
        cov_cam,
        rot,
        scale,
        quat_unit,
        quat_norm,
    })
}

/// Gradients with respect to the screen-space quantities of one Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScreenGrad {
    pub center: Vector2<f64>,
    /// Symmetric-matrix gradient of the conic (`dL = tr(Gᵀ dConic)`).
    pub conic: Matrix2<f64>,
    pub depth: f64,
    /// With respect to the decoded opacity.
    pub opacity: f64,
    /// With respect to the decoded colour.
    pub color: [f64; 3],
}

impl ScreenGrad {
    pub fn is_zero(&self) -> bool {
        self.center == Vector2::zeros()
            && self.conic == Matrix2::zeros()
            && self.depth == 0.0
            && self.opacity == 0.0
            && self.color == [0.0; 3]
    }
}

impl ProjectedGaussian {
    /// Chains screen-space gradients back to the Gaussian's parameters and
    /// adds them into `out`.
    pub fn backward(&self, cam: &Camera, g: &ScreenGrad, out: &mut Params) {
        // Opacity and colour go through their sigmoids.
        out[param::OPACITY] += g.opacity * self.opacity * (1.0 - self.opacity);
        for c in 0..3 {
            out[param::COLOR.start + c] += g.color[c] * self.color[c] * (1.0 - self.color[c]);
        }

        // conic = cov2d⁻¹  ⇒  dL/dcov2d = -conic · G · conic
        let d_cov2d = -(self.conic * g.conic * self.conic);
        let d_cov_cam = self.jac.transpose() * d_cov2d * self.jac;
        let d_jac = 2.0 * d_cov2d * self.jac * self.cov_cam;

        let (fx, fy) = (cam.fx, cam.fy);
        let p = &self.p_cam;
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        let iz3 = iz2 * iz;
        let mut d_p = Vec3::zeros();
        // Centre.
        d_p.x += g.center.x * fx * iz;
        d_p.y += g.center.y * fy * iz;
        d_p.z += -g.center.x * fx * p.x * iz2 - g.center.y * fy * p.y * iz2;
        // Jacobian entries J00, J02, J11, J12.
        d_p.x += -d_jac[(0, 2)] * fx * iz2;
        d_p.y += -d_jac[(1, 2)] * fy * iz2;
        d_p.z += -d_jac[(0, 0)] * fx * iz2 + d_jac[(0, 2)] * 2.0 * fx * p.x * iz3
            - d_jac[(1, 1)] * fy * iz2
            + d_jac[(1, 2)] * 2.0 * fy * p.y * iz3;
        d_p.z += g.depth;
        let d_mu = cam.pose.rotation.transpose() * d_p;
        for k in 0..3 {
            out[param::MU.start + k] += d_mu[k];
        }

        // Σ = M Mᵀ, M = R diag(s).
        let w = cam.pose.rotation;
        let d_sigma = w.transpose() * d_cov_cam * w;
        let m = self.rot * Mat3::from_diagonal(&self.scale);
        let d_m = 2.0 * d_sigma * m;
        let mut d_rot = Mat3::zeros();
        for j in 0..3 {
            let mut ds = 0.0;
            for i in 0..3 {
                ds += d_m[(i, j)] * self.rot[(i, j)];
                d_rot[(i, j)] = d_m[(i, j)] * self.scale[j];
            }
            out[param::LOG_SCALE.start + j] += ds * self.scale[j];
        }

        let [qw, qx, qy, qz] = self.quat_unit;
        let r = &d_rot;
        let dq = [
            2.0 * (-qz * r[(0, 1)] + qy * r[(0, 2)] + qz * r[(1, 0)]
                - qx * r[(1, 2)]
                - qy * r[(2, 0)]
                + qx * r[(2, 1)]),
            2.0 * (qy * r[(0, 1)] + qz * r[(0, 2)] + qy * r[(1, 0)]
                - 2.0 * qx * r[(1, 1)]
                - qw * r[(1, 2)]
                + qz * r[(2, 0)]
                + qw * r[(2, 1)]
                - 2.0 * qx * r[(2, 2)]),
            2.0 * (-2.0 * qy * r[(0, 0)]
                + qx * r[(0, 1)]
                + qw * r[(0, 2)]
                + qx * r[(1, 0)]
                + qz * r[(1, 2)]
                - qw * r[(2, 0)]
                + qz * r[(2, 1)]
                - 2.0 * qy * r[(2, 2)]),
            2.0 * (-2.0 * qz * r[(0, 0)] - qw * r[(0, 1)] + qx * r[(0, 2)] + qw * r[(1, 0)]
                - 2.0 * qz * r[(1, 1)]
                + qy * r[(1, 2)]
                + qx * r[(2, 0)]
                + qy * r[(2, 1)]),
        ];
        // Through the normalisation q̂ = q / |q|.
        let dot: f64 = (0..4).map(|k| dq[k] * self.quat_unit[k]).sum();
        for k in 0..4 {
            out[param::QUAT.start + k] += (dq[k] - dot * self.quat_unit[k]) / self.quat_norm;
        }
    }
}
