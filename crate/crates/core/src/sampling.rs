//! Sampling of unobserved views around an input camera.
//!
//! The sampled camera keeps the input intrinsics and orientation and is
//! displaced by a translation `t = ε_t (sin 2πξ, cos 2πξ, 0)` in the input
//! camera frame, where `ε_t = σ D̄ / f` keeps the mean induced flow near `σ`
//! pixels regardless of scene depth.

use core::f64::consts::TAU;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Camera, RigidTransform, Vec3};

/// Mean depths below this are clamped when computing the radius.
pub const MIN_MEAN_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerMode {
    /// `ξ ~ U[0, 1)` on every draw.
    Random,
    /// `ξ` fixed for every draw.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Target mean flow magnitude in pixels.
    pub sigma: f64,
    pub mode: SamplerMode,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sigma: 23.0,
            mode: SamplerMode::Random,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("sampler sigma must be positive"));
        }
        if let SamplerMode::Fixed(xi) = self.mode {
            if !(0.0..1.0).contains(&xi) {
                return Err(Error::InvalidParameter("fixed xi must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// `ε_t = σ D̄ / f` with `f` the mean focal length.
pub fn adaptive_radius(mean_depth: f64, cam: &Camera, sigma: f64) -> Result<f64> {
    if !(mean_depth > 0.0) {
        return Err(Error::NonPositiveDepth(mean_depth));
    }
    Ok(sigma * mean_depth.max(MIN_MEAN_DEPTH) / cam.focal())
}

/// Point on the circle of radius `eps_t` in the image plane.
pub fn sample_translation(eps_t: f64, xi: f64) -> Vec3 {
    let (s, c) = (TAU * xi).sin_cos();
    Vec3::new(eps_t * s, eps_t * c, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledView {
    pub camera: Camera,
    /// Translation of the input-camera frame into the sampled frame.
    pub translation: Vec3,
    pub eps_t: f64,
    pub xi: f64,
}

/// Draws a sampled camera around `input`. The relative transform from the
/// input camera to the sampled one is the pure translation `translation`.
pub fn sample_view<R: Rng + ?Sized>(
    input: &Camera,
    mean_depth: f64,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SampledView> {
    let eps_t = adaptive_radius(mean_depth, input, cfg.sigma)?;
    let xi = match cfg.mode {
        SamplerMode::Random => rng.random::<f64>(),
        SamplerMode::Fixed(xi) => xi,
    };
    Ok(view_at(input, eps_t, xi))
}

/// The sampled view for an explicit radius and angle parameter.
pub fn view_at(input: &Camera, eps_t: f64, xi: f64) -> SampledView {
    let translation = sample_translation(eps_t, xi);
    let offset = RigidTransform::from_translation(translation);
    SampledView {
        camera: input.with_pose(offset.compose(&input.pose)),
        translation,
        eps_t,
        xi,
    }
}
