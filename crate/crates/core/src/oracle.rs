//! Prior flow: a parameter-independent flow estimate between an input view
//! and a sampled camera, standing in for a pretrained matcher.

use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::flow::{radiance_flow, round_trip_error, FlowField};
use crate::geometry::Camera;
use crate::grid::DepthMap;
use crate::rng::{stream, Stream};
use crate::scene::Scene;

/// Round-trip error above which an occlusion-aware oracle drops a pixel.
pub const OCCLUSION_TOLERANCE: f64 = 0.5;

/// Anything that can produce a prior flow for `(view, iteration)`.
pub trait FlowPrior {
    fn prior_flow(
        &self,
        view: usize,
        iter: usize,
        input: &Camera,
        sampled: &Camera,
    ) -> Result<FlowField>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    GroundTruth,
    /// I.i.d. Gaussian noise of this standard deviation in pixels per component.
    Noisy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub kind: OracleKind,
    pub occlusion_aware: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: OracleKind::Noisy(0.5),
            occlusion_aware: false,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if let OracleKind::Noisy(s) = self.kind {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter("oracle noise must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Flow from ground-truth geometry. Noise is keyed by `(seed, iter, view)`.
#[derive(Debug, Clone)]
pub struct GeometryOracle {
    pub config: OracleConfig,
    pub seed: u64,
    scene: Option<Scene>,
    gt_depth: Vec<DepthMap>,
}

impl GeometryOracle {
    /// `gt_depth[v]` is the ground truth depth of training view `v`. The
    /// analytic scene is only needed for occlusion checks.
    pub fn new(
        config: OracleConfig,
        seed: u64,
        gt_depth: Vec<DepthMap>,
        scene: Option<Scene>,
    ) -> Result<Self> {
        config.validate()?;
        if config.occlusion_aware && scene.is_none() {
            return Err(Error::InvalidParameter(
                "occlusion-aware oracle needs the scene geometry",
            ));
        }
        Ok(Self {
            config,
            seed,
            scene,
            gt_depth,
        })
    }

    pub fn gt_depth(&self, view: usize) -> Result<&DepthMap> {
        self.gt_depth
            .get(view)
            .ok_or(Error::MissingGroundTruth(view))
    }

    /// Noise-free flow, with occluded pixels dropped when configured.
    pub fn clean_flow(&self, view: usize, input: &Camera, sampled: &Camera) -> Result<FlowField> {
        let depth = self.gt_depth(view)?;
        let mut flow = radiance_flow(depth, None, input, sampled)?;
        if let (true, Some(scene)) = (self.config.occlusion_aware, &self.scene) {
            let back = radiance_flow(&scene.depth(sampled), None, sampled, input)?;
            let err = round_trip_error(&flow, &back);
            for (v, e) in flow.valid.as_mut_slice().iter_mut().zip(err.as_slice()) {
                if !(*e <= OCCLUSION_TOLERANCE) {
                    *v = false;
                }
            }
        }
        Ok(flow)
    }
}

impl FlowPrior for GeometryOracle {
    fn prior_flow(
        &self,
        view: usize,
        iter: usize,
        input: &Camera,
        sampled: &Camera,
    ) -> Result<FlowField> {
        let mut flow = self.clean_flow(view, input, sampled)?;
        if let OracleKind::Noisy(sigma) = self.config.kind {
            if sigma > 0.0 {
                let normal =
                    Normal::new(0.0, sigma).map_err(|_| Error::InvalidParameter("oracle noise"))?;
                let mut rng = stream(
                    self.seed,
                    Stream::OracleNoise {
                        iter: iter as u64,
                        view: view as u64,
                    },
                );
                for f in flow.vectors.as_mut_slice() {
                    f[0] += normal.sample(&mut rng);
                    f[1] += normal.sample(&mut rng);
                }
            }
        }
        Ok(flow)
    }
}
