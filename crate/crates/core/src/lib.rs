//! Pure algorithmic core: camera geometry, a differentiable Gaussian
//! splatting renderer, analytic depth-induced optical flow, view sampling,
//! losses, metrics, a synthetic scene harness and the training step.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod flow;
pub mod gaussian;
pub mod geometry;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod render;
pub mod rng;
pub mod sampling;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use gaussian::{GaussianCloud, GaussianPoint};
pub use geometry::{Camera, Pixel, RigidTransform, Vec3};
pub use grid::{DepthMap, Grid, Mask, RgbImage};
pub use render::{
    render, render_backward, render_forward, RenderOutput, RenderSettings, RenderState,
};
