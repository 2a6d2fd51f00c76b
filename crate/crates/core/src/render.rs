//! Differentiable front-to-back splatting of colour and normalised depth.
//!
//! Every Gaussian is evaluated exactly at every pixel centre inside its
//! support box; tiles only bucket candidates and never change the result.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Vector2};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gaussian::{project_gaussian, GaussianCloud, ProjectedGaussian, ScreenGrad};
use crate::geometry::Camera;
use crate::grid::{DepthMap, Grid, RgbImage};

/// Contributions below this blending weight are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Blending weights are clamped to this value.
pub const ALPHA_MAX: f64 = 0.999;
/// Compositing stops once transmittance falls below this value.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Pixels with less accumulated opacity than this are background.
pub const ALPHA_ACC_MIN: f64 = 1e-4;

const TILE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Depth reported for background pixels.
    pub background_depth: f64,
    /// Gaussians whose centre is closer than this are skipped.
    pub near: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background_depth: 100.0,
            near: 0.2,
        }
    }
}

/// Centres further than this fraction of the image size outside the frame
/// are culled; their local affine projection is unreliable.
const GUARD_BAND: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: RgbImage,
    pub depth: DepthMap,
    /// Sum of blending weights per pixel.
    pub alpha_acc: Grid<f64>,
    /// Hash of every (pixel, Gaussian, clamped) contribution in compositing
    /// order. Changes whenever the discrete structure of the render changes.
    pub signature: u64,
}

impl RenderOutput {
    /// Pixels that received any coverage.
    pub fn foreground(&self) -> Grid<bool> {
        self.alpha_acc.map(|&a| a >= ALPHA_ACC_MIN)
    }

    /// Mean rendered depth over foreground pixels.
    pub fn mean_depth(&self) -> Option<f64> {
        let (sum, n) = self
            .depth
            .as_slice()
            .iter()
            .zip(self.alpha_acc.as_slice())
            .filter(|(_, &a)| a >= ALPHA_ACC_MIN)
            .fold((0.0, 0usize), |(s, n), (&d, _)| (s + d, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

#[derive(Debug, Clone)]
struct Splat {
    index: usize,
    proj: ProjectedGaussian,
    /// Inclusive pixel bounds `[x0, x1] × [y0, y1]`.
    bounds: [usize; 4],
}

/// Forward-pass state consumed by [`render_backward`].
#[derive(Debug, Clone)]
pub struct RenderState {
    splats: Vec<Splat>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    fingerprint: u64,
    settings: RenderSettings,
}

impl RenderState {
    /// Number of Gaussians that reached the image.
    pub fn visible(&self) -> usize {
        self.splats.len()
    }
}

#[inline]
fn mix(h: u64, v: u64) -> u64 {
    (h ^ v).wrapping_mul(0x100_0000_01b3).rotate_left(29)
}

fn fingerprint(cloud: &GaussianCloud, cam: &Camera, settings: &RenderSettings) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for p in cloud.points() {
        for v in p.to_params() {
            h = mix(h, v.to_bits());
        }
    }
    let c = cam;
    for v in [
        c.fx,
        c.fy,
        c.cx,
        c.cy,
        settings.background_depth,
        settings.near,
    ] {
        h = mix(h, v.to_bits());
    }
    for v in c.pose.rotation.iter().chain(c.pose.translation.iter()) {
        h = mix(h, v.to_bits());
    }
    mix(mix(h, c.width as u64), c.height as u64)
}

fn prepare(cloud: &GaussianCloud, cam: &Camera, settings: &RenderSettings) -> Result<RenderState> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (w, h) = cam.shape();
    let mut splats = Vec::new();
    for (index, g) in cloud.points().iter().enumerate() {
        let proj = match project_gaussian(g, cam) {
            Ok(p) => p,
            Err(Error::BehindCamera) => continue,
            Err(e) => return Err(e),
        };
        if !(proj.opacity * 255.0 > 1.0) || proj.depth < settings.near {
            continue;
        }
        let (gx, gy) = (GUARD_BAND * w as f64, GUARD_BAND * h as f64);
        if proj.center.x < -gx
            || proj.center.x > w as f64 + gx
            || proj.center.y < -gy
            || proj.center.y > h as f64 + gy
        {
            continue;
        }
        // Support where opacity · exp(-q/2) ≥ ALPHA_MIN.
        let q_max = 2.0 * (proj.opacity / ALPHA_MIN).ln();
        let rx = (q_max * proj.cov2d[(0, 0)]).sqrt();
        let ry = (q_max * proj.cov2d[(1, 1)]).sqrt();
        let (x0, x1) = ((proj.center.x - rx).ceil(), (proj.center.x + rx).floor());
        let (y0, y1) = ((proj.center.y - ry).ceil(), (proj.center.y + ry).floor());
        if !(x1 >= 0.0 && y1 >= 0.0 && x0 <= (w - 1) as f64 && y0 <= (h - 1) as f64) {
            continue;
        }
        let bounds = [
            x0.max(0.0) as usize,
            x1.min((w - 1) as f64) as usize,
            y0.max(0.0) as usize,
            y1.min((h - 1) as f64) as usize,
        ];
        splats.push(Splat {
            index,
            proj,
            bounds,
        });
    }
    splats.sort_by(|a, b| {
        a.proj
            .depth
            .total_cmp(&b.proj.depth)
            .then(a.index.cmp(&b.index))
    });

    let tiles_x = w.div_ceil(TILE);
    let tiles_y = h.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in splats.iter().enumerate() {
        let [x0, x1, y0, y1] = s.bounds;
        for ty in y0 / TILE..=y1 / TILE {
            for tx in x0 / TILE..=x1 / TILE {
                tiles[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    Ok(RenderState {
        splats,
        tiles,
        tiles_x,
        fingerprint: fingerprint(cloud, cam, settings),
        settings: *settings,
    })
}

#[derive(Debug, Clone, Copy)]
struct Contribution {
    splat: u32,
    alpha: f64,
    /// `exp(-q/2)` before the opacity factor.
    falloff: f64,
    delta: Vector2<f64>,
    clamped: bool,
    transmittance: f64,
}

/// Composites one pixel, calling `visit` for every contribution in order.
/// Returns the final transmittance.
#[inline]
fn composite_pixel(
    state: &RenderState,
    x: usize,
    y: usize,
    mut visit: impl FnMut(&Contribution),
) -> f64 {
    let tile = &state.tiles[(y / TILE) * state.tiles_x + x / TILE];
    let px = Vector2::new(x as f64, y as f64);
    let mut t = 1.0;
    for &k in tile {
        let s = &state.splats[k as usize];
        let [x0, x1, y0, y1] = s.bounds;
        if x < x0 || x > x1 || y < y0 || y > y1 {
            continue;
        }
        let delta = px - s.proj.center;
        let c = &s.proj.conic;
        let q = c[(0, 0)] * delta.x * delta.x
            + 2.0 * c[(0, 1)] * delta.x * delta.y
            + c[(1, 1)] * delta.y * delta.y;
        let falloff = (-0.5 * q).exp();
        let raw = s.proj.opacity * falloff;
        if raw < ALPHA_MIN {
            continue;
        }
        let clamped = raw > ALPHA_MAX;
        let alpha = if clamped { ALPHA_MAX } else { raw };
        visit(&Contribution {
            splat: k,
            alpha,
            falloff,
            delta,
            clamped,
            transmittance: t,
        });
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_MIN {
            break;
        }
    }
    t
}

/// Renders colour, normalised depth and accumulated opacity.
pub fn render_forward(
    cloud: &GaussianCloud,
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<(RenderOutput, RenderState)> {
    let state = prepare(cloud, cam, settings)?;
    let (w, h) = cam.shape();
    let mut color = Grid::filled(w, h, [0.0; 3]);
    let mut depth = Grid::filled(w, h, settings.background_depth);
    let mut alpha_acc = Grid::filled(w, h, 0.0);
    let mut signature = 0u64;
    for y in 0..h {
        for x in 0..w {
            let mut c = [0.0; 3];
            let mut d = 0.0;
            let mut a = 0.0;
            let mut sig = mix(0, (y * w + x) as u64);
            composite_pixel(&state, x, y, |ct| {
                let s = &state.splats[ct.splat as usize];
                let weight = ct.alpha * ct.transmittance;
                for k in 0..3 {
                    c[k] += weight * s.proj.color[k];
                }
                d += weight * s.proj.depth;
                a += weight;
                sig = mix(sig, (s.index as u64) << 1 | ct.clamped as u64);
            });
            signature = signature.wrapping_add(sig);
            *color.get_mut(x, y) = c;
            *alpha_acc.get_mut(x, y) = a;
            if a >= ALPHA_ACC_MIN {
                *depth.get_mut(x, y) = d / a;
            }
        }
    }
    Ok((
        RenderOutput {
            color,
            depth,
            alpha_acc,
            signature,
        },
        state,
    ))
}

pub fn render(
    cloud: &GaussianCloud,
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    render_forward(cloud, cam, settings).map(|(out, _)| out)
}

/// Accumulates `∂L/∂params` into the cloud's gradient buffer given the
/// upstream gradients of the colour and depth images.
pub fn render_backward(
    cloud: &mut GaussianCloud,
    cam: &Camera,
    state: &RenderState,
    grad_color: &RgbImage,
    grad_depth: &DepthMap,
) -> Result<()> {
    if state.fingerprint != fingerprint(cloud, cam, &state.settings)
        || state.splats.iter().any(|s| s.index >= cloud.len())
    {
        return Err(Error::StateMismatch);
    }
    let shape = cam.shape();
    grad_color.ensure_shape(shape)?;
    grad_depth.ensure_shape(shape)?;

    let mut screen = vec![ScreenGrad::default(); state.splats.len()];
    let mut list: Vec<Contribution> = Vec::new();
    for y in 0..shape.1 {
        for x in 0..shape.0 {
            let gc = *grad_color.get(x, y);
            let mut gd = *grad_depth.get(x, y);
            if gc == [0.0; 3] && gd == 0.0 {
                continue;
            }
            list.clear();
            composite_pixel(state, x, y, |c| list.push(*c));
            if list.is_empty() {
                continue;
            }
            let mut acc = 0.0;
            let mut num = 0.0;
            for c in &list {
                let w = c.alpha * c.transmittance;
                acc += w;
                num += w * state.splats[c.splat as usize].proj.depth;
            }
            if acc < ALPHA_ACC_MIN {
                gd = 0.0;
            }
            let depth = if acc > 0.0 { num / acc } else { 0.0 };
            let inv_acc = if acc > 0.0 { 1.0 / acc } else { 0.0 };

            // suffix = Σ_{k>i} w_k ∂L/∂w_k
            let mut suffix = 0.0;
            for c in list.iter().rev() {
                let s = &state.splats[c.splat as usize];
                let sg = &mut screen[c.splat as usize];
                let w = c.alpha * c.transmittance;
                let col = &s.proj.color;
                let d_w = gc[0] * col[0]
                    + gc[1] * col[1]
                    + gc[2] * col[2]
                    + gd * (s.proj.depth - depth) * inv_acc;
                for k in 0..3 {
                    sg.color[k] += gc[k] * w;
                }
                sg.depth += gd * w * inv_acc;
                let d_alpha = c.transmittance * d_w - suffix / (1.0 - c.alpha);
                suffix += w * d_w;
                if c.clamped {
                    continue;
                }
                sg.opacity += d_alpha * c.falloff;
                // α = o·exp(-q/2)
                let d_q = -0.5 * c.alpha * d_alpha;
                let dl = c.delta;
                sg.conic += Matrix2::new(dl.x * dl.x, dl.x * dl.y, dl.x * dl.y, dl.y * dl.y) * d_q;
                sg.center += s.proj.conic * dl * (-2.0 * d_q);
            }
        }
    }

    let grads = cloud.grads_mut();
    for (s, g) in state.splats.iter().zip(&screen) {
        if !g.is_zero() {
            s.proj.backward(cam, g, &mut grads[s.index]);
        }
    }
    Ok(())
}
