//! Optical flow induced by depth and relative camera motion.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{relative_transform, Camera, Pixel, Vec3, MIN_DEPTH};
use crate::grid::{DepthMap, Grid, Mask};

/// Per-pixel displacement `(du, dv)` in pixels with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub vectors: Grid<[f64; 2]>,
    pub valid: Mask,
}

impl FlowField {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            vectors: Grid::filled(width, height, [0.0; 2]),
            valid: Grid::filled(width, height, false),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.vectors.shape()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|v| **v).count()
    }

    /// Mean vector magnitude over valid pixels.
    pub fn mean_magnitude(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (f, v) in self.vectors.as_slice().iter().zip(self.valid.as_slice()) {
            if *v {
                sum += (f[0] * f[0] + f[1] * f[1]).sqrt();
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Bilinear lookup at a continuous pixel position; `None` unless all four
    /// neighbours are valid.
    pub fn sample(&self, px: Pixel) -> Option<[f64; 2]> {
        let (w, h) = self.shape();
        if !(px.u >= 0.0 && px.v >= 0.0) {
            return None;
        }
        let x0 = px.u.floor() as usize;
        let y0 = px.v.floor() as usize;
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        if x0 >= w || y0 >= h {
            return None;
        }
        let (fx, fy) = (px.u - x0 as f64, px.v - y0 as f64);
        let mut out = [0.0; 2];
        for (x, y, wgt) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ] {
            if !*self.valid.get(x, y) {
                return None;
            }
            let f = self.vectors.get(x, y);
            out[0] += wgt * f[0];
            out[1] += wgt * f[1];
        }
        Some(out)
    }
}

#[inline]
fn usable_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Flow from view `m` to view `n`: each pixel of `m` is lifted with its depth,
/// moved into camera `n` and reprojected. Pixels without usable depth, masked
/// out, landing behind camera `n` or outside its image are invalid.
pub fn radiance_flow(
    depth: &DepthMap,
    mask: Option<&Mask>,
    cam_m: &Camera,
    cam_n: &Camera,
) -> Result<FlowField> {
    let shape = cam_m.shape();
    depth.ensure_shape(shape)?;
    if let Some(m) = mask {
        m.ensure_shape(shape)?;
    }
    let rel = relative_transform(&cam_m.pose, &cam_n.pose);
    let mut out = FlowField::invalid(shape.0, shape.1);
    for y in 0..shape.1 {
        for x in 0..shape.0 {
            let d = *depth.get(x, y);
            if !usable_depth(d) || mask.is_some_and(|m| !*m.get(x, y)) {
                continue;
            }
            let src = Pixel::new(x as f64, y as f64);
            let p = rel.apply(&(cam_m.ray(src) * d));
            let Ok((dst, _)) = cam_n.project_camera_frame(&p) else {
                continue;
            };
            if !cam_n.contains(dst) {
                continue;
            }
            *out.vectors.get_mut(x, y) = [dst.u - src.u, dst.v - src.v];
            *out.valid.get_mut(x, y) = true;
        }
    }
    Ok(out)
}

/// Pulls a gradient with respect to [`radiance_flow`]'s output back to the
/// source depth map. Invalid pixels receive zero.
pub fn radiance_flow_backward(
    depth: &DepthMap,
    flow: &FlowField,
    cam_m: &Camera,
    cam_n: &Camera,
    grad_flow: &Grid<[f64; 2]>,
) -> Result<DepthMap> {
    let shape = cam_m.shape();
    depth.ensure_shape(shape)?;
    flow.vectors.ensure_shape(shape)?;
    grad_flow.ensure_shape(shape)?;
    let rel = relative_transform(&cam_m.pose, &cam_n.pose);
    let mut out = Grid::filled(shape.0, shape.1, 0.0);
    for y in 0..shape.1 {
        for x in 0..shape.0 {
            if !*flow.valid.get(x, y) {
                continue;
            }
            let g = grad_flow.get(x, y);
            if g[0] == 0.0 && g[1] == 0.0 {
                continue;
            }
            let ray = cam_m.ray(Pixel::new(x as f64, y as f64));
            let d = *depth.get(x, y);
            let p = rel.apply(&(ray * d));
            // ∂p/∂d
            let a: Vec3 = rel.rotation * ray;
            let iz2 = 1.0 / (p.z * p.z);
            let du = cam_n.fx * (a.x * p.z - p.x * a.z) * iz2;
            let dv = cam_n.fy * (a.y * p.z - p.y * a.z) * iz2;
            *out.get_mut(x, y) = g[0] * du + g[1] * dv;
        }
    }
    Ok(out)
}

/// Closed-form flow `(f_x t₁ / D, f_y t₂ / D)` for a pure in-plane
/// translation `t` of the camera-frame points. Validity follows
/// [`radiance_flow`].
pub fn pure_translation_flow(depth: &DepthMap, cam: &Camera, t: &Vec3) -> Result<FlowField> {
    if t.z.abs() > 1e-12 {
        return Err(Error::NonZeroT3(t.z));
    }
    let shape = cam.shape();
    depth.ensure_shape(shape)?;
    let mut out = FlowField::invalid(shape.0, shape.1);
    for y in 0..shape.1 {
        for x in 0..shape.0 {
            let d = *depth.get(x, y);
            if !usable_depth(d) || d <= MIN_DEPTH {
                continue;
            }
            let f = [cam.fx * t.x / d, cam.fy * t.y / d];
            if !cam.contains(Pixel::new(x as f64 + f[0], y as f64 + f[1])) {
                continue;
            }
            *out.vectors.get_mut(x, y) = f;
            *out.valid.get_mut(x, y) = true;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointError {
    pub mean: f64,
    /// Per-pixel endpoint error; NaN where either field is invalid.
    pub map: Grid<f64>,
    pub count: usize,
}

/// Per-pixel Euclidean distance between two flows over jointly valid pixels.
pub fn endpoint_error(a: &FlowField, b: &FlowField) -> Result<EndpointError> {
    b.vectors.ensure_shape(a.shape())?;
    let (w, h) = a.shape();
    let mut map = Grid::filled(w, h, f64::NAN);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..w * h {
        if a.valid.as_slice()[i] && b.valid.as_slice()[i] {
            let (fa, fb) = (a.vectors.as_slice()[i], b.vectors.as_slice()[i]);
            let e = ((fa[0] - fb[0]).powi(2) + (fa[1] - fb[1]).powi(2)).sqrt();
            map.as_mut_slice()[i] = e;
            sum += e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(EndpointError {
        mean: sum / count as f64,
        map,
        count,
    })
}

/// Forward–backward consistency: `|F_ab(x) + F_ba(x + F_ab(x))|` with a
/// bilinear lookup of `F_ba`; NaN where either lookup is invalid.
pub fn round_trip_error(forward: &FlowField, backward: &FlowField) -> Grid<f64> {
    let (w, h) = forward.shape();
    Grid::from_fn(w, h, |x, y| {
        if !*forward.valid.get(x, y) {
            return f64::NAN;
        }
        let f = forward.vectors.get(x, y);
        match backward.sample(Pixel::new(x as f64 + f[0], y as f64 + f[1])) {
            Some(b) => ((f[0] + b[0]).powi(2) + (f[1] + b[1]).powi(2)).sqrt(),
            None => f64::NAN,
        }
    })
}
