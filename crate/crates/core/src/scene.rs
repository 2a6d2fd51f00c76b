//! Synthetic scenes with analytic ground truth, and initial clouds for them.
//!
//! Geometry is a set of axis-aligned textured rectangles. Ground truth colour
//! and depth come from ray casting against that geometry, never from the
//! splatting renderer.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, GaussianPoint};
use crate::geometry::{Camera, Pixel, RigidTransform, Vec3};
use crate::grid::{DepthMap, Grid, RgbImage};
use crate::rng::{stream, Stream};

pub const ARC: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneKind {
    TexturedRoom,
    Plane,
    Box,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::TexturedRoom, SceneKind::Plane, SceneKind::Box];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::TexturedRoom => "textured_room",
            SceneKind::Plane => "plane",
            SceneKind::Box => "box",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub kind: SceneKind,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Colour samples per pixel side.
    pub supersample: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            kind: SceneKind::TexturedRoom,
            seed: 0,
            width: 64,
            height: 64,
            n_train: 12,
            n_test: 4,
            supersample: 2,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 {
            return Err(Error::InvalidParameter("need at least two training views"));
        }
        if self.width == 0 || self.height == 0 || self.supersample == 0 {
            return Err(Error::InvalidParameter(
                "image size and supersampling must be positive",
            ));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        0.85 * self.width as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Wave {
    freq: [f64; 2],
    phase: [f64; 3],
    amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Texture {
    base: [f64; 3],
    waves: Vec<Wave>,
}

impl Texture {
    fn random<R: Rng>(rng: &mut R) -> Self {
        let base = core::array::from_fn(|_| rng.random_range(0.25..0.75));
        let waves = (0..4)
            .map(|k| {
                let f = 0.8 * 1.8f64.powi(k) * rng.random_range(0.8..1.25);
                let dir: f64 = rng.random_range(0.0..PI);
                Wave {
                    freq: [f * dir.cos(), f * dir.sin()],
                    phase: core::array::from_fn(|_| rng.random_range(0.0..TAU)),
                    amp: 0.12,
                }
            })
            .collect();
        Self { base, waves }
    }

    fn eval(&self, a: f64, b: f64) -> [f64; 3] {
        let mut c = self.base;
        for w in &self.waves {
            let arg = TAU * (w.freq[0] * a + w.freq[1] * b);
            for (k, ch) in c.iter_mut().enumerate() {
                *ch += w.amp * (arg + w.phase[k]).sin();
            }
        }
        c.map(|v| v.clamp(0.02, 0.98))
    }
}

/// Axis-aligned rectangle `{p : p[axis] = offset}` bounded on the other axes.
#[derive(Debug, Clone, PartialEq)]
struct Face {
    axis: usize,
    offset: f64,
    lo: [f64; 2],
    hi: [f64; 2],
    texture: usize,
}

impl Face {
    fn others(&self) -> [usize; 2] {
        [(self.axis + 1) % 3, (self.axis + 2) % 3]
    }

    fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        if d[self.axis].abs() < 1e-12 {
            return None;
        }
        let t = (self.offset - o[self.axis]) / d[self.axis];
        if !(t > 1e-9) {
            return None;
        }
        let p = o + d * t;
        let inside = self
            .others()
            .iter()
            .enumerate()
            .all(|(k, &ax)| p[ax] >= self.lo[k] && p[ax] <= self.hi[k]);
        inside.then_some(t)
    }
}

fn box_faces(lo: [f64; 3], hi: [f64; 3], first_texture: usize, faces: &mut Vec<Face>) {
    for axis in 0..3 {
        let o = [(axis + 1) % 3, (axis + 2) % 3];
        for (side, offset) in [lo[axis], hi[axis]].into_iter().enumerate() {
            faces.push(Face {
                axis,
                offset,
                lo: [lo[o[0]], lo[o[1]]],
                hi: [hi[o[0]], hi[o[1]]],
                texture: first_texture + 2 * axis + side,
            });
        }
    }
}

/// Closest surface along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub color: [f64; 3],
}

/// Analytic scene geometry with procedural textures.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub params: SceneParams,
    faces: Vec<Face>,
    textures: Vec<Texture>,
    pub background: [f64; 3],
}

impl Scene {
    pub fn new(params: SceneParams) -> Result<Self> {
        params.validate()?;
        let mut faces = Vec::new();
        match params.kind {
            SceneKind::TexturedRoom => {
                box_faces([-2.5, -1.0, -2.5], [2.5, 1.6, 2.5], 0, &mut faces);
            }
            SceneKind::Plane => faces.push(Face {
                axis: 2,
                offset: 2.0,
                lo: [-1e3, -1e3],
                hi: [1e3, 1e3],
                texture: 0,
            }),
            SceneKind::Box => box_faces([-0.5; 3], [0.5; 3], 0, &mut faces),
        }
        let mut rng = stream(params.seed, Stream::SceneGen);
        let n_tex = faces.iter().map(|f| f.texture + 1).max().unwrap_or(0);
        let textures = (0..n_tex).map(|_| Texture::random(&mut rng)).collect();
        Ok(Self {
            params,
            faces,
            textures,
            background: [0.1; 3],
        })
    }

    pub fn trace(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let (t, face) = self
            .faces
            .iter()
            .filter_map(|f| f.intersect(origin, dir).map(|t| (t, f)))
            .min_by(|a, b| a.0.total_cmp(&b.0))?;
        let point = origin + dir * t;
        let [a, b] = face.others();
        Some(Hit {
            t,
            point,
            color: self.textures[face.texture].eval(point[a], point[b]),
        })
    }

    /// World-space ray through `px` with unit camera-frame z, so the hit
    /// parameter is the camera-frame depth.
    fn camera_ray(cam: &Camera, px: Pixel) -> (Vec3, Vec3) {
        let inv = cam.pose.inverse();
        (inv.translation, inv.rotation * cam.ray(px))
    }

    pub fn hit_at(&self, cam: &Camera, px: Pixel) -> Option<Hit> {
        let (o, d) = Self::camera_ray(cam, px);
        self.trace(&o, &d)
    }

    /// Camera-frame depth per pixel centre; `+∞` where the ray escapes.
    pub fn depth(&self, cam: &Camera) -> DepthMap {
        Grid::from_fn(cam.width, cam.height, |x, y| {
            self.hit_at(cam, Pixel::new(x as f64, y as f64))
                .map_or(f64::INFINITY, |h| h.t)
        })
    }

    /// Supersampled colour.
    pub fn color(&self, cam: &Camera) -> RgbImage {
        let s = self.params.supersample;
        let inv = 1.0 / (s * s) as f64;
        Grid::from_fn(cam.width, cam.height, |x, y| {
            let mut acc = [0.0; 3];
            for j in 0..s {
                for i in 0..s {
                    let px = Pixel::new(
                        x as f64 + (i as f64 + 0.5) / s as f64 - 0.5,
                        y as f64 + (j as f64 + 0.5) / s as f64 - 0.5,
                    );
                    let c = self.hit_at(cam, px).map_or(self.background, |h| h.color);
                    for k in 0..3 {
                        acc[k] += c[k] * inv;
                    }
                }
            }
            acc
        })
    }

    /// Cameras for all views, in arc order.
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let p = &self.params;
        let n = p.n_train + p.n_test;
        let up = Vec3::new(0.0, 1.0, 0.0);
        (0..n)
            .map(|k| {
                let s = if n > 1 {
                    k as f64 / (n - 1) as f64
                } else {
                    0.5
                };
                let (eye, target) = match p.kind {
                    SceneKind::TexturedRoom => {
                        let th = (-ARC + 2.0 * ARC * s).to_radians();
                        (
                            Vec3::new(1.6 * th.sin(), 0.35, 1.6 * th.cos()),
                            Vec3::new(0.0, -0.5, 0.0),
                        )
                    }
                    SceneKind::Plane => {
                        let x = -0.5 + s;
                        (Vec3::new(x, 0.0, 0.0), Vec3::new(x, 0.0, 1.0))
                    }
                    SceneKind::Box => {
                        let th = (-60.0 + 120.0 * s).to_radians();
                        (
                            Vec3::new(2.5 * th.sin(), 0.8, 2.5 * th.cos()),
                            Vec3::zeros(),
                        )
                    }
                };
                Camera::centered(
                    p.focal(),
                    p.width,
                    p.height,
                    RigidTransform::look_at(&eye, &target, &up)?,
                )
            })
            .collect()
    }

    /// Arc indices of held-out views, spread evenly between training views.
    pub fn test_indices(&self) -> Vec<usize> {
        let n = self.params.n_train + self.params.n_test;
        let m = self.params.n_test;
        (0..m)
            .map(|j| ((j as f64 + 0.5) * n as f64 / m as f64) as usize)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub id: usize,
    pub split: Split,
    pub camera: Camera,
    pub color: RgbImage,
    pub depth: DepthMap,
}

/// A scene with its rendered ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub views: Vec<View>,
    pub near: f64,
    pub far: f64,
}

impl GeneratedScene {
    pub fn generate(params: SceneParams) -> Result<Self> {
        let scene = Scene::new(params)?;
        let test = scene.test_indices();
        let views: Vec<View> = scene
            .cameras()?
            .into_iter()
            .enumerate()
            .map(|(id, camera)| View {
                id,
                split: if test.contains(&id) {
                    Split::Test
                } else {
                    Split::Train
                },
                color: scene.color(&camera),
                depth: scene.depth(&camera),
                camera,
            })
            .collect();
        let finite = views
            .iter()
            .flat_map(|v| v.depth.as_slice().iter().copied())
            .filter(|d| d.is_finite());
        let (near, far) = finite.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        });
        if !near.is_finite() {
            return Err(Error::InvalidParameter("no view sees any surface"));
        }
        Ok(Self {
            scene,
            views,
            near,
            far,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &View> {
        self.views.iter().filter(move |v| v.split == split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStrategy {
    /// Surface samples seen by the training views, jittered by `sigma_pos`.
    GtSurfaceNoisy { sigma_pos: f64 },
    /// Uniform in the bounding box of the visible surface.
    RandomBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloaterSpec {
    pub count: usize,
    pub opacity_range: (f64, f64),
    /// Isotropic scale range in world units.
    pub scale_range: (f64, f64),
    /// Position along a training ray as a fraction of the surface depth.
    pub depth_fraction: (f64, f64),
}

impl Default for FloaterSpec {
    fn default() -> Self {
        Self {
            count: 40,
            opacity_range: (0.6, 0.9),
            scale_range: (0.04, 0.08),
            depth_fraction: (0.3, 0.7),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub strategy: InitStrategy,
    pub n_points: usize,
    pub floaters: FloaterSpec,
    pub surface_opacity: f64,
    /// Surface scales are this multiple of the neighbour spacing.
    pub scale_factor: f64,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            strategy: InitStrategy::GtSurfaceNoisy { sigma_pos: 0.03 },
            n_points: 1500,
            floaters: FloaterSpec::default(),
            surface_opacity: 0.9,
            scale_factor: 0.45,
            seed: 0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidParameter("n_points must be at least 1"));
        }
        if let InitStrategy::GtSurfaceNoisy { sigma_pos } = self.strategy {
            if !(sigma_pos >= 0.0 && sigma_pos.is_finite()) {
                return Err(Error::InvalidParameter("sigma_pos must be non-negative"));
            }
        }
        let f = &self.floaters;
        let in_unit = |(a, b): (f64, f64)| 0.0 < a && a <= b && b < 1.0;
        if !in_unit(f.opacity_range) || !in_unit(f.depth_fraction) {
            return Err(Error::InvalidParameter("floater ranges must lie in (0, 1)"));
        }
        if !(0.0 < f.scale_range.0 && f.scale_range.0 <= f.scale_range.1) {
            return Err(Error::InvalidParameter(
                "floater scale range must be positive",
            ));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(Error::InvalidParameter("scale factor must be positive"));
        }
        if !(0.0 < self.surface_opacity && self.surface_opacity < 1.0) {
            return Err(Error::InvalidParameter(
                "surface opacity must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

fn clamp_color(c: [f64; 3]) -> [f64; 3] {
    c.map(|v| v.clamp(0.02, 0.98))
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Root mean squared distance to the three nearest neighbours of each point.
pub fn neighbour_spacing(points: &[Vec3]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = [f64::INFINITY; 3];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (p - q).norm_squared();
                if d < best[2] {
                    best[2] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let found: Vec<f64> = best.into_iter().filter(|d| d.is_finite()).collect();
            if found.is_empty() {
                0.1
            } else {
                (found.iter().sum::<f64>() / found.len() as f64)
                    .sqrt()
                    .max(1e-4)
            }
        })
        .collect()
}

/// A random hit on a training view's visible surface.
fn surface_sample<R: Rng>(
    gen: &GeneratedScene,
    train: &[&View],
    rng: &mut R,
) -> Option<(Hit, usize)> {
    for _ in 0..64 {
        let v = rng.random_range(0..train.len());
        let cam = &train[v].camera;
        let px = Pixel::new(
            rng.random_range(-0.5..cam.width as f64 - 0.5),
            rng.random_range(-0.5..cam.height as f64 - 0.5),
        );
        if let Some(h) = gen.scene.hit_at(cam, px) {
            return Some((h, v));
        }
    }
    None
}

/// Builds the optimisable cloud for a scene. Floaters are appended after the
/// surface points and come from their own random stream.
pub fn init_cloud(gen: &GeneratedScene, cfg: &InitConfig) -> Result<GaussianCloud> {
    cfg.validate()?;
    let train: Vec<&View> = gen.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::InvalidParameter("scene has no training views"));
    }
    let mut rng = stream(cfg.seed, Stream::InitCloud);
    let mut centres = Vec::with_capacity(cfg.n_points);
    let mut colors = Vec::with_capacity(cfg.n_points);
    match cfg.strategy {
        InitStrategy::GtSurfaceNoisy { sigma_pos } => {
            for _ in 0..cfg.n_points {
                let (hit, _) = surface_sample(gen, &train, &mut rng)
                    .ok_or(Error::InvalidParameter("training views see no surface"))?;
                let noise = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                centres.push(hit.point + noise * sigma_pos);
                colors.push(hit.color);
            }
        }
        InitStrategy::RandomBox => {
            let mut lo = Vec3::repeat(f64::INFINITY);
            let mut hi = Vec3::repeat(f64::NEG_INFINITY);
            for _ in 0..256 {
                if let Some((h, _)) = surface_sample(gen, &train, &mut rng) {
                    lo = lo.inf(&h.point);
                    hi = hi.sup(&h.point);
                }
            }
            if !lo.x.is_finite() {
                return Err(Error::InvalidParameter("training views see no surface"));
            }
            for _ in 0..cfg.n_points {
                centres.push(Vec3::from_fn(|k, _| range(&mut rng, (lo[k], hi[k]))));
                colors.push(core::array::from_fn(|_| rng.random_range(0.2..0.8)));
            }
        }
    }
    let spacing = neighbour_spacing(&centres);
    let mut points: Vec<GaussianPoint> = centres
        .iter()
        .zip(&colors)
        .zip(&spacing)
        .map(|((c, col), s)| {
            GaussianPoint::isotropic(
                *c,
                s * cfg.scale_factor,
                cfg.surface_opacity,
                clamp_color(*col),
            )
        })
        .collect();

    let f = &cfg.floaters;
    if f.count > 0 {
        let mean = mean_color(train.iter().map(|v| &v.color));
        let mut frng = stream(cfg.seed, Stream::Floaters);
        let mut placed = 0;
        let mut attempts = 0;
        while placed < f.count {
            attempts += 1;
            if attempts > 1000 * f.count {
                return Err(Error::InvalidParameter("could not place floaters"));
            }
            let view = train[frng.random_range(0..train.len())];
            let cam = &view.camera;
            // Keep floaters away from the image border so they are seen.
            let margin = 0.15;
            let px = Pixel::new(
                range(&mut frng, (margin, 1.0 - margin)) * (cam.width as f64 - 1.0),
                range(&mut frng, (margin, 1.0 - margin)) * (cam.height as f64 - 1.0),
            );
            let frac = range(&mut frng, f.depth_fraction);
            let opacity = range(&mut frng, f.opacity_range);
            let scale = range(&mut frng, f.scale_range);
            let Some(hit) = gen.scene.hit_at(cam, px) else {
                continue;
            };
            let world = cam.pose.inverse().apply(&cam.unproject(px, hit.t * frac)?);
            points.push(GaussianPoint::isotropic(
                world,
                scale,
                opacity,
                clamp_color(mean),
            ));
            placed += 1;
        }
    }
    Ok(GaussianCloud::new(points))
}

fn mean_color<'a>(images: impl Iterator<Item = &'a RgbImage>) -> [f64; 3] {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for img in images {
        for p in img.as_slice() {
            for k in 0..3 {
                acc[k] += p[k];
            }
            n += 1;
        }
    }
    acc.map(|v| v / n.max(1) as f64)
}

/// Indices of the floaters in a cloud built by [`init_cloud`].
pub fn floater_range(cfg: &InitConfig) -> core::ops::Range<usize> {
    cfg.n_points..cfg.n_points + cfg.floaters.count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{radiance_flow, round_trip_error};

    fn small(kind: SceneKind) -> SceneParams {
        SceneParams {
            kind,
            seed: 3,
            width: 32,
            height: 32,
            n_train: 4,
            n_test: 2,
            supersample: 1,
        }
    }

    #[test]
    fn plane_depth_is_constant() {
        let gen = GeneratedScene::generate(small(SceneKind::Plane)).unwrap();
        for v in &gen.views {
            assert!(v.depth.as_slice().iter().all(|d| (d - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = GeneratedScene::generate(small(SceneKind::TexturedRoom)).unwrap();
        let b = GeneratedScene::generate(small(SceneKind::TexturedRoom)).unwrap();
        assert_eq!(a, b);
        let c = GeneratedScene::generate(SceneParams {
            seed: 4,
            ..small(SceneKind::TexturedRoom)
        })
        .unwrap();
        assert_ne!(a.views[0].color, c.views[0].color);
    }

    #[test]
    fn splits_interleave() {
        let scene = Scene::new(SceneParams::default()).unwrap();
        assert_eq!(scene.test_indices(), alloc::vec![2, 6, 10, 14]);
    }

    #[test]
    fn box_background_is_infinite() {
        let gen = GeneratedScene::generate(small(SceneKind::Box)).unwrap();
        let d = &gen.views[0].depth;
        assert!(d.get(0, 0).is_infinite());
        assert!(d.get(16, 16).is_finite());
        assert!(gen.near > 0.0 && gen.far.is_finite());
    }

    #[test]
    fn gt_flow_round_trips_where_unoccluded() {
        let gen = GeneratedScene::generate(SceneParams::default()).unwrap();
        for (i, j) in [(0, 1), (5, 7), (12, 11)] {
            let (a, b) = (&gen.views[i], &gen.views[j]);
            let fwd = radiance_flow(&a.depth, None, &a.camera, &b.camera).unwrap();
            let bwd = radiance_flow(&b.depth, None, &b.camera, &a.camera).unwrap();
            let err = round_trip_error(&fwd, &bwd);
            let mut checked = 0;
            for y in 0..64 {
                for x in 0..64 {
                    let e = *err.get(x, y);
                    if !e.is_finite() {
                        continue;
                    }
                    // Visible in b, and the bilinear footprint stays on one surface.
                    let f = fwd.vectors.get(x, y);
                    let q = Pixel::new(x as f64 + f[0], y as f64 + f[1]);
                    let world = a.camera.pose.inverse().apply(
                        &a.camera
                            .unproject(Pixel::new(x as f64, y as f64), *a.depth.get(x, y))
                            .unwrap(),
                    );
                    let z = b.camera.pose.apply(&world).z;
                    let exact = gen.scene.hit_at(&b.camera, q).unwrap().t;
                    // Inverse depth is affine in the image over one plane.
                    let (x0, y0) = (q.u.floor() as usize, q.v.floor() as usize);
                    if q.u < 0.0 || q.v < 0.0 || x0 + 1 >= 64 || y0 + 1 >= 64 {
                        continue;
                    }
                    let (fx, fy) = (q.u - x0 as f64, q.v - y0 as f64);
                    let inv = |dx: usize, dy: usize| 1.0 / b.depth.get(x0 + dx, y0 + dy);
                    let bilerp = (1.0 - fy) * ((1.0 - fx) * inv(0, 0) + fx * inv(1, 0))
                        + fy * ((1.0 - fx) * inv(0, 1) + fx * inv(1, 1));
                    let smooth = (bilerp * exact - 1.0).abs() < 1e-9;
                    if (z - exact).abs() > 1e-9 * exact || !smooth {
                        continue;
                    }
                    checked += 1;
                    assert!(e < 0.05, "view {i}->{j} pixel ({x},{y}) error {e}");
                }
            }
            assert!(checked > 2000, "{checked}");
        }
    }

    #[test]
    fn floaters_are_appended() {
        let gen = GeneratedScene::generate(small(SceneKind::TexturedRoom)).unwrap();
        let mut cfg = InitConfig {
            n_points: 200,
            ..InitConfig::default()
        };
        cfg.floaters.count = 0;
        let bare = init_cloud(&gen, &cfg).unwrap();
        cfg.floaters.count = 5;
        let with = init_cloud(&gen, &cfg).unwrap();
        assert_eq!(&with.points()[..200], bare.points());
        assert_eq!(with.len(), 205);
        assert_eq!(init_cloud(&gen, &cfg).unwrap(), with);
        for p in &with.points()[floater_range(&cfg)] {
            assert!(p.opacity() > 0.59 && p.opacity() < 0.91);
        }
    }

    #[test]
    fn neighbour_spacing_on_a_lattice() {
        let pts: Vec<Vec3> = (0..5)
            .map(|i| Vec3::new(0.2 * i as f64, 0.0, 0.0))
            .collect();
        let s = neighbour_spacing(&pts);
        // Middle point: neighbours at 0.2, 0.2, 0.4.
        assert!((s[2] - ((0.04 + 0.04 + 0.16) / 3.0f64).sqrt()).abs() < 1e-12);
    }
}
