//! `scene.json`: cameras, ground-truth files and the generator parameters
//! needed to rebuild the analytic scene.
//!
//! ```json
//! {
//!   "version": 1,
//!   "generator": { "kind": "textured_room", "seed": 0, "width": 64, "height": 64,
//!                  "n_train": 12, "n_test": 4, "supersample": 2 },
//!   "near": 0.93, "far": 3.71,
//!   "init": { "strategy": "gt_surface_noisy", "sigma_pos": 0.03, "n_points": 1500, ... },
//!   "initial_checkpoint": "initial.ckpt",
//!   "views": [ { "id": 0, "split": "train",
//!                "intrinsics": { "fx": .., "fy": .., "cx": .., "cy": .., "width": 64, "height": 64 },
//!                "pose": { "rotation": [[..], [..], [..]], "translation": [..] },
//!                "color": "views/000_color.ppm", "depth": "views/000_depth.pfm" } ]
//! }
//! ```
//!
//! Poses are world-to-camera. Paths are relative to the scene directory.

use std::path::{Path, PathBuf};

use fds_core::geometry::Mat3;
use fds_core::scene::{
    FloaterSpec, GeneratedScene, InitConfig, InitStrategy, Scene, SceneKind, SceneParams, Split,
    View,
};
use fds_core::{Camera, GaussianCloud, RigidTransform, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{FdsError, Result};
use crate::io;

pub const MANIFEST_NAME: &str = "scene.json";
pub const MANIFEST_VERSION: u32 = 1;
/// Slack on the near/far check for depths stored as `f32`.
const DEPTH_BOUND_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub generator: Generator,
    pub near: f64,
    pub far: f64,
    pub init: InitSection,
    pub initial_checkpoint: String,
    pub views: Vec<ViewEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub kind: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub supersample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    /// `gt_surface_noisy` or `random_box`.
    pub strategy: String,
    pub sigma_pos: f64,
    pub n_points: usize,
    pub surface_opacity: f64,
    pub scale_factor: f64,
    pub seed: u64,
    pub floaters: FloaterSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloaterSection {
    pub count: usize,
    pub opacity_range: [f64; 2],
    pub scale_range: [f64; 2],
    pub depth_fraction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub id: usize,
    pub split: String,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub color: String,
    pub depth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Generator {
    pub fn from_params(p: &SceneParams) -> Self {
        Self {
            kind: p.kind.name().to_string(),
            seed: p.seed,
            width: p.width,
            height: p.height,
            n_train: p.n_train,
            n_test: p.n_test,
            supersample: p.supersample,
        }
    }

    pub fn to_params(&self) -> Result<SceneParams> {
        let kind = SceneKind::from_name(&self.kind).ok_or_else(|| {
            FdsError::scene(
                "generator.kind",
                format!("unknown scene kind {:?}", self.kind),
            )
        })?;
        let p = SceneParams {
            kind,
            seed: self.seed,
            width: self.width,
            height: self.height,
            n_train: self.n_train,
            n_test: self.n_test,
            supersample: self.supersample,
        };
        p.validate()
            .map_err(|e| FdsError::scene("generator", e.to_string()))?;
        Ok(p)
    }
}

impl InitSection {
    pub fn from_config(c: &InitConfig) -> Self {
        let (strategy, sigma_pos) = match c.strategy {
            InitStrategy::GtSurfaceNoisy { sigma_pos } => ("gt_surface_noisy", sigma_pos),
            InitStrategy::RandomBox => ("random_box", 0.0),
        };
        let f = &c.floaters;
        Self {
            strategy: strategy.to_string(),
            sigma_pos,
            n_points: c.n_points,
            surface_opacity: c.surface_opacity,
            scale_factor: c.scale_factor,
            seed: c.seed,
            floaters: FloaterSection {
                count: f.count,
                opacity_range: f.opacity_range.into(),
                scale_range: f.scale_range.into(),
                depth_fraction: f.depth_fraction.into(),
            },
        }
    }

    pub fn to_config(&self) -> Result<InitConfig> {
        let strategy = match self.strategy.as_str() {
            "gt_surface_noisy" => InitStrategy::GtSurfaceNoisy {
                sigma_pos: self.sigma_pos,
            },
            "random_box" => InitStrategy::RandomBox,
            other => {
                return Err(FdsError::scene(
                    "init.strategy",
                    format!("unknown strategy {other:?}"),
                ))
            }
        };
        let f = &self.floaters;
        let c = InitConfig {
            strategy,
            n_points: self.n_points,
            floaters: FloaterSpec {
                count: f.count,
                opacity_range: f.opacity_range.into(),
                scale_range: f.scale_range.into(),
                depth_fraction: f.depth_fraction.into(),
            },
            surface_opacity: self.surface_opacity,
            scale_factor: self.scale_factor,
            seed: self.seed,
        };
        c.validate()
            .map_err(|e| FdsError::scene("init", e.to_string()))?;
        Ok(c)
    }
}

impl ViewEntry {
    fn new(v: &View) -> Self {
        let c = &v.camera;
        let r = &c.pose.rotation;
        Self {
            id: v.id,
            split: v.split.name().to_string(),
            intrinsics: Intrinsics {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
            },
            pose: Pose {
                rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
                translation: c.pose.translation.into(),
            },
            color: format!("views/{:03}_color.ppm", v.id),
            depth: format!("views/{:03}_depth.pfm", v.id),
        }
    }

    pub fn camera(&self, field: &str) -> Result<Camera> {
        let rot = Mat3::from_fn(|i, j| self.pose.rotation[i][j]);
        let pose = RigidTransform::new(rot, Vec3::from(self.pose.translation))
            .map_err(|e| FdsError::scene(format!("{field}.pose"), e.to_string()))?;
        let k = &self.intrinsics;
        Camera::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height, pose)
            .map_err(|e| FdsError::scene(format!("{field}.intrinsics"), e.to_string()))
    }

    pub fn split(&self, field: &str) -> Result<Split> {
        Split::from_name(&self.split).ok_or_else(|| {
            FdsError::scene(
                format!("{field}.split"),
                format!("unknown split {:?}", self.split),
            )
        })
    }
}

/// A scene directory loaded into memory.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub gen: GeneratedScene,
    pub init: InitConfig,
}

impl SceneData {
    pub fn view(&self, id: usize) -> Option<&View> {
        self.gen.views.iter().find(|v| v.id == id)
    }

    pub fn initial_checkpoint(&self) -> PathBuf {
        self.dir.join(&self.manifest.initial_checkpoint)
    }
}

/// Writes ground truth, the initial cloud and `scene.json` into `dir`.
pub fn save_scene(
    dir: &Path,
    gen: &GeneratedScene,
    init: &InitConfig,
    cloud: &GaussianCloud,
) -> Result<Manifest> {
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        generator: Generator::from_params(&gen.scene.params),
        near: gen.near,
        far: gen.far,
        init: InitSection::from_config(init),
        initial_checkpoint: "initial.ckpt".to_string(),
        views: gen.views.iter().map(ViewEntry::new).collect(),
    };
    for (v, entry) in gen.views.iter().zip(&manifest.views) {
        io::write_ppm(&v.color, &dir.join(&entry.color))?;
        io::write_pfm(&v.depth, &dir.join(&entry.depth))?;
    }
    io::write_checkpoint(cloud, &dir.join(&manifest.initial_checkpoint))?;
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    io::write_text(&dir.join(MANIFEST_NAME), &text)?;
    Ok(manifest)
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let message = format!("{} ({})", e.inner(), path.display());
        FdsError::scene(field, message)
    })
}

fn existing(dir: &Path, rel: &str, field: &str) -> Result<PathBuf> {
    let p = dir.join(rel);
    if !p.is_file() {
        return Err(FdsError::scene(
            field,
            format!("file not found: {}", p.display()),
        ));
    }
    Ok(p)
}

/// Loads and validates a scene directory; the analytic scene is rebuilt from
/// the generator parameters.
pub fn load_scene(dir: &Path) -> Result<SceneData> {
    let path = dir.join(MANIFEST_NAME);
    let manifest = parse_manifest(&io::read_text(&path)?, &path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(FdsError::scene(
            "version",
            format!("unsupported version {}", manifest.version),
        ));
    }
    let params = manifest.generator.to_params()?;
    let init = manifest.init.to_config()?;
    let (near, far) = (manifest.near, manifest.far);
    if !(near > 0.0 && near <= far && far.is_finite()) {
        return Err(FdsError::scene("near", "need 0 < near <= far < inf"));
    }
    if manifest.views.len() != params.n_train + params.n_test {
        return Err(FdsError::scene(
            "views",
            "view count does not match generator.n_train + n_test",
        ));
    }
    existing(dir, &manifest.initial_checkpoint, "initial_checkpoint")?;
    let (lo, hi) = (
        near * (1.0 - DEPTH_BOUND_TOL),
        far * (1.0 + DEPTH_BOUND_TOL),
    );
    let mut views = Vec::with_capacity(manifest.views.len());
    for (i, e) in manifest.views.iter().enumerate() {
        let field = format!("views[{i}]");
        if views.iter().any(|v: &View| v.id == e.id) {
            return Err(FdsError::scene(
                format!("{field}.id"),
                format!("duplicate view id {}", e.id),
            ));
        }
        let camera = e.camera(&field)?;
        if (camera.width, camera.height) != (params.width, params.height) {
            return Err(FdsError::scene(
                format!("{field}.intrinsics"),
                "size differs from generator",
            ));
        }
        let color = io::read_ppm(&existing(dir, &e.color, &format!("{field}.color"))?)?;
        let depth = io::read_pfm(&existing(dir, &e.depth, &format!("{field}.depth"))?)?;
        for (name, shape) in [("color", color.shape()), ("depth", depth.shape())] {
            if shape != (camera.width, camera.height) {
                return Err(FdsError::scene(
                    format!("{field}.{name}"),
                    format!(
                        "{}x{} image for a {}x{} camera",
                        shape.0, shape.1, camera.width, camera.height
                    ),
                ));
            }
        }
        if let Some(d) = depth
            .as_slice()
            .iter()
            .find(|d| d.is_nan() || (d.is_finite() && !(lo..=hi).contains(*d)))
        {
            return Err(FdsError::scene(
                format!("{field}.depth"),
                format!("depth {d} outside [near, far]"),
            ));
        }
        views.push(View {
            id: e.id,
            split: e.split(&field)?,
            camera,
            color,
            depth,
        });
    }
    Ok(SceneData {
        dir: dir.to_path_buf(),
        gen: GeneratedScene {
            scene: Scene::new(params)?,
            views,
            near,
            far,
        },
        manifest,
        init,
    })
}
