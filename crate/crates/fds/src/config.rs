//! Run configuration (TOML). Every key is optional; unknown keys are rejected.
//!
//! ```toml
//! scene = "scenes/room"
//! out = "runs/fds"
//! seed = 0
//!
//! [schedule]
//! total_iters = 3000
//! fds_start = 1000
//! batch = 1
//! eval_every = 100
//! checkpoint_every = 1000
//!
//! [weights]
//! lambda_dssim = 0.2
//! lambda_fds = 0.015
//! lambda_normal = 0.0
//!
//! [sampler]
//! sigma = 23.0
//! mode = "random"        # or "fixed:0.25"
//!
//! [oracle]
//! kind = "noisy"         # ground_truth | noisy | file
//! noise = 0.5
//! occlusion_aware = false
//! pattern = "flows/{view}_{iter}.flo"
//! ```

use std::path::{Path, PathBuf};

use fds_core::optim::LearningRates;
use fds_core::oracle::{OracleConfig, OracleKind};
use fds_core::render::RenderSettings;
use fds_core::sampling::{SamplerConfig, SamplerMode};
use fds_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{FdsError, Result};
use crate::io;

pub const RESOLVED_NAME: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub schedule: Schedule,
    pub weights: Weights,
    pub lr: Rates,
    pub sampler: Sampler,
    pub oracle: Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub total_iters: usize,
    pub fds_start: usize,
    pub batch: usize,
    /// Held-out evaluation and one metrics row every this many steps.
    pub eval_every: usize,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub lambda_dssim: f64,
    pub lambda_fds: f64,
    pub lambda_normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub position_init: f64,
    pub position_final: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampler {
    pub sigma: f64,
    pub mode: String,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Oracle {
    pub kind: String,
    pub noise: f64,
    pub occlusion_aware: bool,
    /// File oracle only: `{view}` and `{iter}` are substituted; relative
    /// paths resolve against the scene directory.
    pub pattern: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            out: None,
            seed: 0,
            schedule: Schedule::default(),
            weights: Weights::default(),
            lr: Rates::default(),
            sampler: Sampler::default(),
            oracle: Oracle::default(),
        }
    }
}

impl Default for Schedule {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            total_iters: t.total_iters,
            fds_start: t.fds_start,
            batch: t.batch,
            eval_every: 100,
            checkpoint_every: 1000,
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lambda_dssim: t.lambda_dssim,
            lambda_fds: t.lambda_fds,
            lambda_normal: t.lambda_normal,
        }
    }
}

impl Default for Rates {
    fn default() -> Self {
        let r = LearningRates::default();
        Self {
            position_init: r.position_init,
            position_final: r.position_final,
            log_scale: r.log_scale,
            rotation: r.rotation,
            opacity: r.opacity,
            color: r.color,
        }
    }
}

impl Default for Sampler {
    fn default() -> Self {
        Self {
            sigma: SamplerConfig::default().sigma,
            mode: "random".to_string(),
            seed: None,
        }
    }
}

impl Default for Oracle {
    fn default() -> Self {
        Self {
            kind: "noisy".to_string(),
            noise: 0.5,
            occlusion_aware: false,
            pattern: "flows/{view}_{iter}.flo".to_string(),
        }
    }
}

/// `random` or `fixed:<xi>`.
pub fn parse_sampler_mode(s: &str) -> Option<SamplerMode> {
    match s.split_once(':') {
        None if s == "random" => Some(SamplerMode::Random),
        Some(("fixed", xi)) => xi.trim().parse().ok().map(SamplerMode::Fixed),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Geometry(OracleConfig),
    File { pattern: String },
}

/// A validated configuration ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scene: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub prior: PriorSpec,
    pub eval_every: usize,
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            FdsError::invalid(field, e.inner().message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Fills in defaulted seeds so the snapshot alone reproduces the run.
    pub fn pinned(&self) -> Self {
        let mut c = self.clone();
        c.sampler.seed = Some(self.sampler.seed.unwrap_or(self.seed));
        c
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let scene = self
            .scene
            .clone()
            .ok_or_else(|| FdsError::invalid("scene", "no scene directory given"))?;
        let out = self
            .out
            .clone()
            .ok_or_else(|| FdsError::invalid("out", "no output directory given"))?;
        let s = &self.schedule;
        if s.eval_every == 0 {
            return Err(FdsError::invalid(
                "schedule.eval_every",
                "must be at least 1",
            ));
        }
        if s.fds_start > s.total_iters {
            return Err(FdsError::invalid(
                "schedule.fds_start",
                "must not exceed schedule.total_iters",
            ));
        }
        let mode = parse_sampler_mode(&self.sampler.mode).ok_or_else(|| {
            FdsError::invalid(
                "sampler.mode",
                format!("expected random or fixed:<xi>, got {:?}", self.sampler.mode),
            )
        })?;
        let prior = match self.oracle.kind.as_str() {
            "ground_truth" | "noisy" => {
                let kind = if self.oracle.kind == "noisy" {
                    OracleKind::Noisy(self.oracle.noise)
                } else {
                    OracleKind::GroundTruth
                };
                let c = OracleConfig {
                    kind,
                    occlusion_aware: self.oracle.occlusion_aware,
                };
                c.validate()
                    .map_err(|e| FdsError::invalid("oracle.noise", e.to_string()))?;
                PriorSpec::Geometry(c)
            }
            "file" => PriorSpec::File {
                pattern: self.oracle.pattern.clone(),
            },
            other => {
                return Err(FdsError::invalid(
                    "oracle.kind",
                    format!("unknown oracle {other:?}"),
                ))
            }
        };
        let (w, r) = (&self.weights, &self.lr);
        let train = TrainConfig {
            total_iters: s.total_iters,
            fds_start: s.fds_start,
            batch: s.batch,
            lambda_dssim: w.lambda_dssim,
            lambda_fds: w.lambda_fds,
            lambda_normal: w.lambda_normal,
            rates: LearningRates {
                position_init: r.position_init,
                position_final: r.position_final,
                log_scale: r.log_scale,
                rotation: r.rotation,
                opacity: r.opacity,
                color: r.color,
            },
            sampler: SamplerConfig {
                sigma: self.sampler.sigma,
                mode,
                seed: self.sampler.seed.unwrap_or(self.seed),
            },
            seed: self.seed,
            render: RenderSettings::default(),
        };
        train
            .validate()
            .map_err(|e| FdsError::invalid("config", e.to_string()))?;
        Ok(Resolved {
            scene,
            out,
            train,
            prior,
            eval_every: s.eval_every,
            checkpoint_every: s.checkpoint_every,
        })
    }
}
