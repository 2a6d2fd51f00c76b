//! Runs a configured training job and persists its trace and checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use fds_core::oracle::GeometryOracle;
use fds_core::scene::Split;
use fds_core::train::{evaluate, StepReport, TrainView, Trainer};
use fds_core::{GaussianCloud, RenderSettings};
use serde::{Deserialize, Serialize};

use crate::config::{PriorSpec, RunConfig, RESOLVED_NAME};
use crate::error::{FdsError, Result};
use crate::io;
use crate::manifest::{load_scene, SceneData};
use crate::prior::{FileOracle, Prior};

pub const METRICS_NAME: &str = "metrics.csv";
pub const FINAL_NAME: &str = "final.ckpt";

/// One line of `metrics.csv`. Loss columns average the steps since the
/// previous row and are empty on the row for iteration 0; `loss_fds` and
/// `eps_t` are empty when no step in the window ran flow distillation.
/// `abs_rel` and `psnr` are held-out means for the cloud after `iter` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub loss_total: Option<f64>,
    pub loss_l1: Option<f64>,
    pub loss_dssim: Option<f64>,
    pub loss_fds: Option<f64>,
    pub abs_rel: f64,
    pub psnr: f64,
    pub eps_t: Option<f64>,
}

#[derive(Default)]
struct Window {
    steps: usize,
    total: f64,
    l1: f64,
    dssim: f64,
    fds: (f64, usize),
    eps: f64,
}

impl Window {
    fn add(&mut self, r: &StepReport) {
        self.steps += 1;
        self.total += r.loss_total;
        self.l1 += r.loss_l1;
        self.dssim += r.loss_dssim;
        if let (Some(f), Some(e)) = (r.loss_fds, r.eps_t) {
            self.fds.0 += f;
            self.fds.1 += 1;
            self.eps += e;
        }
    }

    fn row(&self, iter: usize, abs_rel: f64, psnr: f64) -> MetricsRow {
        let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        MetricsRow {
            iter,
            loss_total: mean(self.total, self.steps),
            loss_l1: mean(self.l1, self.steps),
            loss_dssim: mean(self.dssim, self.steps),
            loss_fds: mean(self.fds.0, self.fds.1),
            abs_rel,
            psnr,
            eps_t: mean(self.eps, self.fds.1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub cloud: GaussianCloud,
    /// Steps where flow distillation had no jointly valid pixel.
    pub empty_fds_steps: usize,
}

pub fn checkpoint_name(iter: usize) -> String {
    format!("iter_{iter:06}.ckpt")
}

pub fn render_settings(data: &SceneData) -> RenderSettings {
    RenderSettings {
        background_depth: data.gen.far,
        ..RenderSettings::default()
    }
}

fn build_prior(spec: &PriorSpec, data: &SceneData, seed: u64) -> Result<Prior> {
    let train: Vec<_> = data.gen.split(Split::Train).collect();
    Ok(match spec {
        PriorSpec::Geometry(c) => {
            let depths = train.iter().map(|v| v.depth.clone()).collect();
            let scene = c.occlusion_aware.then(|| data.gen.scene.clone());
            Prior::Geometry(GeometryOracle::new(*c, seed, depths, scene)?)
        }
        PriorSpec::File { pattern } => Prior::File(FileOracle::new(
            &data.dir,
            pattern,
            train.iter().map(|v| v.id).collect(),
        )),
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| FdsError::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| FdsError::format(path, e.to_string()))
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| FdsError::format(path, e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FdsError::format(path, e.to_string()))?;
    fs::write(path, bytes).map_err(|e| FdsError::io(path, e))
}

fn dump_diagnostic(
    out: &Path,
    trainer: &Trainer<Prior>,
    last: Option<&StepReport>,
    err: &FdsError,
) -> Result<()> {
    io::write_checkpoint(&trainer.cloud, &out.join("diverged.ckpt"))?;
    let params = trainer.cloud.points().iter().flat_map(|p| p.to_params());
    let non_finite_params = params.filter(|v| !v.is_finite()).count();
    let report = serde_json::json!({
        "error": err.to_string(),
        "iter": trainer.iter(),
        "non_finite_params": non_finite_params,
        "last_step": last.map(|r| serde_json::json!({
            "iter": r.iter,
            "views": r.views,
            "loss_total": r.loss_total,
            "loss_l1": r.loss_l1,
            "loss_dssim": r.loss_dssim,
            "loss_fds": r.loss_fds,
            "eps_t": r.eps_t,
            "grad_norms": [r.grad_norms.position, r.grad_norms.log_scale, r.grad_norms.rotation,
                           r.grad_norms.opacity, r.grad_norms.color],
        })),
    });
    io::write_text(&out.join("diagnostic.json"), &format!("{report:#}\n"))
}

/// Trains from the scene's initial checkpoint. Writes the resolved config,
/// `metrics.csv`, periodic checkpoints and `final.ckpt` into the run directory.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let config = config.pinned();
    let resolved = config.resolve()?;
    let data = load_scene(&resolved.scene)?;
    let cloud = io::read_checkpoint(&data.initial_checkpoint())?;
    let out = resolved.out.clone();
    fs::create_dir_all(&out).map_err(|e| FdsError::io(&out, e))?;
    io::write_text(&out.join(RESOLVED_NAME), &config.to_toml())?;

    let mut train_cfg = resolved.train;
    train_cfg.render = render_settings(&data);
    let settings = train_cfg.render;
    let views = data.gen.split(Split::Train).map(TrainView::from).collect();
    let prior = build_prior(&resolved.prior, &data, config.seed)?;
    let mut trainer = Trainer::new(train_cfg, cloud, views, prior)?;
    let held_out: Vec<_> = data.gen.split(Split::Test).collect();
    let eval = |cloud: &GaussianCloud| evaluate(cloud, held_out.iter().copied(), &settings);

    let e0 = eval(&trainer.cloud)?;
    let mut rows = vec![Window::default().row(0, e0.mean_abs_rel, e0.mean_psnr)];
    let mut window = Window::default();
    let mut last = None;
    while !trainer.done() {
        let report = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                let err = match (&e, trainer.prior()) {
                    (fds_core::Error::PriorUnavailable { .. }, Prior::File(f)) => match f.missing()
                    {
                        Some(path) => FdsError::MissingFlow { path },
                        None => e.into(),
                    },
                    _ => e.into(),
                };
                if let FdsError::Core(fds_core::Error::NonFinite(_)) = err {
                    write_metrics(&out.join(METRICS_NAME), &rows)?;
                    dump_diagnostic(&out, &trainer, last.as_ref(), &err)?;
                }
                return Err(err);
            }
        };
        window.add(&report);
        last = Some(report);
        let it = trainer.iter();
        if it % resolved.eval_every == 0 || trainer.done() {
            let e = eval(&trainer.cloud)?;
            rows.push(window.row(it, e.mean_abs_rel, e.mean_psnr));
            window = Window::default();
        }
        if resolved.checkpoint_every > 0 && it % resolved.checkpoint_every == 0 {
            io::write_checkpoint(
                &trainer.cloud,
                &out.join("checkpoints").join(checkpoint_name(it)),
            )?;
        }
    }
    write_metrics(&out.join(METRICS_NAME), &rows)?;
    io::write_checkpoint(&trainer.cloud, &out.join(FINAL_NAME))?;
    Ok(RunSummary {
        out,
        rows,
        empty_fds_steps: trainer.empty_fds_steps,
        cloud: trainer.cloud,
    })
}
