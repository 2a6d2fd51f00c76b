//! The training loop: photometric fitting plus flow distillation at sampled views.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::flow::{radiance_flow, radiance_flow_backward};
use crate::gaussian::{param, GaussianCloud, GaussianPoint};
use crate::geometry::Camera;
use crate::grid::{Grid, RgbImage};
use crate::loss::{fds_loss, photometric_loss};
use crate::metrics::{evaluate_view, EvalReport};
use crate::optim::{Adam, LearningRates};
use crate::oracle::FlowPrior;
use crate::render::{render, render_backward, render_forward, RenderSettings};
use crate::rng::{stream, ChaCha8Rng, Stream};
use crate::sampling::{sample_view, SamplerConfig};
use crate::scene::View;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub fds_start: usize,
    /// Input views per step.
    pub batch: usize,
    pub lambda_dssim: f64,
    pub lambda_fds: f64,
    /// Accepted for completeness; the normal term is not implemented and
    /// must stay 0.
    pub lambda_normal: f64,
    pub rates: LearningRates,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub render: RenderSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iters: 3000,
            fds_start: 1000,
            batch: 1,
            lambda_dssim: 0.2,
            lambda_fds: 0.015,
            lambda_normal: 0.0,
            rates: LearningRates::default(),
            sampler: SamplerConfig::default(),
            seed: 0,
            render: RenderSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fds_start > self.total_iters {
            return Err(Error::InvalidParameter(
                "fds_start must not exceed total_iters",
            ));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch must be at least 1"));
        }
        let weights = [self.lambda_dssim, self.lambda_fds, self.lambda_normal];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || self.lambda_dssim > 1.0 {
            return Err(Error::InvalidParameter(
                "loss weights must be finite, non-negative and lambda_dssim <= 1",
            ));
        }
        if self.lambda_normal != 0.0 {
            return Err(Error::InvalidParameter(
                "the normal consistency term is not supported",
            ));
        }
        self.rates.validate()?;
        self.sampler.validate()
    }

    pub fn fds_active(&self, iter: usize) -> bool {
        self.lambda_fds > 0.0 && iter >= self.fds_start
    }
}

/// L2 norms of the accumulated gradient, per parameter class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradNorms {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl GradNorms {
    fn of(cloud: &GaussianCloud) -> Self {
        let mut sq = [0.0; 5];
        for g in cloud.grads() {
            for k in param::MU {
                sq[0] += g[k] * g[k];
            }
            for k in param::LOG_SCALE {
                sq[1] += g[k] * g[k];
            }
            for k in param::QUAT {
                sq[2] += g[k] * g[k];
            }
            sq[3] += g[param::OPACITY] * g[param::OPACITY];
            for k in param::COLOR {
                sq[4] += g[k] * g[k];
            }
        }
        let [p, s, r, o, c] = sq.map(f64::sqrt);
        Self {
            position: p,
            log_scale: s,
            rotation: r,
            opacity: o,
            color: c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iter: usize,
    pub views: Vec<usize>,
    pub loss_total: f64,
    pub loss_l1: f64,
    pub loss_dssim: f64,
    /// Present on steps where flow distillation ran.
    pub loss_fds: Option<f64>,
    /// Mean sampling radius over the batch.
    pub eps_t: Option<f64>,
    pub fds_valid_pixels: usize,
    pub grad_norms: GradNorms,
}

/// A training image with its camera.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainView {
    pub camera: Camera,
    pub color: RgbImage,
}

impl From<&View> for TrainView {
    fn from(v: &View) -> Self {
        Self {
            camera: v.camera,
            color: v.color.clone(),
        }
    }
}

pub struct Trainer<P> {
    pub config: TrainConfig,
    pub cloud: GaussianCloud,
    views: Vec<TrainView>,
    prior: P,
    adam: Adam,
    iter: usize,
    order_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    deck: Vec<usize>,
    /// Steps where flow distillation found no jointly valid pixel.
    pub empty_fds_steps: usize,
}

impl<P: FlowPrior> Trainer<P> {
    /// `views[v]` is training view `v`; the prior is queried with the same index.
    pub fn new(
        config: TrainConfig,
        cloud: GaussianCloud,
        views: Vec<TrainView>,
        prior: P,
    ) -> Result<Self> {
        config.validate()?;
        if views.is_empty() {
            return Err(Error::InvalidParameter("no training views"));
        }
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self {
            adam: Adam::new(config.rates, config.total_iters, cloud.len()),
            order_rng: stream(config.seed, Stream::ViewOrder),
            sampler_rng: stream(config.sampler.seed, Stream::ViewSampler),
            config,
            cloud,
            views,
            prior,
            iter: 0,
            deck: Vec::new(),
            empty_fds_steps: 0,
        })
    }

    pub fn iter(&self) -> usize {
        self.iter
    }

    pub fn done(&self) -> bool {
        self.iter >= self.config.total_iters
    }

    pub fn prior(&self) -> &P {
        &self.prior
    }

    /// Views are visited in shuffled passes over the training set.
    fn next_view(&mut self) -> usize {
        if self.deck.is_empty() {
            self.deck = (0..self.views.len()).rev().collect();
            self.deck.shuffle(&mut self.order_rng);
        }
        self.deck.pop().expect("deck refilled")
    }

    pub fn step(&mut self) -> Result<StepReport> {
        if self.done() {
            return Err(Error::InvalidParameter("training already finished"));
        }
        let cfg = self.config;
        let iter = self.iter;
        let inv_b = 1.0 / cfg.batch as f64;
        self.cloud.zero_grad();
        let mut report = StepReport {
            iter,
            views: Vec::with_capacity(cfg.batch),
            loss_total: 0.0,
            loss_l1: 0.0,
            loss_dssim: 0.0,
            loss_fds: None,
            eps_t: None,
            fds_valid_pixels: 0,
            grad_norms: GradNorms::default(),
        };
        let mut fds_sum = 0.0;
        let mut eps_sum = 0.0;
        let mut fds_runs = 0usize;
        for _ in 0..cfg.batch {
            let v = self.next_view();
            report.views.push(v);
            let view = &self.views[v];
            let cam = view.camera;
            let (out, state) = render_forward(&self.cloud, &cam, &cfg.render)?;
            let photo = photometric_loss(&out.color, &view.color, cfg.lambda_dssim)?;
            report.loss_l1 += photo.l1 * inv_b;
            report.loss_dssim += photo.dssim * inv_b;
            report.loss_total += photo.total * inv_b;
            let grad_color = photo.grad.map(|g| g.map(|c| c * inv_b));
            let mut grad_depth = Grid::filled(cam.width, cam.height, 0.0);

            if cfg.fds_active(iter) {
                match out.mean_depth() {
                    Some(mean) => {
                        let sampled = sample_view(&cam, mean, &cfg.sampler, &mut self.sampler_rng)?;
                        let fg = out.foreground();
                        let radiance = radiance_flow(&out.depth, Some(&fg), &cam, &sampled.camera)?;
                        let prior = self.prior.prior_flow(v, iter, &cam, &sampled.camera)?;
                        let l = fds_loss(&prior, &radiance)?;
                        if l.no_valid_pixels() {
                            self.empty_fds_steps += 1;
                        }
                        let scale = cfg.lambda_fds * inv_b;
                        let gf = l.grad.map(|g| [g[0] * scale, g[1] * scale]);
                        grad_depth = radiance_flow_backward(
                            &out.depth,
                            &radiance,
                            &cam,
                            &sampled.camera,
                            &gf,
                        )?;
                        report.loss_total += scale * l.loss;
                        report.fds_valid_pixels += l.valid_count;
                        fds_sum += l.loss;
                        eps_sum += sampled.eps_t;
                        fds_runs += 1;
                    }
                    None => self.empty_fds_steps += 1,
                }
            }
            render_backward(&mut self.cloud, &cam, &state, &grad_color, &grad_depth)?;
        }
        if fds_runs > 0 {
            report.loss_fds = Some(fds_sum / fds_runs as f64);
            report.eps_t = Some(eps_sum / fds_runs as f64);
        }
        if !report.loss_total.is_finite() {
            return Err(Error::NonFinite(iter));
        }
        report.grad_norms = GradNorms::of(&self.cloud);
        self.adam.step(&mut self.cloud)?;
        if !self.cloud.points().iter().all(GaussianPoint::is_finite) {
            return Err(Error::NonFinite(iter));
        }
        self.iter += 1;
        Ok(report)
    }
}

/// Renders every view and scores it against its ground truth.
pub fn evaluate<'a>(
    cloud: &GaussianCloud,
    views: impl IntoIterator<Item = &'a View>,
    settings: &RenderSettings,
) -> Result<EvalReport> {
    let mut per_view = vec![];
    for v in views {
        let out = render(cloud, &v.camera, settings)?;
        per_view.push(evaluate_view(v.id, &out, &v.color, &v.depth)?);
    }
    EvalReport::new(per_view)
}
