//! Where do radiance flow and prior flow disagree with the true flow?
//!
//! For each of `K` sampled views around one input view, both flows are
//! compared against the flow induced by ground-truth depth. Sample `k` draws
//! its camera from its own keyed stream, so the maps for `K` samples are the
//! per-pixel mean of the single-sample maps.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use fds_core::flow::radiance_flow;
use fds_core::oracle::{FlowPrior, GeometryOracle, OracleConfig};
use fds_core::rng::{stream, Stream};
use fds_core::sampling::{sample_view, SamplerConfig, SamplerMode};
use fds_core::{render, GaussianCloud, Grid};

use crate::error::{FdsError, Result};
use crate::io;
use crate::manifest::SceneData;
use crate::train::render_settings;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMapConfig {
    pub view: usize,
    pub samples: Range<usize>,
    pub sigma: f64,
    pub oracle: OracleConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleError {
    pub sample: usize,
    pub eps_t: f64,
    pub radiance_epe: f64,
    pub prior_epe: f64,
    pub valid_pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMaps {
    /// Per-pixel mean EPE over the samples where the pixel was valid; NaN
    /// where it never was.
    pub radiance: Grid<f64>,
    pub prior: Grid<f64>,
    /// Samples in which each pixel was valid.
    pub coverage: Grid<usize>,
    pub per_sample: Vec<SampleError>,
    /// Means over every valid (pixel, sample) pair.
    pub mean_radiance: f64,
    pub mean_prior: f64,
    pub valid_pairs: usize,
}

fn flow_epe(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// A pixel counts when the ground truth, radiance and prior flows are all valid.
pub fn compute(cloud: &GaussianCloud, data: &SceneData, cfg: &ErrorMapConfig) -> Result<ErrorMaps> {
    let n_ids = data.gen.views.iter().map(|v| v.id + 1).max().unwrap_or(0);
    let mut depths = vec![Grid::filled(1, 1, f64::NAN); n_ids];
    for v in &data.gen.views {
        depths[v.id] = v.depth.clone();
    }
    let view = data
        .view(cfg.view)
        .ok_or(fds_core::Error::MissingGroundTruth(cfg.view))?;
    let oracle = GeometryOracle::new(cfg.oracle, cfg.seed, depths, Some(data.gen.scene.clone()))?;
    let cam = view.camera;
    let r = render(cloud, &cam, &render_settings(data))?;
    let mean_depth = r
        .mean_depth()
        .ok_or_else(|| FdsError::invalid("checkpoint", "render covers no pixel"))?;
    let fg = r.foreground();
    let sampler = SamplerConfig {
        sigma: cfg.sigma,
        mode: SamplerMode::Random,
        seed: cfg.seed,
    };
    sampler.validate()?;

    let (w, h) = (cam.width, cam.height);
    let mut sum_rad = Grid::filled(w, h, 0.0);
    let mut sum_pri = Grid::filled(w, h, 0.0);
    let mut coverage = Grid::filled(w, h, 0usize);
    let mut per_sample = Vec::with_capacity(cfg.samples.len());
    for k in cfg.samples.clone() {
        let mut rng = stream(cfg.seed, Stream::ErrorMap { sample: k as u64 });
        let sampled = sample_view(&cam, mean_depth, &sampler, &mut rng)?;
        let gt = radiance_flow(&view.depth, None, &cam, &sampled.camera)?;
        let rad = radiance_flow(&r.depth, Some(&fg), &cam, &sampled.camera)?;
        let pri = oracle.prior_flow(cfg.view, k, &cam, &sampled.camera)?;
        pri.vectors.ensure_shape((w, h))?;
        let (mut er, mut ep, mut n) = (0.0, 0.0, 0usize);
        for i in 0..w * h {
            if !(gt.valid.as_slice()[i] && rad.valid.as_slice()[i] && pri.valid.as_slice()[i]) {
                continue;
            }
            let g = gt.vectors.as_slice()[i];
            let a = flow_epe(rad.vectors.as_slice()[i], g);
            let b = flow_epe(pri.vectors.as_slice()[i], g);
            sum_rad.as_mut_slice()[i] += a;
            sum_pri.as_mut_slice()[i] += b;
            coverage.as_mut_slice()[i] += 1;
            er += a;
            ep += b;
            n += 1;
        }
        let mean = |s: f64| if n > 0 { s / n as f64 } else { f64::NAN };
        per_sample.push(SampleError {
            sample: k,
            eps_t: sampled.eps_t,
            radiance_epe: mean(er),
            prior_epe: mean(ep),
            valid_pixels: n,
        });
    }
    let valid_pairs: usize = coverage.as_slice().iter().sum();
    if valid_pairs == 0 {
        return Err(fds_core::Error::NoValidPixels.into());
    }
    let total = |g: &Grid<f64>| g.as_slice().iter().sum::<f64>() / valid_pairs as f64;
    let (mean_radiance, mean_prior) = (total(&sum_rad), total(&sum_pri));
    let per_pixel = |s: &Grid<f64>| {
        Grid::from_fn(w, h, |x, y| match *coverage.get(x, y) {
            0 => f64::NAN,
            c => s.get(x, y) / c as f64,
        })
    };
    Ok(ErrorMaps {
        radiance: per_pixel(&sum_rad),
        prior: per_pixel(&sum_pri),
        coverage,
        per_sample,
        mean_radiance,
        mean_prior,
        valid_pairs,
    })
}

/// Writes `radiance_epe.{pfm,ppm}`, `prior_epe.{pfm,ppm}` and `errormap.csv`.
/// Both colour maps share the ceiling `vmax` (pixels).
pub fn write(maps: &ErrorMaps, vmax: f64, out: &Path) -> Result<()> {
    io::write_pfm(&maps.radiance, &out.join("radiance_epe.pfm"))?;
    io::write_pfm(&maps.prior, &out.join("prior_epe.pfm"))?;
    io::write_turbo_ppm(&maps.radiance, vmax, &out.join("radiance_epe.ppm"))?;
    io::write_turbo_ppm(&maps.prior, vmax, &out.join("prior_epe.ppm"))?;
    let mut csv = String::from("sample,eps_t,radiance_epe,prior_epe,valid_pixels\n");
    for s in &maps.per_sample {
        writeln!(
            csv,
            "{},{},{},{},{}",
            s.sample, s.eps_t, s.radiance_epe, s.prior_epe, s.valid_pixels
        )
        .unwrap();
    }
    writeln!(
        csv,
        "mean,,{},{},{}",
        maps.mean_radiance, maps.mean_prior, maps.valid_pairs
    )
    .unwrap();
    io::write_text(&out.join("errormap.csv"), &csv)
}
