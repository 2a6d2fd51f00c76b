//! Depth and image quality metrics.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{endpoint_error, FlowField};
use crate::grid::{DepthMap, Mask, RgbImage};
use crate::render::{RenderOutput, ALPHA_ACC_MIN};

pub use crate::loss::ssim;

/// Reported instead of +∞ for (near) identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Mean of `|pred - gt| / gt` over `valid`.
pub fn abs_rel(pred: &DepthMap, gt: &DepthMap, valid: &Mask) -> Result<f64> {
    gt.ensure_shape(pred.shape())?;
    valid.ensure_shape(pred.shape())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, g), v) in pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(valid.as_slice())
    {
        if *v {
            sum += (p - g).abs() / g;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / n as f64)
}

pub fn psnr(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    gt.ensure_shape(pred.shape())?;
    let mut se = 0.0;
    for (p, g) in pred.as_slice().iter().zip(gt.as_slice()) {
        for c in 0..3 {
            se += (p[c] - g[c]) * (p[c] - g[c]);
        }
    }
    let mse = se / (3 * pred.len()) as f64;
    if mse < 1e-12 {
        return Ok(PSNR_CAP);
    }
    Ok(-10.0 * mse.log10())
}

/// Pixels where the ground truth is a usable depth and the render covers it.
pub fn depth_eval_mask(render: &RenderOutput, gt_depth: &DepthMap) -> Result<Mask> {
    gt_depth.ensure_shape(render.depth.shape())?;
    let (w, h) = gt_depth.shape();
    Ok(Mask::from_fn(w, h, |x, y| {
        let g = *gt_depth.get(x, y);
        g.is_finite() && g > 0.0 && *render.alpha_acc.get(x, y) > ALPHA_ACC_MIN
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMetrics {
    pub view: usize,
    pub abs_rel: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub valid_pixels: usize,
}

/// Scores a render against ground truth colour and depth.
pub fn evaluate_view(
    view: usize,
    render: &RenderOutput,
    gt_color: &RgbImage,
    gt_depth: &DepthMap,
) -> Result<ViewMetrics> {
    let mask = depth_eval_mask(render, gt_depth)?;
    Ok(ViewMetrics {
        view,
        abs_rel: abs_rel(&render.depth, gt_depth, &mask)?,
        psnr: psnr(&render.color, gt_color)?,
        ssim: ssim(&render.color, gt_color)?,
        valid_pixels: mask.as_slice().iter().filter(|v| **v).count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_abs_rel: f64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Mean flow endpoint error and its pixel count, when flow was evaluated.
    pub flow_epe: Option<(f64, usize)>,
}

impl EvalReport {
    pub fn new(views: Vec<ViewMetrics>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::NoValidPixels);
        }
        let n = views.len() as f64;
        let mean = |f: fn(&ViewMetrics) -> f64| views.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mean_abs_rel: mean(|v| v.abs_rel),
            mean_psnr: mean(|v| v.psnr),
            mean_ssim: mean(|v| v.ssim),
            views,
            flow_epe: None,
        })
    }

    pub fn with_flow(mut self, estimate: &FlowField, reference: &FlowField) -> Result<Self> {
        let e = endpoint_error(estimate, reference)?;
        self.flow_epe = Some((e.mean, e.count));
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn abs_rel_examples() {
        let gt = Grid::from_vec(2, 1, alloc::vec![1.0, 2.0]).unwrap();
        let all = Grid::filled(2, 1, true);
        assert_eq!(abs_rel(&gt, &gt, &all).unwrap(), 0.0);
        let pred = Grid::from_vec(2, 1, alloc::vec![1.1, 2.2]).unwrap();
        assert!((abs_rel(&pred, &gt, &all).unwrap() - 0.1).abs() < 1e-12);
        let double = gt.map(|d| 2.0 * d);
        assert_eq!(abs_rel(&double, &gt, &all).unwrap(), 1.0);
        assert_eq!(
            abs_rel(&gt, &gt, &Grid::filled(2, 1, false)),
            Err(Error::NoValidPixels)
        );
    }

    #[test]
    fn abs_rel_is_scale_sensitive() {
        let gt = Grid::from_fn(7, 5, |x, y| 1.0 + 0.3 * x as f64 + 0.1 * y as f64);
        let all = Grid::filled(7, 5, true);
        for k in [0.5, 0.9, 1.25, 3.0] {
            let e = abs_rel(&gt.map(|d| k * d), &gt, &all).unwrap();
            assert!((e - (k - 1.0f64).abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn psnr_examples() {
        let a = Grid::filled(4, 4, [0.5; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Grid::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = Grid::filled(4, 4, [0.51; 3]);
        assert!((psnr(&a, &c).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&a, &Grid::filled(3, 4, [0.5; 3])).is_err());
    }
}
