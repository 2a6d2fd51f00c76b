//! Held-out evaluation: metrics report plus rendered images and error maps.

use std::fmt::Write as _;
use std::path::Path;

use fds_core::metrics::{depth_eval_mask, evaluate_view, EvalReport, ViewMetrics};
use fds_core::scene::{Split, View};
use fds_core::{render, GaussianCloud, Grid};
use serde::Serialize;

use crate::error::{FdsError, Result};
use crate::io;
use crate::manifest::SceneData;
use crate::train::render_settings;

/// Colour-map ceiling for relative depth error images.
pub const ABS_REL_VMAX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSel {
    Train,
    Test,
    All,
}

impl SplitSel {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitSel::Train),
            "test" => Some(SplitSel::Test),
            "all" => Some(SplitSel::All),
            _ => None,
        }
    }

    fn admits(self, s: Split) -> bool {
        match self {
            SplitSel::Train => s == Split::Train,
            SplitSel::Test => s == Split::Test,
            SplitSel::All => true,
        }
    }
}

#[derive(Serialize)]
struct ViewJson {
    view: usize,
    abs_rel: f64,
    psnr: f64,
    ssim: f64,
    valid_pixels: usize,
}

#[derive(Serialize)]
struct ReportJson {
    checkpoint: String,
    split: String,
    mean_abs_rel: f64,
    mean_psnr: f64,
    mean_ssim: f64,
    views: Vec<ViewJson>,
}

fn view_json(m: &ViewMetrics) -> ViewJson {
    ViewJson {
        view: m.view,
        abs_rel: m.abs_rel,
        psnr: m.psnr,
        ssim: m.ssim,
        valid_pixels: m.valid_pixels,
    }
}

/// Per-pixel `|d - d*| / d*`; NaN outside the evaluation mask.
pub fn abs_rel_map(pred: &Grid<f64>, gt: &Grid<f64>, valid: &Grid<bool>) -> Grid<f64> {
    let (w, h) = gt.shape();
    Grid::from_fn(w, h, |x, y| {
        if *valid.get(x, y) {
            let g = *gt.get(x, y);
            (pred.get(x, y) - g).abs() / g
        } else {
            f64::NAN
        }
    })
}

/// Writes `report.json`, `report.csv` and per-view images into `out`.
pub fn run(
    cloud: &GaussianCloud,
    ckpt: &Path,
    data: &SceneData,
    split: SplitSel,
    out: &Path,
) -> Result<EvalReport> {
    let settings = render_settings(data);
    let views: Vec<&View> = data
        .gen
        .views
        .iter()
        .filter(|v| split.admits(v.split))
        .collect();
    let mut per_view = Vec::with_capacity(views.len());
    for v in &views {
        let r = render(cloud, &v.camera, &settings)?;
        let m = evaluate_view(v.id, &r, &v.color, &v.depth)?;
        let stem = format!("view_{:03}", v.id);
        let err = abs_rel_map(&r.depth, &v.depth, &depth_eval_mask(&r, &v.depth)?);
        io::write_ppm(&r.color, &out.join(format!("{stem}_color.ppm")))?;
        io::write_pfm(&r.depth, &out.join(format!("{stem}_depth.pfm")))?;
        io::write_turbo_ppm(
            &r.depth,
            data.gen.far,
            &out.join(format!("{stem}_depth.ppm")),
        )?;
        io::write_pfm(&err, &out.join(format!("{stem}_abs_rel.pfm")))?;
        io::write_turbo_ppm(&err, ABS_REL_VMAX, &out.join(format!("{stem}_abs_rel.ppm")))?;
        per_view.push(m);
    }
    let report =
        EvalReport::new(per_view).map_err(|_| FdsError::invalid("split", "no views in split"))?;

    let name = match split {
        SplitSel::Train => "train",
        SplitSel::Test => "test",
        SplitSel::All => "all",
    };
    let json = ReportJson {
        checkpoint: ckpt.display().to_string(),
        split: name.to_string(),
        mean_abs_rel: report.mean_abs_rel,
        mean_psnr: report.mean_psnr,
        mean_ssim: report.mean_ssim,
        views: report.views.iter().map(view_json).collect(),
    };
    let text = serde_json::to_string_pretty(&json).expect("report serialises");
    io::write_text(&out.join("report.json"), &(text + "\n"))?;

    let mut csv = String::from("view,abs_rel,psnr,ssim,valid_pixels\n");
    for m in &report.views {
        writeln!(
            csv,
            "{},{},{},{},{}",
            m.view, m.abs_rel, m.psnr, m.ssim, m.valid_pixels
        )
        .unwrap();
    }
    let total: usize = report.views.iter().map(|m| m.valid_pixels).sum();
    writeln!(
        csv,
        "mean,{},{},{},{}",
        report.mean_abs_rel, report.mean_psnr, report.mean_ssim, total
    )
    .unwrap();
    io::write_text(&out.join("report.csv"), &csv)?;
    Ok(report)
}
