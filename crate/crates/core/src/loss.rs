//! Photometric and flow-matching losses with analytic gradients.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::grid::{Grid, RgbImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" correlation with the SSIM window.
fn filter(src: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * line[x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW)
                .map(|k| win[k] * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Adjoint of [`filter`].
fn filter_transpose(src: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for k in 0..SSIM_WINDOW {
                rows[(y + k) * ow + x] += win[k] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for k in 0..SSIM_WINDOW {
                out[y * w + x + k] += win[k] * v;
            }
        }
    }
    out
}

fn channel(img: &RgbImage, c: usize) -> Vec<f64> {
    img.as_slice().iter().map(|p| p[c]).collect()
}

/// Mean SSIM over channels and window positions, optionally with its
/// gradient with respect to `a`.
fn ssim_impl(a: &RgbImage, b: &RgbImage, want_grad: bool) -> Result<(f64, Option<RgbImage>)> {
    b.ensure_shape(a.shape())?;
    let (w, h) = a.shape();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(w, h));
    }
    let win = gaussian_window();
    let positions = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let norm = 1.0 / (3 * positions) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Grid::filled(w, h, [0.0; 3]));
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter(&x, w, h, &win);
        let my = filter(&y, w, h, &win);
        let exx = filter(&xx, w, h, &win);
        let eyy = filter(&yy, w, h, &win);
        let exy = filter(&xy, w, h, &win);
        let mut d_mx = vec![0.0; positions];
        let mut d_exx = vec![0.0; positions];
        let mut d_exy = vec![0.0; positions];
        for i in 0..positions {
            let (ux, uy) = (mx[i], my[i]);
            let sxx = exx[i] - ux * ux;
            let syy = eyy[i] - uy * uy;
            let sxy = exy[i] - ux * uy;
            let n1 = 2.0 * ux * uy + C1;
            let n2 = 2.0 * sxy + C2;
            let d1 = ux * ux + uy * uy + C1;
            let d2 = sxx + syy + C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            if want_grad {
                d_mx[i] =
                    norm * s * (2.0 * uy / n1 - 2.0 * uy / n2 - 2.0 * ux / d1 + 2.0 * ux / d2);
                d_exx[i] = -norm * s / d2;
                d_exy[i] = norm * 2.0 * s / n2;
            }
        }
        if let Some(g) = grad.as_mut() {
            let ga = filter_transpose(&d_mx, w, h, &win);
            let gb = filter_transpose(&d_exx, w, h, &win);
            let gc = filter_transpose(&d_exy, w, h, &win);
            for (i, px) in g.as_mut_slice().iter_mut().enumerate() {
                px[c] = ga[i] + 2.0 * x[i] * gb[i] + y[i] * gc[i];
            }
        }
    }
    Ok((total * norm, grad))
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5) over valid window
/// positions, averaged over the three channels. Inputs are in `[0, 1]`.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    ssim_impl(a, b, false).map(|(s, _)| s)
}

/// SSIM together with `∂SSIM/∂a`.
pub fn ssim_with_grad(a: &RgbImage, b: &RgbImage) -> Result<(f64, RgbImage)> {
    let (s, g) = ssim_impl(a, b, true)?;
    Ok((s, g.expect("gradient requested")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricLoss {
    /// `(1 - λ) L1 + λ D-SSIM`
    pub total: f64,
    pub l1: f64,
    /// `(1 - SSIM) / 2`
    pub dssim: f64,
    /// `∂total/∂rendered colour`
    pub grad: RgbImage,
}

/// Blend of mean absolute error and structural dissimilarity.
pub fn photometric_loss(
    rendered: &RgbImage,
    gt: &RgbImage,
    lambda_dssim: f64,
) -> Result<PhotometricLoss> {
    gt.ensure_shape(rendered.shape())?;
    let n = (rendered.len() * 3) as f64;
    let mut l1 = 0.0;
    let mut grad = Grid::filled(rendered.width(), rendered.height(), [0.0; 3]);
    let w_l1 = (1.0 - lambda_dssim) / n;
    for ((r, t), g) in rendered
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(grad.as_mut_slice())
    {
        for c in 0..3 {
            let d = r[c] - t[c];
            l1 += d.abs();
            g[c] = if d > 0.0 {
                w_l1
            } else if d < 0.0 {
                -w_l1
            } else {
                0.0
            };
        }
    }
    let l1 = l1 / n;
    let (s, gs) = ssim_with_grad(rendered, gt)?;
    let dssim = 0.5 * (1.0 - s);
    for (g, d) in grad.as_mut_slice().iter_mut().zip(gs.as_slice()) {
        for c in 0..3 {
            g[c] -= 0.5 * lambda_dssim * d[c];
        }
    }
    Ok(PhotometricLoss {
        total: (1.0 - lambda_dssim) * l1 + lambda_dssim * dssim,
        l1,
        dssim,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdsLoss {
    /// Mean over jointly valid pixels of `‖prior − radiance‖₂`.
    pub loss: f64,
    /// `∂loss/∂radiance`, with the prior held constant.
    pub grad: Grid<[f64; 2]>,
    pub valid_count: usize,
}

impl FdsLoss {
    pub fn no_valid_pixels(&self) -> bool {
        self.valid_count == 0
    }
}

/// Residuals shorter than this get a zero subgradient.
const FDS_EPS: f64 = 1e-8;

/// Flow-matching loss between a prior flow and the rendered-depth flow.
/// Only the radiance side receives a gradient.
pub fn fds_loss(prior: &FlowField, radiance: &FlowField) -> Result<FdsLoss> {
    radiance.vectors.ensure_shape(prior.shape())?;
    let (w, h) = prior.shape();
    let mut grad = Grid::filled(w, h, [0.0; 2]);
    let mut sum = 0.0;
    let mut count = 0usize;
    let joint: Vec<usize> = (0..w * h)
        .filter(|&i| prior.valid.as_slice()[i] && radiance.valid.as_slice()[i])
        .collect();
    if joint.is_empty() {
        return Ok(FdsLoss {
            loss: 0.0,
            grad,
            valid_count: 0,
        });
    }
    let inv = 1.0 / joint.len() as f64;
    for i in joint {
        let p = prior.vectors.as_slice()[i];
        let r = radiance.vectors.as_slice()[i];
        let (dx, dy) = (p[0] - r[0], p[1] - r[1]);
        let norm = (dx * dx + dy * dy).sqrt();
        sum += norm;
        count += 1;
        if norm >= FDS_EPS {
            grad.as_mut_slice()[i] = [-dx / norm * inv, -dy / norm * inv];
        }
    }
    Ok(FdsLoss {
        loss: sum / count as f64,
        grad,
        valid_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
        Grid::from_fn(w, h, |_, _| {
            core::array::from_fn(|_| rng.random_range(0.05..0.95))
        })
    }

    fn flow(w: usize, h: usize, v: [f64; 2]) -> FlowField {
        FlowField {
            vectors: Grid::filled(w, h, v),
            valid: Grid::filled(w, h, true),
        }
    }

    #[test]
    fn window_is_normalised_and_symmetric() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], w[10]);
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 24, 20);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = random_image(&mut rng, 24, 20);
        let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-12);
        let checker = Grid::from_fn(32, 32, |x, y| [((x / 2 + y / 2) % 2) as f64; 3]);
        let inverted = checker.map(|p| p.map(|v| 1.0 - v));
        assert!(ssim(&checker, &inverted).unwrap() < 0.2);
        assert_eq!(
            ssim(
                &Grid::filled(8, 30, [0.0; 3]),
                &Grid::filled(8, 30, [0.0; 3])
            ),
            Err(Error::ImageTooSmall(8, 30))
        );
    }

    #[test]
    fn photometric_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(&mut rng, 16, 16);
        let same = photometric_loss(&a, &a, 0.2).unwrap();
        assert!(same.total.abs() < 1e-12);
        let dark = Grid::filled(16, 16, [0.3; 3]);
        let shifted = Grid::filled(16, 16, [0.4; 3]);
        let l = photometric_loss(&dark, &shifted, 0.2).unwrap();
        assert!((l.l1 - 0.1).abs() < 1e-12);
        assert!(((1.0 - 0.2) * l.l1 - 0.08).abs() < 1e-12);
        assert!(photometric_loss(&a, &Grid::filled(15, 16, [0.0; 3]), 0.2).is_err());
    }

    #[test]
    fn photometric_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        let l = photometric_loss(&a, &b, 0.2).unwrap();
        let h = 1e-4;
        let mut worst = 0.0f64;
        for i in 0..a.len() {
            for c in 0..3 {
                let mut p = a.clone();
                p.as_mut_slice()[i][c] += h;
                let mut m = a.clone();
                m.as_mut_slice()[i][c] -= h;
                let fd = (photometric_loss(&p, &b, 0.2).unwrap().total
                    - photometric_loss(&m, &b, 0.2).unwrap().total)
                    / (2.0 * h);
                let g = l.grad.as_slice()[i][c];
                worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()));
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn fds_loss_examples() {
        let a = flow(4, 3, [1.0, 2.0]);
        let same = fds_loss(&a, &a).unwrap();
        assert_eq!(same.loss, 0.0);
        assert!(same.grad.as_slice().iter().all(|g| *g == [0.0, 0.0]));

        let unit = fds_loss(&flow(4, 3, [2.0, 2.0]), &a).unwrap();
        assert!((unit.loss - 1.0).abs() < 1e-15);

        let prior = flow(4, 3, [4.0, 6.0]);
        let l = fds_loss(&prior, &a).unwrap();
        assert!((l.loss - 5.0).abs() < 1e-15);
        let g = l.grad.get(1, 1);
        assert!((g[0] + 0.6 / 12.0).abs() < 1e-15 && (g[1] + 0.8 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn fds_loss_only_counts_joint_validity() {
        let mut prior = flow(4, 1, [1.0, 0.0]);
        let radiance = flow(4, 1, [0.0, 0.0]);
        *prior.valid.get_mut(0, 0) = false;
        *prior.vectors.get_mut(0, 0) = [1e6, 0.0];
        let l = fds_loss(&prior, &radiance).unwrap();
        assert_eq!(l.valid_count, 3);
        assert!((l.loss - 1.0).abs() < 1e-15);
        assert_eq!(*l.grad.get(0, 0), [0.0, 0.0]);

        prior.valid = Grid::filled(4, 1, false);
        let none = fds_loss(&prior, &radiance).unwrap();
        assert!(none.no_valid_pixels() && none.loss == 0.0);
        assert!(fds_loss(&flow(3, 1, [0.0; 2]), &radiance).is_err());
    }
}
