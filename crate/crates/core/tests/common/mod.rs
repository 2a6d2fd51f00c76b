#![allow(dead_code)]

use fds_core::gaussian::{GaussianPoint, Params, PARAM_COUNT};
use fds_core::{Camera, GaussianCloud, RigidTransform, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn camera(size: usize, focal: f64, pose: RigidTransform) -> Camera {
    Camera::centered(focal, size, size, pose).unwrap()
}

/// Gaussians scattered in the frustum of an identity-pose camera.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, cam: &Camera) -> GaussianCloud {
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.random_range(2.0..4.0);
        let u = rng.random_range(2.0..cam.width as f64 - 3.0);
        let v = rng.random_range(2.0..cam.height as f64 - 3.0);
        let mu = cam.ray(fds_core::Pixel::new(u, v)) * z;
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        pts.push(GaussianPoint {
            mu,
            log_scale: Vec3::from_fn(|_, _| rng.random_range(0.04f64..0.15).ln()),
            quat: q,
            opacity_logit: rng.random_range(-1.5..2.0),
            color_logit: Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0)),
        });
    }
    GaussianCloud::new(pts)
}

pub fn perturbed(cloud: &GaussianCloud, index: usize, param: usize, delta: f64) -> GaussianCloud {
    let mut pts = cloud.points().to_vec();
    let mut p: Params = pts[index].to_params();
    p[param] += delta;
    pts[index] = GaussianPoint::from_params(&p);
    GaussianCloud::new(pts)
}

/// Parameter classes for the per-class error floor.
const CLASSES: [std::ops::Range<usize>; 5] = [0..3, 3..6, 6..10, 10..11, 11..14];

/// Central-difference check of `analytic` against `loss`, skipping
/// parameters whose perturbation changes the discrete structure reported by
/// `signature`. The relative error of each entry is
/// `|fd - a| / max(|fd|, |a|, 1e-3 · max|a| over its parameter class)`.
/// Returns (max relative error, checked, skipped).
pub fn check_gradients(
    cloud: &GaussianCloud,
    analytic: &[Params],
    h: f64,
    mut loss: impl FnMut(&GaussianCloud) -> (f64, u64),
) -> (f64, usize, usize) {
    let (_, base_sig) = loss(cloud);
    let mut floor = [0.0f64; PARAM_COUNT];
    for class in CLASSES {
        let m = analytic
            .iter()
            .flat_map(|g| g[class.clone()].iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for k in class {
            floor[k] = 1e-3 * m.max(1e-12);
        }
    }
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for i in 0..cloud.len() {
        for k in 0..PARAM_COUNT {
            let (lp, sp) = loss(&perturbed(cloud, i, k, h));
            let (lm, sm) = loss(&perturbed(cloud, i, k, -h));
            if sp != base_sig || sm != base_sig {
                skipped += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic[i][k];
            let err = (fd - a).abs() / fd.abs().max(a.abs()).max(floor[k]);
            if err > 1e-4 && std::env::var("GRAD_DEBUG").is_ok() {
                eprintln!("i {i} k {k} fd {fd:e} a {a:e} err {err:e}");
            }
            worst = worst.max(err);
            checked += 1;
        }
    }
    (worst, checked, skipped)
}
