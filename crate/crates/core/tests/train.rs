mod common;

use common::{camera, perturbed, random_cloud, rng};
use fds_core::flow::{radiance_flow, radiance_flow_backward};
use fds_core::gaussian::param;
use fds_core::loss::fds_loss;
use fds_core::optim::LearningRates;
use fds_core::oracle::{FlowPrior, GeometryOracle, OracleConfig, OracleKind};
use fds_core::sampling::{view_at, SamplerConfig, SamplerMode};
use fds_core::train::{TrainConfig, TrainView, Trainer};
use fds_core::{
    render, render_backward, render_forward, Error, GaussianCloud, GaussianPoint, Grid,
    RenderSettings, RigidTransform, Vec3,
};
use rand::Rng;

const SIZE: usize = 24;

fn oracle(kind: OracleKind, depth: f64, views: usize) -> GeometryOracle {
    let cfg = OracleConfig {
        kind,
        occlusion_aware: false,
    };
    GeometryOracle::new(cfg, 3, vec![Grid::filled(SIZE, SIZE, depth); views], None).unwrap()
}

/// A random cloud and two views whose images come from a different random cloud.
fn fixture(seed: u64) -> (GaussianCloud, Vec<TrainView>) {
    let mut r = rng(seed);
    let cams = [
        camera(SIZE, 30.0, RigidTransform::identity()),
        camera(
            SIZE,
            30.0,
            RigidTransform::from_translation(Vec3::new(0.1, 0.0, 0.0)),
        ),
    ];
    let cloud = random_cloud(&mut r, 30, &cams[0]);
    let target = random_cloud(&mut r, 30, &cams[0]);
    let views = cams
        .iter()
        .map(|c| TrainView {
            camera: *c,
            color: render(&target, c, &RenderSettings::default())
                .unwrap()
                .color,
        })
        .collect();
    (cloud, views)
}

fn config(total: usize, fds_start: usize, lambda_fds: f64) -> TrainConfig {
    TrainConfig {
        total_iters: total,
        fds_start,
        lambda_fds,
        ..TrainConfig::default()
    }
}

fn run(cfg: TrainConfig, seed: u64) -> (GaussianCloud, Vec<fds_core::train::StepReport>) {
    let (cloud, views) = fixture(seed);
    let mut t = Trainer::new(cfg, cloud, views, oracle(OracleKind::Noisy(0.5), 3.0, 2)).unwrap();
    let mut reports = vec![];
    while !t.done() {
        reports.push(t.step().unwrap());
    }
    (t.cloud, reports)
}

#[test]
fn zero_weight_matches_photometric_only_bit_for_bit() {
    let (a, ra) = run(config(30, 0, 0.0), 1);
    let (b, rb) = run(config(30, 30, 0.015), 1);
    assert_eq!(a, b);
    assert!(ra.iter().chain(&rb).all(|r| r.loss_fds.is_none()));
}

#[test]
fn schedule_gate_keeps_early_steps_identical() {
    let (_, with) = run(config(20, 10, 0.5), 2);
    let (_, without) = run(config(20, 10, 0.0), 2);
    for (a, b) in with.iter().zip(&without).take(10) {
        assert_eq!(a, b);
        assert!(a.loss_fds.is_none() && a.eps_t.is_none());
    }
    assert!(with[10..]
        .iter()
        .all(|r| r.loss_fds.is_some() && r.eps_t.is_some()));
    assert_ne!(with[10].grad_norms, without[10].grad_norms);

    let (mid_a, _) = run(config(10, 10, 0.5), 2);
    let (mid_b, _) = run(config(10, 10, 0.0), 2);
    assert_eq!(mid_a, mid_b);
}

#[test]
fn zero_iterations_return_the_initial_cloud() {
    let (cloud, views) = fixture(3);
    let mut t = Trainer::new(
        config(0, 0, 0.015),
        cloud.clone(),
        views,
        oracle(OracleKind::GroundTruth, 3.0, 2),
    )
    .unwrap();
    assert!(t.done());
    assert!(t.step().is_err());
    assert_eq!(t.cloud, cloud);
}

#[test]
fn reruns_are_bit_identical() {
    assert_eq!(run(config(25, 5, 0.015), 4), run(config(25, 5, 0.015), 4));
}

#[test]
fn invalid_schedules_are_rejected() {
    let (cloud, views) = fixture(5);
    let bad = [
        config(10, 11, 0.015),
        TrainConfig {
            lambda_normal: 0.1,
            ..config(10, 0, 0.015)
        },
    ];
    for cfg in bad {
        let r = Trainer::new(
            cfg,
            cloud.clone(),
            views.clone(),
            oracle(OracleKind::GroundTruth, 3.0, 2),
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }
}

#[test]
fn missing_prior_view_is_reported() {
    let (cloud, views) = fixture(6);
    let mut t = Trainer::new(
        config(5, 0, 0.015),
        cloud,
        views,
        oracle(OracleKind::GroundTruth, 3.0, 1),
    )
    .unwrap();
    let err = (0..5).find_map(|_| t.step().err()).unwrap();
    assert_eq!(err, Error::MissingGroundTruth(1));
}

/// One large Gaussian in front of a camera that already matches its image.
/// Only flow distillation moves it.
fn single_gaussian(depth: f64) -> (GaussianCloud, TrainView) {
    let cam = camera(SIZE, 30.0, RigidTransform::identity());
    let g = GaussianPoint::isotropic(Vec3::new(0.0, 0.0, depth), 0.6, 0.95, [0.4, 0.5, 0.6]);
    let cloud = GaussianCloud::new(vec![g]);
    let color = render(&cloud, &cam, &RenderSettings::default())
        .unwrap()
        .color;
    (cloud, TrainView { camera: cam, color })
}

fn depth_only(iters: usize, position: f64) -> TrainConfig {
    TrainConfig {
        total_iters: iters,
        fds_start: 0,
        lambda_fds: 1.0,
        lambda_dssim: 0.0,
        rates: LearningRates {
            position_init: position,
            position_final: position,
            log_scale: 0.0,
            rotation: 0.0,
            opacity: 0.0,
            color: 0.0,
        },
        sampler: SamplerConfig {
            sigma: 3.0,
            mode: SamplerMode::Fixed(0.0),
            seed: 0,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn one_step_pulls_depth_towards_the_prior() {
    for (start, gt) in [(2.4, 2.0), (1.7, 2.0)] {
        let (cloud, view) = single_gaussian(start);
        let before = cloud.points()[0].mu.z - gt;
        let mut t = Trainer::new(
            depth_only(1, 1e-3),
            cloud,
            vec![view],
            oracle(OracleKind::GroundTruth, gt, 1),
        )
        .unwrap();
        let r = t.step().unwrap();
        assert!(r.loss_fds.unwrap() > 0.0);
        let after = t.cloud.points()[0].mu.z - gt;
        assert!(
            after.abs() < before.abs() && after.signum() == before.signum(),
            "{before} -> {after}"
        );
    }
}

#[test]
fn fds_loss_decreases_monotonically_for_small_steps() {
    let (cloud, view) = single_gaussian(2.5);
    let mut t = Trainer::new(
        depth_only(60, 2e-3),
        cloud,
        vec![view],
        oracle(OracleKind::GroundTruth, 2.0, 1),
    )
    .unwrap();
    let losses: Vec<f64> = (0..60)
        .map(|_| t.step().unwrap().loss_fds.unwrap())
        .collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
    assert!(losses[59] < 0.9 * losses[0]);
}

/// `L_fds` for a fixed prior and sampled camera, as a function of the cloud only.
fn fds_objective(
    cloud: &GaussianCloud,
    view: &TrainView,
    prior: &fds_core::flow::FlowField,
    sampled: &fds_core::Camera,
) -> (f64, u64) {
    let out = render(cloud, &view.camera, &RenderSettings::default()).unwrap();
    let fg = out.foreground();
    let rad = radiance_flow(&out.depth, Some(&fg), &view.camera, sampled).unwrap();
    let l = fds_loss(prior, &rad).unwrap();
    // The valid set is part of the discrete structure.
    let sig = rad
        .valid
        .as_slice()
        .iter()
        .fold(out.signature, |h, v| h.rotate_left(1) ^ (*v as u64));
    (l.loss, sig)
}

#[test]
fn distillation_gradient_treats_the_prior_as_constant() {
    let cam = camera(SIZE, 30.0, RigidTransform::identity());
    let mut r = rng(8);
    let mut cloud = random_cloud(&mut r, 12, &cam);
    let view = TrainView {
        camera: cam,
        color: Grid::filled(SIZE, SIZE, [0.5; 3]),
    };
    let sampled = view_at(&cam, 0.15, r.random());
    let prior = oracle(OracleKind::Noisy(0.5), 3.0, 1)
        .prior_flow(0, 0, &cam, &sampled.camera)
        .unwrap();

    let (out, state) = render_forward(&cloud, &cam, &RenderSettings::default()).unwrap();
    let rad = radiance_flow(&out.depth, Some(&out.foreground()), &cam, &sampled.camera).unwrap();
    let l = fds_loss(&prior, &rad).unwrap();
    let gd = radiance_flow_backward(&out.depth, &rad, &cam, &sampled.camera, &l.grad).unwrap();
    render_backward(
        &mut cloud,
        &cam,
        &state,
        &Grid::filled(SIZE, SIZE, [0.0; 3]),
        &gd,
    )
    .unwrap();
    let analytic = cloud.grads().to_vec();

    let h = 1e-5;
    let (mut worst, mut checked) = (0.0f64, 0);
    let base = fds_objective(&cloud, &view, &prior, &sampled.camera).1;
    for i in 0..cloud.len() {
        for k in param::MU.chain(param::LOG_SCALE).chain([param::OPACITY]) {
            let (lp, sp) =
                fds_objective(&perturbed(&cloud, i, k, h), &view, &prior, &sampled.camera);
            let (lm, sm) =
                fds_objective(&perturbed(&cloud, i, k, -h), &view, &prior, &sampled.camera);
            if sp != base || sm != base {
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic[i][k];
            worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-6));
            checked += 1;
        }
    }
    assert!(checked > cloud.len() * 5, "checked {checked}");
    assert!(worst < 1e-2, "worst {worst}");
    assert!(analytic
        .iter()
        .flat_map(|g| g[param::COLOR].iter())
        .all(|v| *v == 0.0));
}
