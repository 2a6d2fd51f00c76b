use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fds::config::{parse_sampler_mode, RunConfig};
use fds::errormap::{self, ErrorMapConfig};
use fds::eval::{self, SplitSel};
use fds::manifest::{load_scene, save_scene};
use fds::{io, train, FdsError, Result};
use fds_core::oracle::{OracleConfig, OracleKind};
use fds_core::scene::{
    init_cloud, GeneratedScene, InitConfig, InitStrategy, SceneKind, SceneParams,
};
use serde_json::json;

/// Flow distillation sampling on synthetic scenes.
///
/// Exit codes: 0 success, 2 usage, 3 I/O or bad input files, 4 numerical
/// failure. Errors are also printed to stderr as one JSON object.
#[derive(Parser)]
#[command(name = "fds", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene with ground truth and an initial cloud.
    GenScene(GenScene),
    /// Train a cloud on a scene.
    Train(Train),
    /// Evaluate a checkpoint on a split of a scene.
    Eval(Eval),
    /// Mean flow error maps of radiance and prior flow for one view.
    Errormap(ErrorMap),
}

#[derive(Args)]
struct GenScene {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "textured_room", value_parser = ["textured_room", "plane", "box"])]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training views.
    #[arg(long, default_value_t = 12)]
    views: usize,
    /// Held-out views, interleaved with the training views.
    #[arg(long, default_value_t = 4)]
    test_views: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Samples per pixel axis for ground-truth colour.
    #[arg(long, default_value_t = 2)]
    supersample: usize,
    #[arg(long, default_value = "gt_surface_noisy", value_parser = ["gt_surface_noisy", "random_box"])]
    init: String,
    #[arg(long, default_value_t = 1500)]
    points: usize,
    /// Position jitter of surface samples, world units.
    #[arg(long, default_value_t = 0.03)]
    sigma_pos: f64,
    #[arg(long, default_value_t = 40)]
    floaters: usize,
    /// Seed of the initial cloud; defaults to --seed.
    #[arg(long)]
    init_seed: Option<u64>,
}

#[derive(Args)]
struct Train {
    /// TOML run configuration. Flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `off` sets the flow distillation weight to 0.
    #[arg(long, value_parser = ["on", "off"])]
    fds: Option<String>,
    #[arg(long)]
    lambda_fds: Option<f64>,
    #[arg(long)]
    lambda_dssim: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    fds_start: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// `random` or `fixed:<xi>`.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sampler_seed: Option<u64>,
    #[arg(long, value_parser = ["ground_truth", "noisy", "file"])]
    oracle: Option<String>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    occlusion_aware: bool,
    /// File oracle name pattern with `{view}` and `{iter}`.
    #[arg(long)]
    flow_pattern: Option<String>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "test", "all"])]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ErrorMap {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Manifest view id of the input view.
    #[arg(long)]
    view: usize,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 23.0)]
    sigma: f64,
    #[arg(long, default_value = "noisy", value_parser = ["ground_truth", "noisy"])]
    oracle: String,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long)]
    occlusion_aware: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Colour-map ceiling in pixels.
    #[arg(long, default_value_t = 2.0)]
    vmax: f64,
    #[arg(long)]
    out: PathBuf,
}

fn gen_scene(a: GenScene) -> Result<serde_json::Value> {
    let params = SceneParams {
        kind: SceneKind::from_name(&a.kind).expect("checked by clap"),
        seed: a.seed,
        width: a.width,
        height: a.height,
        n_train: a.views,
        n_test: a.test_views,
        supersample: a.supersample,
    };
    if a.views < 2 {
        return Err(FdsError::invalid("views", "need at least 2 training views"));
    }
    params
        .validate()
        .map_err(|e| FdsError::invalid("scene", e.to_string()))?;
    let mut init = InitConfig {
        strategy: match a.init.as_str() {
            "random_box" => InitStrategy::RandomBox,
            _ => InitStrategy::GtSurfaceNoisy {
                sigma_pos: a.sigma_pos,
            },
        },
        n_points: a.points,
        seed: a.init_seed.unwrap_or(a.seed),
        ..InitConfig::default()
    };
    init.floaters.count = a.floaters;
    init.validate()
        .map_err(|e| FdsError::invalid("init", e.to_string()))?;
    let gen = GeneratedScene::generate(params)?;
    let cloud = init_cloud(&gen, &init)?;
    let m = save_scene(&a.out, &gen, &init, &cloud)?;
    Ok(
        json!({ "scene": a.out, "views": m.views.len(), "gaussians": cloud.len(), "floaters": m.init.floaters.count }),
    )
}

fn run_config(a: Train) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    if a.scene.is_some() {
        c.scene = a.scene;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    set!(a.seed, c.seed);
    set!(a.lambda_fds, c.weights.lambda_fds);
    set!(a.lambda_dssim, c.weights.lambda_dssim);
    match a.fds.as_deref() {
        Some("off") => c.weights.lambda_fds = 0.0,
        Some(_) if c.weights.lambda_fds == 0.0 => {
            c.weights.lambda_fds = fds_core::train::TrainConfig::default().lambda_fds;
        }
        _ => {}
    }
    set!(a.iters, c.schedule.total_iters);
    set!(a.fds_start, c.schedule.fds_start);
    set!(a.batch, c.schedule.batch);
    set!(a.eval_every, c.schedule.eval_every);
    set!(a.checkpoint_every, c.schedule.checkpoint_every);
    if let Some(m) = a.sampler {
        if parse_sampler_mode(&m).is_none() {
            return Err(FdsError::Usage(format!(
                "--sampler: expected random or fixed:<xi>, got {m:?}"
            )));
        }
        c.sampler.mode = m;
    }
    set!(a.sigma, c.sampler.sigma);
    if a.sampler_seed.is_some() {
        c.sampler.seed = a.sampler_seed;
    }
    set!(a.oracle, c.oracle.kind);
    set!(a.noise, c.oracle.noise);
    set!(a.flow_pattern, c.oracle.pattern);
    if a.occlusion_aware {
        c.oracle.occlusion_aware = true;
    }
    Ok(c)
}

fn run(cmd: Cmd) -> Result<serde_json::Value> {
    match cmd {
        Cmd::GenScene(a) => gen_scene(a),
        Cmd::Train(a) => {
            let s = train::run(&run_config(a)?)?;
            let last = s.rows.last().expect("at least the initial row");
            Ok(json!({
                "out": s.out,
                "iters": last.iter,
                "abs_rel": last.abs_rel,
                "psnr": last.psnr,
                "empty_fds_steps": s.empty_fds_steps,
            }))
        }
        Cmd::Eval(a) => {
            let split = SplitSel::from_name(&a.split).expect("checked by clap");
            let data = load_scene(&a.scene)?;
            let cloud = io::read_checkpoint(&a.checkpoint)?;
            let r = eval::run(&cloud, &a.checkpoint, &data, split, &a.out)?;
            Ok(json!({ "abs_rel": r.mean_abs_rel, "psnr": r.mean_psnr, "ssim": r.mean_ssim }))
        }
        Cmd::Errormap(a) => {
            let data = load_scene(&a.scene)?;
            let cloud = io::read_checkpoint(&a.checkpoint)?;
            let kind = match a.oracle.as_str() {
                "ground_truth" => OracleKind::GroundTruth,
                _ => OracleKind::Noisy(a.noise),
            };
            let cfg = ErrorMapConfig {
                view: a.view,
                samples: 0..a.samples,
                sigma: a.sigma,
                oracle: OracleConfig {
                    kind,
                    occlusion_aware: a.occlusion_aware,
                },
                seed: a.seed,
            };
            let maps = errormap::compute(&cloud, &data, &cfg)?;
            errormap::write(&maps, a.vmax, &a.out)?;
            Ok(json!({
                "radiance_epe": maps.mean_radiance,
                "prior_epe": maps.mean_prior,
                "valid_pairs": maps.valid_pairs,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = FdsError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli.cmd) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
