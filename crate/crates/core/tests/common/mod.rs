#![allow(dead_code)]

pub mod oracle;

use dynscene::projection::{make_trajectory, Camera, Intrinsics, TrajectoryKind, TrajectoryParams};
use dynscene::splat4d::{render, render_grad, Splat, SplatScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_SIZE: usize = 32;
pub const GRAD_FRAMES: usize = 8;
pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;
/// Below this magnitude both gradients count as zero.
pub const FD_ABS_FLOOR: f64 = 1e-9;

pub fn random_splat_scene(seed: u64, n: usize) -> (SplatScene<f64>, Camera<f64>, f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = GRAD_SIZE as f64;
    let intr = Intrinsics::centered(GRAD_SIZE, GRAD_SIZE, f);
    let cams = make_trajectory::<f64>(TrajectoryKind::Orbit, 3, &TrajectoryParams::default(), intr).unwrap();
    let cam = cams[rng.random_range(0..3)].clone();
    let mut scene = SplatScene::empty(GRAD_FRAMES);
    for _ in 0..n {
        let z = rng.random_range(2.4..3.6);
        let mut s = Splat::isotropic(
            [rng.random_range(-0.35..0.35) * z, rng.random_range(-0.35..0.35) * z, z],
            rng.random_range(0.03..0.1),
            rng.random_range(0.2..0.85),
            [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)],
        );
        for j in 0..3 {
            s.log_scale[j] += rng.random_range(-0.4..0.4);
            s.velocity[j] = rng.random_range(-0.1..0.1);
            s.accel[j] = rng.random_range(-0.1..0.1);
        }
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.rotation = q.map(|v| v / qn);
        s.motion_enabled = rng.random_bool(0.7);
        scene.push(s);
    }
    let t = rng.random_range(0.0..(GRAD_FRAMES - 1) as f64);
    let weights = (0..3 * GRAD_SIZE * GRAD_SIZE).map(|_| rng.random_range(-1.0..1.0)).collect();
    (scene, cam, t, weights)
}

pub fn weighted_loss(scene: &SplatScene<f64>, cam: &Camera<f64>, t: f64, w: &[f64]) -> (f64, Vec<(u32, u32)>) {
    let out = render(scene, cam, t, GRAD_SIZE, GRAD_SIZE);
    (out.color.iter().zip(w).map(|(c, w)| c * w).sum(), out.signature())
}

/// Parameter groups checked against finite differences.
pub const GROUPS: [&str; 7] = ["position", "color", "opacity", "log_scale", "velocity", "accel", "rotation"];

fn param_mut<'a>(scene: &'a mut SplatScene<f64>, group: &str, i: usize, j: usize) -> &'a mut f64 {
    match group {
        "position" => &mut scene.position[i][j],
        "color" => &mut scene.color_logit[i][j],
        "opacity" => &mut scene.opacity_logit[i],
        "log_scale" => &mut scene.log_scale[i][j],
        "velocity" => &mut scene.velocity[i][j],
        "accel" => &mut scene.accel[i][j],
        "rotation" => &mut scene.rotation[i][j],
        _ => unreachable!(),
    }
}

#[derive(Debug, Default, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel: f64,
    pub worst_where: String,
}

/// Central-difference check of every parameter of one random scene, skipping
/// perturbations that change which splats touch which pixels or their order.
pub fn check_gradients(seed: u64, n: usize, groups: &[&str]) -> GradCheck {
    let (scene, cam, t, w) = random_splat_scene(seed, n);
    let out = render(&scene, &cam, t, GRAD_SIZE, GRAD_SIZE);
    let base_sig = out.signature();
    let g = render_grad(&scene, &cam, &out, &w);
    let mut res = GradCheck::default();
    for &group in groups {
        let dims = match group {
            "opacity" => 1,
            "rotation" => 4,
            _ => 3,
        };
        for i in 0..scene.len() {
            for j in 0..dims {
                let analytic = match group {
                    "position" => g.position[i][j],
                    "color" => g.color_logit[i][j],
                    "opacity" => g.opacity_logit[i],
                    "log_scale" => g.log_scale[i][j],
                    "velocity" => g.velocity[i][j],
                    "accel" => g.accel[i][j],
                    _ => g.rotation[i][j],
                };
                let mut plus = scene.clone();
                *param_mut(&mut plus, group, i, j) += FD_STEP;
                let mut minus = scene.clone();
                *param_mut(&mut minus, group, i, j) -= FD_STEP;
                let (lp, sp) = weighted_loss(&plus, &cam, t, &w);
                let (lm, sm) = weighted_loss(&minus, &cam, t, &w);
                if sp != base_sig || sm != base_sig {
                    res.skipped += 1;
                    continue;
                }
                let fd = (lp - lm) / (2.0 * FD_STEP);
                let scale = analytic.abs().max(fd.abs());
                let rel = if scale < FD_ABS_FLOOR { 0.0 } else { (analytic - fd).abs() / scale };
                res.checked += 1;
                if rel > res.worst_rel {
                    res.worst_rel = rel;
                    res.worst_where = format!("seed {seed} {group}[{i}][{j}]: analytic {analytic:e} fd {fd:e}");
                }
            }
        }
    }
    res
}

use dynscene::config::RunConfig;
use dynscene::diffusion::NoiseSchedule;
use dynscene::geometry::{aggregate, FramePointClouds};
use dynscene::guidance::{GenerationContext, GuidancePolicy, ToyDenoiserBank};
use dynscene::projection::{render_grid, ViewGrid};
use dynscene::scene::{synth_scene, DynamicSceneBundle};

/// A synthesized scene with its coarse and ground-truth grids.
pub struct Fixture {
    pub cfg: RunConfig,
    pub bundle: DynamicSceneBundle,
    pub fpc: FramePointClouds,
    pub coarse: ViewGrid,
    pub gt: ViewGrid,
    pub schedule: NoiseSchedule<f64>,
}

pub fn fixture(cfg: RunConfig) -> Fixture {
    let cams = make_trajectory(cfg.trajectory, cfg.views, &cfg.trajectory_params, cfg.intrinsics()).unwrap();
    let bundle = synth_scene(&cfg.scene_spec(), Some(&cams)).unwrap();
    let fpc = aggregate(&bundle).unwrap();
    let coarse = render_grid(&fpc, &bundle.frames, &cams, cfg.height, cfg.width, cfg.footprint).unwrap();
    let gt = bundle.gt_grid.clone().unwrap();
    let schedule = cfg.schedule().unwrap();
    Fixture { cfg, bundle, fpc, coarse, gt, schedule }
}

/// Small scene for module tests: 32×32, 3 frames, 4 views.
pub fn small_fixture() -> Fixture {
    let mut cfg = RunConfig::standard();
    cfg.height = 32;
    cfg.width = 32;
    cfg.frames = 3;
    cfg.views = 4;
    fixture(cfg)
}

impl Fixture {
    /// Generated grid with toys aimed at `targets`.
    pub fn generate(&self, targets: &ViewGrid, noise_level: f64, policy: &GuidancePolicy) -> ViewGrid {
        let bank = ToyDenoiserBank::from_grid(targets, self.cfg.codec, noise_level, &self.schedule).unwrap();
        GenerationContext { coarse: &self.coarse, denoiser: &bank, policy, schedule: &self.schedule, codec: self.cfg.codec }
            .generate_grid()
            .unwrap()
    }
}
