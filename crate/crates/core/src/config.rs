//! Run configuration: every hyperparameter in one flat key-value record.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::diffusion::{LatentCodec, NoiseSchedule, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_NUM_STEPS};
use crate::error::{Error, Result};
use crate::guidance::{GuidancePolicy, DEFAULT_CFG_SCALE, DEFAULT_PCGD_FRACTION};
use crate::kv::KeyValues;
use crate::projection::{Footprint, Intrinsics, TrajectoryKind, TrajectoryParams};
use crate::scene::{MotionKind, SceneSpec};
use crate::splat4d::{FineConfig, LrSchedule, RefineConfig, TrainConfig};

/// Where the toy denoisers get their clean targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DenoiserTarget {
    /// The oracle's ground-truth grid (requires a synthetic bundle).
    #[default]
    GroundTruth,
    /// The coarse point-cloud renders.
    Coarse,
}

impl DenoiserTarget {
    pub fn name(self) -> &'static str {
        match self {
            Self::GroundTruth => "ground_truth",
            Self::Coarse => "coarse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ground_truth" => Some(Self::GroundTruth),
            "coarse" => Some(Self::Coarse),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Ingest this bundle instead of synthesizing one.
    pub bundle: Option<PathBuf>,

    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub views: usize,
    pub focal: Option<f64>,
    pub motion: MotionKind,
    pub motion_px_per_frame: f64,

    pub trajectory: TrajectoryKind,
    pub trajectory_params: TrajectoryParams,
    pub footprint: Footprint,

    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub codec: LatentCodec,

    pub cfg_scale: f64,
    pub adaptive_cfg: bool,
    pub pcgd_fraction: f64,
    pub rlr: bool,
    pub cfg_for_later_frames: bool,

    pub denoiser_target: DenoiserTarget,
    pub denoiser_noise: f64,

    pub refine: RefineConfig,
    pub modulation: bool,

    pub max_splats: usize,
    pub coarse_iters: usize,
    pub fine_iters: usize,
    pub fine: bool,
    pub lambda: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub fine_lr: f64,
    pub color_lr: f64,
    pub opacity_lr: f64,
    pub scale_lr: f64,
    pub rotation_lr: f64,
    pub refresh: usize,
}

impl Default for RunConfig {
    /// Full-scale defaults: 576x1024, 16 frames, 25 views.
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            bundle: None,
            height: 576,
            width: 1024,
            frames: 16,
            views: 25,
            focal: None,
            motion: MotionKind::Linear,
            motion_px_per_frame: 1.5,
            trajectory: TrajectoryKind::Orbit,
            trajectory_params: TrajectoryParams::default(),
            footprint: Footprint::Pixel,
            num_steps: DEFAULT_NUM_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            codec: LatentCodec::Identity,
            cfg_scale: DEFAULT_CFG_SCALE,
            adaptive_cfg: true,
            pcgd_fraction: DEFAULT_PCGD_FRACTION,
            rlr: true,
            cfg_for_later_frames: false,
            denoiser_target: DenoiserTarget::GroundTruth,
            denoiser_noise: 0.0,
            refine: RefineConfig::default(),
            modulation: true,
            max_splats: 20_000,
            coarse_iters: 9000,
            fine_iters: 1000,
            fine: true,
            lambda: 0.1,
            lr_start: train.lr.start,
            lr_end: train.lr.end,
            fine_lr: 1.6e-4,
            color_lr: train.color_lr,
            opacity_lr: train.opacity_lr,
            scale_lr: train.scale_lr,
            rotation_lr: train.rotation_lr,
            refresh: 100,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
}

fn enumerated<T>(key: &str, v: &str, parse: impl Fn(&str) -> Option<T>, allowed: &str) -> std::result::Result<T, String> {
    parse(v).ok_or_else(|| format!("{key}: `{v}` is not one of {allowed}"))
}

impl RunConfig {
    /// Desk-scale preset: 64×64, 8 frames, 9 views.
    pub fn standard() -> Self {
        Self { height: 64, width: 64, frames: 8, views: 9, ..Self::default() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::default()),
            "standard" => Some(Self::standard()),
            _ => None,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let b = |v: &str| parse_bool(v).ok_or_else(|| format!("{key}: `{v}` is not a boolean"));
        match key {
            "seed" => self.seed = num(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "bundle" => self.bundle = (!v.is_empty() && v != "none").then(|| PathBuf::from(v)),
            "scene.height" => self.height = num(key, v)?,
            "scene.width" => self.width = num(key, v)?,
            "scene.frames" => self.frames = num(key, v)?,
            "scene.views" => self.views = num(key, v)?,
            "scene.focal" => self.focal = if v == "auto" { None } else { Some(num(key, v)?) },
            "scene.motion" => self.motion = enumerated(key, v, MotionKind::parse, "none, linear, circular")?,
            "scene.motion_px_per_frame" => self.motion_px_per_frame = num(key, v)?,
            "trajectory.kind" => self.trajectory = enumerated(key, v, TrajectoryKind::parse, "orbit, arc, lateral")?,
            "trajectory.radius" => self.trajectory_params.radius = num(key, v)?,
            "trajectory.max_yaw_deg" => self.trajectory_params.max_yaw_deg = num(key, v)?,
            "trajectory.lateral_extent" => self.trajectory_params.lateral_extent = num(key, v)?,
            "trajectory.symmetric" => self.trajectory_params.symmetric = b(v)?,
            "projection.footprint" => {
                self.footprint = Footprint::from_size(num(key, v)?).map_err(|_| format!("{key}: must be 1 or 3"))?
            }
            "diffusion.num_steps" => self.num_steps = num(key, v)?,
            "diffusion.beta_start" => self.beta_start = num(key, v)?,
            "diffusion.beta_end" => self.beta_end = num(key, v)?,
            "diffusion.codec" => self.codec = enumerated(key, v, LatentCodec::parse, "identity, avgpool2")?,
            "guidance.cfg_scale" => self.cfg_scale = num(key, v)?,
            "guidance.adaptive_cfg" => self.adaptive_cfg = b(v)?,
            "guidance.pcgd_fraction" => self.pcgd_fraction = num(key, v)?,
            "guidance.rlr" => self.rlr = b(v)?,
            "guidance.cfg_for_later_frames" => self.cfg_for_later_frames = b(v)?,
            "denoiser.target" => self.denoiser_target = enumerated(key, v, DenoiserTarget::parse, "ground_truth, coarse")?,
            "denoiser.noise_level" => self.denoiser_noise = num(key, v)?,
            "refine.steps" => self.refine.steps = num(key, v)?,
            "refine.w_start" => self.refine.w_start = num(key, v)?,
            "refine.w_end" => self.refine.w_end = num(key, v)?,
            "refine.std_eps" => self.refine.std_eps = num(key, v)?,
            "refine.modulation" => self.modulation = b(v)?,
            "train.max_splats" => self.max_splats = num(key, v)?,
            "train.coarse_iters" => self.coarse_iters = num(key, v)?,
            "train.fine_iters" => self.fine_iters = num(key, v)?,
            "train.fine" => self.fine = b(v)?,
            "train.lambda" => self.lambda = num(key, v)?,
            "train.lr_start" => self.lr_start = num(key, v)?,
            "train.lr_end" => self.lr_end = num(key, v)?,
            "train.fine_lr" => self.fine_lr = num(key, v)?,
            "train.color_lr" => self.color_lr = num(key, v)?,
            "train.opacity_lr" => self.opacity_lr = num(key, v)?,
            "train.scale_lr" => self.scale_lr = num(key, v)?,
            "train.rotation_lr" => self.rotation_lr = num(key, v)?,
            "train.refresh" => self.refresh = num(key, v)?,
            _ => return Err(format!("{key}: unknown key")),
        }
        Ok(())
    }

    /// Starts from the `preset` key if present (default `full`), applies all
    /// other keys, validates. Every bad key is reported.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut errors = Vec::new();
        let mut cfg = match kv.get("preset") {
            None => Self::default(),
            Some(p) => Self::preset(p).unwrap_or_else(|| {
                errors.push(format!("preset: `{p}` is not one of full, standard"));
                Self::default()
            }),
        };
        for (k, v) in kv.iter() {
            if k != "preset" {
                if let Err(e) = cfg.set(k, v) {
                    errors.push(e);
                }
            }
        }
        errors.extend(cfg.problems());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    /// Applies `key=value` overrides on top of `self`.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut kv = self.to_kv();
        let mut errors = Vec::new();
        for o in overrides {
            match o.split_once('=') {
                Some((k, v)) => kv.insert(k.trim(), v.trim()),
                None => errors.push(format!("`{o}`: expected key=value")),
            }
        }
        match Self::from_kv(&kv) {
            Ok(c) if errors.is_empty() => Ok(c),
            Ok(_) => Err(Error::Config(errors)),
            Err(Error::Config(mut e)) => {
                errors.append(&mut e);
                Err(Error::Config(errors))
            }
            Err(e) => Err(e),
        }
    }

    /// Every constraint violation, one message per key.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                p.push(msg.to_string());
            }
        };
        check(self.height >= 16 && self.height.is_multiple_of(2), "scene.height: must be even and at least 16");
        check(self.width >= 16 && self.width.is_multiple_of(2), "scene.width: must be even and at least 16");
        check(self.frames >= 2, "scene.frames: must be at least 2");
        check(self.views >= 1, "scene.views: must be at least 1");
        check(self.focal.is_none_or(|f| f > 0.0), "scene.focal: must be positive");
        check(self.motion_px_per_frame.is_finite() && self.motion_px_per_frame >= 0.0, "scene.motion_px_per_frame: must be ≥ 0");
        check(self.trajectory_params.radius > 0.0, "trajectory.radius: must be positive");
        check(self.trajectory_params.max_yaw_deg.is_finite(), "trajectory.max_yaw_deg: must be finite");
        check(self.num_steps >= 1, "diffusion.num_steps: must be at least 1");
        check(
            self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0,
            "diffusion.beta_start/diffusion.beta_end: need 0 < start ≤ end < 1",
        );
        check(self.cfg_scale >= 1.0, "guidance.cfg_scale: must be ≥ 1");
        check((0.0..=1.0).contains(&self.pcgd_fraction), "guidance.pcgd_fraction: must lie in [0, 1]");
        check(self.denoiser_noise >= 0.0 && self.denoiser_noise.is_finite(), "denoiser.noise_level: must be ≥ 0");
        check(self.refine.steps >= 1 && self.refine.steps <= self.num_steps, "refine.steps: must lie in 1..=diffusion.num_steps");
        check((0.0..=1.0).contains(&self.refine.w_start), "refine.w_start: must lie in [0, 1]");
        check((0.0..=1.0).contains(&self.refine.w_end), "refine.w_end: must lie in [0, 1]");
        check(self.refine.std_eps > 0.0, "refine.std_eps: must be positive");
        check(self.max_splats >= 1, "train.max_splats: must be at least 1");
        check(self.lambda >= 0.0, "train.lambda: must be ≥ 0");
        for (k, v) in [
            ("train.lr_start", self.lr_start),
            ("train.lr_end", self.lr_end),
            ("train.fine_lr", self.fine_lr),
            ("train.color_lr", self.color_lr),
            ("train.opacity_lr", self.opacity_lr),
            ("train.scale_lr", self.scale_lr),
            ("train.rotation_lr", self.rotation_lr),
        ] {
            check(v > 0.0 && v.is_finite(), &format!("{k}: must be positive"));
        }
        check(self.refresh >= 1, "train.refresh: must be at least 1");
        p
    }

    /// Every key with its resolved value.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.insert("seed", self.seed);
        kv.insert("output", self.output.display());
        kv.insert("bundle", self.bundle.as_ref().map_or("none".to_string(), |p| p.display().to_string()));
        kv.insert("scene.height", self.height);
        kv.insert("scene.width", self.width);
        kv.insert("scene.frames", self.frames);
        kv.insert("scene.views", self.views);
        kv.insert("scene.focal", self.focal.map_or("auto".to_string(), |f| f.to_string()));
        kv.insert("scene.motion", self.motion.name());
        kv.insert("scene.motion_px_per_frame", self.motion_px_per_frame);
        kv.insert("trajectory.kind", self.trajectory.name());
        kv.insert("trajectory.radius", self.trajectory_params.radius);
        kv.insert("trajectory.max_yaw_deg", self.trajectory_params.max_yaw_deg);
        kv.insert("trajectory.lateral_extent", self.trajectory_params.lateral_extent);
        kv.insert("trajectory.symmetric", self.trajectory_params.symmetric);
        kv.insert("projection.footprint", self.footprint.size());
        kv.insert("diffusion.num_steps", self.num_steps);
        kv.insert("diffusion.beta_start", self.beta_start);
        kv.insert("diffusion.beta_end", self.beta_end);
        kv.insert("diffusion.codec", self.codec.name());
        kv.insert("guidance.cfg_scale", self.cfg_scale);
        kv.insert("guidance.adaptive_cfg", self.adaptive_cfg);
        kv.insert("guidance.pcgd_fraction", self.pcgd_fraction);
        kv.insert("guidance.rlr", self.rlr);
        kv.insert("guidance.cfg_for_later_frames", self.cfg_for_later_frames);
        kv.insert("denoiser.target", self.denoiser_target.name());
        kv.insert("denoiser.noise_level", self.denoiser_noise);
        kv.insert("refine.steps", self.refine.steps);
        kv.insert("refine.w_start", self.refine.w_start);
        kv.insert("refine.w_end", self.refine.w_end);
        kv.insert("refine.std_eps", self.refine.std_eps);
        kv.insert("refine.modulation", self.modulation);
        kv.insert("train.max_splats", self.max_splats);
        kv.insert("train.coarse_iters", self.coarse_iters);
        kv.insert("train.fine_iters", self.fine_iters);
        kv.insert("train.fine", self.fine);
        kv.insert("train.lambda", self.lambda);
        kv.insert("train.lr_start", self.lr_start);
        kv.insert("train.lr_end", self.lr_end);
        kv.insert("train.fine_lr", self.fine_lr);
        kv.insert("train.color_lr", self.color_lr);
        kv.insert("train.opacity_lr", self.opacity_lr);
        kv.insert("train.scale_lr", self.scale_lr);
        kv.insert("train.rotation_lr", self.rotation_lr);
        kv.insert("train.refresh", self.refresh);
        kv
    }

    /// Every key except `output`, so relocated runs serialize identically.
    pub fn canonical_kv(&self) -> KeyValues {
        let mut kv = self.to_kv();
        kv.remove("output");
        kv
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_kv().to_text().as_bytes()))
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            motion: self.motion,
            motion_px_per_frame: self.motion_px_per_frame,
            focal: self.focal,
            ..SceneSpec::new(self.height, self.width, self.frames, self.seed)
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.height, self.width, self.focal.unwrap_or(self.width as f64))
    }

    pub fn schedule(&self) -> Result<NoiseSchedule<f64>> {
        NoiseSchedule::linear(self.num_steps, self.beta_start, self.beta_end)
    }

    pub fn policy(&self) -> GuidancePolicy {
        GuidancePolicy {
            cfg_scale: self.cfg_scale,
            adaptive_cfg: self.adaptive_cfg,
            pcgd_fraction: self.pcgd_fraction,
            rlr: self.rlr,
            cfg_for_later_frames: self.cfg_for_later_frames,
            seed: self.seed,
        }
    }

    fn group_lrs(&self, iters: usize, lr: LrSchedule) -> TrainConfig {
        TrainConfig {
            iters,
            lr,
            color_lr: self.color_lr,
            opacity_lr: self.opacity_lr,
            scale_lr: self.scale_lr,
            rotation_lr: self.rotation_lr,
            seed: self.seed,
        }
    }

    pub fn coarse_train(&self) -> TrainConfig {
        self.group_lrs(self.coarse_iters, LrSchedule { start: self.lr_start, end: self.lr_end })
    }

    pub fn fine_train(&self) -> FineConfig {
        let mut train = self.group_lrs(self.fine_iters, LrSchedule::constant(self.fine_lr));
        train.seed = self.seed.wrapping_add(1);
        FineConfig {
            iters: if self.fine { self.fine_iters } else { 0 },
            lambda: self.lambda,
            refine: self.refine.clone(),
            refresh: self.refresh,
            modulation: self.modulation,
            train,
        }
    }
}
