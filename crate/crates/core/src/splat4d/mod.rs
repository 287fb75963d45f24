//! Dynamic splat scenes: representation, differentiable rendering,
//! modulation-based refinement and coarse-to-fine training.

mod percep;
mod refine;
mod render;
mod train;

pub use percep::{perceptual_loss, perceptual_loss_grad, PERCEPTUAL_LEVELS};
pub use refine::{modulation_refine, sdedit, RefineConfig, RefineRequest};
pub use render::{normalized_time, quat_to_mat, render, render_grad, RenderOutput, SplatGrads, DILATION, MAX_ALPHA, NEAR, SUPPORT};
pub use train::{anchor_cells, held_out_cells, l1_loss_grad, train_coarse, train_fine, Adam, FineConfig, LrSchedule, TrainConfig, TrainLog};

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::FramePointClouds;
use crate::kv::KeyValues;
use crate::linalg::Vec3;
use crate::scalar::{logit, Real};
use crate::ten1;

/// Splats with per-splat linear + quadratic motion
/// `μ(τ) = μ + v τ + a τ²`, `τ = t / (T − 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatScene<S> {
    /// Frame count `T` the motion is normalized over.
    pub frames: usize,
    pub position: Vec<Vec3<S>>,
    pub log_scale: Vec<Vec3<S>>,
    /// Quaternion `(w, x, y, z)`, kept at unit length.
    pub rotation: Vec<[S; 4]>,
    pub opacity_logit: Vec<S>,
    pub color_logit: Vec<Vec3<S>>,
    pub velocity: Vec<Vec3<S>>,
    pub accel: Vec<Vec3<S>>,
    /// Motion coefficients are trainable only where set.
    pub motion_enabled: Vec<bool>,
}

/// One splat's parameters, for building scenes by hand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat<S> {
    pub position: Vec3<S>,
    pub log_scale: Vec3<S>,
    pub rotation: [S; 4],
    pub opacity_logit: S,
    pub color_logit: Vec3<S>,
    pub velocity: Vec3<S>,
    pub accel: Vec3<S>,
    pub motion_enabled: bool,
}

impl<S: Real> Splat<S> {
    /// Isotropic splat at rest.
    pub fn isotropic(position: Vec3<S>, scale: S, opacity: S, color: Vec3<S>) -> Self {
        Self {
            position,
            log_scale: [scale.ln(); 3],
            rotation: [S::one(), S::zero(), S::zero(), S::zero()],
            opacity_logit: logit(opacity),
            color_logit: color.map(logit),
            velocity: [S::zero(); 3],
            accel: [S::zero(); 3],
            motion_enabled: false,
        }
    }
}

impl<S: Real> SplatScene<S> {
    pub fn empty(frames: usize) -> Self {
        Self {
            frames,
            position: Vec::new(),
            log_scale: Vec::new(),
            rotation: Vec::new(),
            opacity_logit: Vec::new(),
            color_logit: Vec::new(),
            velocity: Vec::new(),
            accel: Vec::new(),
            motion_enabled: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn push(&mut self, s: Splat<S>) {
        self.position.push(s.position);
        self.log_scale.push(s.log_scale);
        self.rotation.push(s.rotation);
        self.opacity_logit.push(s.opacity_logit);
        self.color_logit.push(s.color_logit);
        self.velocity.push(s.velocity);
        self.accel.push(s.accel);
        self.motion_enabled.push(s.motion_enabled);
    }

    pub fn splat(&self, i: usize) -> Splat<S> {
        Splat {
            position: self.position[i],
            log_scale: self.log_scale[i],
            rotation: self.rotation[i],
            opacity_logit: self.opacity_logit[i],
            color_logit: self.color_logit[i],
            velocity: self.velocity[i],
            accel: self.accel[i],
            motion_enabled: self.motion_enabled[i],
        }
    }

    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotation {
            let n = q.iter().map(|&v| v * v).sum::<S>().sqrt();
            if n > S::zero() {
                *q = q.map(|v| v / n);
            } else {
                *q = [S::one(), S::zero(), S::zero(), S::zero()];
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.log_scale.len(),
            self.rotation.len(),
            self.opacity_logit.len(),
            self.color_logit.len(),
            self.velocity.len(),
            self.accel.len(),
            self.motion_enabled.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InvalidArgument(format!("splat parameter groups disagree in length: {n} vs {lens:?}")));
        }
        if self.frames == 0 {
            return Err(Error::InvalidArgument("scene must span at least one frame".into()));
        }
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> SplatScene<T> {
        let c = |v: S| T::lit(v.to_f64_lossy());
        SplatScene {
            frames: self.frames,
            position: self.position.iter().map(|p| p.map(c)).collect(),
            log_scale: self.log_scale.iter().map(|p| p.map(c)).collect(),
            rotation: self.rotation.iter().map(|p| p.map(c)).collect(),
            opacity_logit: self.opacity_logit.iter().map(|&p| c(p)).collect(),
            color_logit: self.color_logit.iter().map(|p| p.map(c)).collect(),
            velocity: self.velocity.iter().map(|p| p.map(c)).collect(),
            accel: self.accel.iter().map(|p| p.map(c)).collect(),
            motion_enabled: self.motion_enabled.clone(),
        }
    }
}

/// Distance from every point to its nearest other point (`None` for a single point).
fn nearest_neighbor_distances(points: &[Vec3<f64>]) -> Vec<Option<f64>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = f64::INFINITY;
            for (j, q) in points.iter().enumerate() {
                if i != j {
                    let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    best = best.min(d);
                }
            }
            best.is_finite().then(|| best.sqrt())
        })
        .collect()
}

/// Smallest initial scale, so coincident points still get a finite log-scale.
const MIN_INIT_SCALE: f64 = 1e-4;
/// Scale used when a cloud holds a single point.
const LONE_POINT_SCALE: f64 = 0.01;

/// Seeds one splat per sampled point of the frame-0 cloud (uniform stride
/// when the cloud exceeds `max_splats`). Scale is the nearest sampled
/// neighbor distance, opacity 0.5, motion zero and trainable only for points
/// from the frame-0 dynamic region.
pub fn init_scene<S: Real>(fpc: &FramePointClouds, max_splats: usize) -> Result<SplatScene<S>> {
    if max_splats == 0 {
        return Err(Error::InvalidArgument("splat budget must be at least 1".into()));
    }
    let cloud = fpc.frame_cloud(0)?;
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("cannot initialize splats from an empty point cloud".into()));
    }
    let n_static = fpc.static_points.len();
    let picks: Vec<usize> = if cloud.len() <= max_splats {
        (0..cloud.len()).collect()
    } else {
        (0..max_splats).map(|j| j * cloud.len() / max_splats).collect()
    };
    let positions: Vec<Vec3<f64>> = picks.iter().map(|&i| cloud[i].position).collect();
    let nn = nearest_neighbor_distances(&positions);
    let mut scene = SplatScene::empty(fpc.num_frames());
    for (j, &i) in picks.iter().enumerate() {
        let scale = nn[j].map_or(LONE_POINT_SCALE, |d| d.max(MIN_INIT_SCALE));
        let color = cloud[i].color.map(|c| S::lit(c.clamp(1e-3, 1.0 - 1e-3) as f64));
        let mut splat = Splat::isotropic(positions[j].map(S::lit), S::lit(scale), S::lit(0.5), color);
        splat.motion_enabled = i >= n_static;
        scene.push(splat);
    }
    Ok(scene)
}

const CHECKPOINT_HEADER: &str = "header.txt";
const CHECKPOINT_FORMAT: &str = "splat4d-1";

fn flat<S: Real, const D: usize>(v: &[[S; D]]) -> Vec<f32> {
    v.iter().flat_map(|a| a.map(|x| x.to_f32_lossy())).collect()
}

fn unflat<S: Real, const D: usize>(t: &ten1::Tensor, n: usize, path: &Path) -> Result<Vec<[S; D]>> {
    if t.dims != [n, D] {
        return Err(Error::Malformed { path: path.to_path_buf(), reason: format!("expected dims [{n}, {D}], got {:?}", t.dims) });
    }
    Ok(t.data.chunks_exact(D).map(|c| std::array::from_fn(|j| S::from_f32_lossless(c[j]))).collect())
}

/// Writes a checkpoint directory: `header.txt` plus one TEN1 array per
/// parameter group (stored as f32).
pub fn save_checkpoint<S: Real>(scene: &SplatScene<S>, dir: &Path) -> Result<()> {
    scene.validate()?;
    fs::create_dir_all(dir)?;
    let n = scene.len();
    ten1::write(&dir.join("position.ten"), &[n, 3], &flat(&scene.position))?;
    ten1::write(&dir.join("log_scale.ten"), &[n, 3], &flat(&scene.log_scale))?;
    ten1::write(&dir.join("rotation.ten"), &[n, 4], &flat(&scene.rotation))?;
    let opacity: Vec<f32> = scene.opacity_logit.iter().map(|v| v.to_f32_lossy()).collect();
    ten1::write(&dir.join("opacity_logit.ten"), &[n], &opacity)?;
    ten1::write(&dir.join("color_logit.ten"), &[n, 3], &flat(&scene.color_logit))?;
    ten1::write(&dir.join("velocity.ten"), &[n, 3], &flat(&scene.velocity))?;
    ten1::write(&dir.join("accel.ten"), &[n, 3], &flat(&scene.accel))?;
    let motion: Vec<f32> = scene.motion_enabled.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    ten1::write(&dir.join("motion_enabled.ten"), &[n], &motion)?;
    let mut kv = KeyValues::new();
    kv.insert("format", CHECKPOINT_FORMAT);
    kv.insert("N", n);
    kv.insert("T", scene.frames);
    kv.insert("motion_trainable", scene.motion_enabled.iter().filter(|&&b| b).count());
    kv.save(&dir.join(CHECKPOINT_HEADER))
}

pub fn load_checkpoint<S: Real>(dir: &Path) -> Result<SplatScene<S>> {
    let hpath = dir.join(CHECKPOINT_HEADER);
    let kv = KeyValues::load(&hpath)?;
    let format = kv.require("format", &hpath)?;
    if format != CHECKPOINT_FORMAT {
        return Err(Error::Malformed { path: hpath, reason: format!("unsupported checkpoint format `{format}`") });
    }
    let n: usize = kv.require_parse("N", &hpath)?;
    let frames: usize = kv.require_parse("T", &hpath)?;
    let read = |name: &str| -> Result<(ten1::Tensor, std::path::PathBuf)> {
        let p = dir.join(name);
        Ok((ten1::read(&p)?, p))
    };
    let vec3 = |name: &str| -> Result<Vec<Vec3<S>>> {
        let (t, p) = read(name)?;
        unflat::<S, 3>(&t, n, &p)
    };
    let scalar = |name: &str| -> Result<Vec<f32>> {
        let (t, p) = read(name)?;
        if t.dims != [n] {
            return Err(Error::Malformed { path: p, reason: format!("expected dims [{n}], got {:?}", t.dims) });
        }
        Ok(t.data)
    };
    let (rt, rp) = read("rotation.ten")?;
    let scene = SplatScene {
        frames,
        position: vec3("position.ten")?,
        log_scale: vec3("log_scale.ten")?,
        rotation: unflat::<S, 4>(&rt, n, &rp)?,
        opacity_logit: scalar("opacity_logit.ten")?.into_iter().map(S::from_f32_lossless).collect(),
        color_logit: vec3("color_logit.ten")?,
        velocity: vec3("velocity.ten")?,
        accel: vec3("accel.ten")?,
        motion_enabled: scalar("motion_enabled.ten")?.into_iter().map(|v| v >= 0.5).collect(),
    };
    scene.validate()?;
    Ok(scene)
}
