//! Coarse (anchor-cell L1) and fine (refined-target perceptual) optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::percep::perceptual_loss_grad;
use super::refine::{modulation_refine, RefineConfig, RefineRequest};
use super::render::{render, render_grad, SplatGrads};
use super::SplatScene;
use crate::diffusion::{LatentCodec, NoiseSchedule};
use crate::error::{Error, Result};
use crate::guidance::{CellId, Condition, Denoiser, CONDITION_TAG};
use crate::image::Image;
use crate::projection::{Provenance, ViewGrid};
use crate::scalar::Real;

/// Exponential decay from `start` at iteration 0 to `end` at the last iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { start: lr, end: lr }
    }

    pub fn at(&self, it: usize, iters: usize) -> f64 {
        if iters <= 1 {
            return self.start;
        }
        let frac = it as f64 / (iters - 1) as f64;
        self.start * (self.end / self.start).powf(frac)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iters: usize,
    /// Position and motion learning rate.
    pub lr: LrSchedule,
    pub color_lr: f64,
    pub opacity_lr: f64,
    pub scale_lr: f64,
    pub rotation_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iters: 9000,
            lr: LrSchedule { start: 1.6e-3, end: 1.6e-4 },
            color_lr: 2.5e-3,
            opacity_lr: 5e-2,
            scale_lr: 5e-3,
            rotation_lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FineConfig {
    pub iters: usize,
    /// Weight λ of the perceptual term.
    pub lambda: f64,
    pub refine: RefineConfig,
    /// Refined targets are recomputed every this many iterations.
    pub refresh: usize,
    /// Off: held-out cells are supervised directly by their generated images (L1)
    /// instead of refined targets.
    pub modulation: bool,
    pub train: TrainConfig,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            iters: 1000,
            lambda: 0.1,
            refine: RefineConfig::default(),
            refresh: 100,
            modulation: true,
            train: TrainConfig { iters: 1000, lr: LrSchedule::constant(1.6e-4), ..TrainConfig::default() },
        }
    }
}

/// Per-iteration training losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub anchor_l1: Vec<f64>,
    pub perceptual: Vec<f64>,
}

/// Adam with per-group learning rates; `β1 = 0.9` is the momentum term.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: SplatGrads<S>,
    v: SplatGrads<S>,
    step: u32,
}

impl<S: Real> Adam<S> {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-15, m: SplatGrads::zeros(n), v: SplatGrads::zeros(n), step: 0 }
    }

    /// One update with position/motion learning rate `lr` and the fixed group
    /// rates from `cfg`; renormalizes quaternions afterwards.
    pub fn step(&mut self, scene: &mut SplatScene<S>, g: &SplatGrads<S>, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let bc1 = S::one() - S::lit(self.beta1.powi(self.step as i32));
        let bc2 = S::one() - S::lit(self.beta2.powi(self.step as i32));
        let eps = S::lit(self.eps);
        let upd = |p: &mut [S], g: &[S], m: &mut [S], v: &mut [S], lr: f64| {
            let lr = S::lit(lr);
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (S::one() - b1) * g[j];
                v[j] = b2 * v[j] + (S::one() - b2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        let (m, v) = (&mut self.m, &mut self.v);
        upd(scene.position.as_flattened_mut(), g.position.as_flattened(), m.position.as_flattened_mut(), v.position.as_flattened_mut(), lr);
        upd(scene.velocity.as_flattened_mut(), g.velocity.as_flattened(), m.velocity.as_flattened_mut(), v.velocity.as_flattened_mut(), lr);
        upd(scene.accel.as_flattened_mut(), g.accel.as_flattened(), m.accel.as_flattened_mut(), v.accel.as_flattened_mut(), lr);
        upd(scene.color_logit.as_flattened_mut(), g.color_logit.as_flattened(), m.color_logit.as_flattened_mut(), v.color_logit.as_flattened_mut(), cfg.color_lr);
        upd(&mut scene.opacity_logit, &g.opacity_logit, &mut m.opacity_logit, &mut v.opacity_logit, cfg.opacity_lr);
        upd(scene.log_scale.as_flattened_mut(), g.log_scale.as_flattened(), m.log_scale.as_flattened_mut(), v.log_scale.as_flattened_mut(), cfg.scale_lr);
        upd(scene.rotation.as_flattened_mut(), g.rotation.as_flattened(), m.rotation.as_flattened_mut(), v.rotation.as_flattened_mut(), cfg.rotation_lr);
        scene.normalize_rotations();
    }
}

/// Mean absolute error and its gradient with respect to `rendered`.
pub fn l1_loss_grad<S: Real>(rendered: &[S], target: &Image) -> (f64, Vec<S>) {
    assert_eq!(rendered.len(), target.data.len());
    let n = S::from_usize(rendered.len()).unwrap();
    let mut loss = 0.0;
    let grad = rendered
        .iter()
        .zip(&target.data)
        .map(|(&r, &t)| {
            let d = r - S::from_f32_lossless(t);
            loss += d.abs().to_f64_lossy();
            if d > S::zero() {
                S::one() / n
            } else if d < S::zero() {
                -S::one() / n
            } else {
                S::zero()
            }
        })
        .collect();
    (loss / rendered.len() as f64, grad)
}

/// The first row and the reference column.
pub fn anchor_cells(frames: usize, views: usize) -> Vec<CellId> {
    let mut cells: Vec<CellId> = (0..views).map(|k| CellId { t: 0, k }).collect();
    cells.extend((1..frames).map(|t| CellId { t, k: 0 }));
    cells
}

/// Every cell outside the anchors.
pub fn held_out_cells(frames: usize, views: usize) -> Vec<CellId> {
    (1..frames).flat_map(|t| (1..views).map(move |k| CellId { t, k })).collect()
}

fn check_anchors(grid: &ViewGrid) -> Result<()> {
    grid.validate()?;
    for c in anchor_cells(grid.frames, grid.views) {
        if grid.provenance[grid.cell(c.t, c.k)] == Provenance::Coarse {
            return Err(Error::InvalidArgument(format!(
                "anchor cell ({}, {}) has not been generated (provenance `coarse`)",
                c.t, c.k
            )));
        }
    }
    Ok(())
}

fn check_scene<S: Real>(scene: &SplatScene<S>, grid: &ViewGrid) -> Result<()> {
    scene.validate()?;
    if scene.frames != grid.frames {
        return Err(Error::FrameCountMismatch(format!("scene spans {} frames, grid has {}", scene.frames, grid.frames)));
    }
    Ok(())
}

/// Renders cell `c` and returns `(color, L1 loss, gradient)`.
fn l1_step<S: Real>(scene: &SplatScene<S>, grid: &ViewGrid, c: CellId, target: &Image) -> (f64, SplatGrads<S>) {
    let cam = grid.cameras[c.k].cast::<S>();
    let out = render(scene, &cam, S::from_usize(c.t).unwrap(), grid.height, grid.width);
    let (loss, g) = l1_loss_grad(&out.color, target);
    (loss, render_grad(scene, &cam, &out, &g))
}

/// Optimizes on the anchor cells only, one sampled cell per iteration, L1 loss,
/// position learning rate decaying exponentially over `cfg.iters`.
pub fn train_coarse<S: Real>(scene: &mut SplatScene<S>, grid: &ViewGrid, cfg: &TrainConfig) -> Result<TrainLog> {
    check_scene(scene, grid)?;
    check_anchors(grid)?;
    let anchors = anchor_cells(grid.frames, grid.views);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(scene.len());
    let mut log = TrainLog::default();
    for it in 0..cfg.iters {
        let c = anchors[rng.random_range(0..anchors.len())];
        let (loss, g) = l1_step(scene, grid, c, grid.image(c.t, c.k));
        adam.step(scene, &g, cfg.lr.at(it, cfg.iters), cfg);
        log.anchor_l1.push(loss);
    }
    Ok(log)
}

/// Fine stage: each iteration takes one anchor cell (L1) and one held-out cell
/// (λ · perceptual loss against its refined target, or L1 against the
/// generated image when modulation is off). Targets are refreshed every
/// `cfg.refresh` iterations from the current renders.
pub fn train_fine<S: Real, D: Denoiser<S> + ?Sized>(
    scene: &mut SplatScene<S>,
    grid: &ViewGrid,
    denoiser: &D,
    schedule: &NoiseSchedule<S>,
    codec: LatentCodec,
    cfg: &FineConfig,
) -> Result<TrainLog> {
    check_scene(scene, grid)?;
    check_anchors(grid)?;
    cfg.refine.validate(schedule.num_steps())?;
    if cfg.refresh == 0 {
        return Err(Error::InvalidArgument("refresh interval must be at least 1".into()));
    }
    let anchors = anchor_cells(grid.frames, grid.views);
    let held = held_out_cells(grid.frames, grid.views);
    for c in &held {
        if grid.provenance[grid.cell(c.t, c.k)] == Provenance::Coarse {
            return Err(Error::InvalidArgument(format!("cell ({}, {}) has not been generated", c.t, c.k)));
        }
    }
    let use_held = !held.is_empty() && (cfg.lambda > 0.0 || !cfg.modulation);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut adam = Adam::new(scene.len());
    let mut log = TrainLog::default();
    let mut targets: Vec<Image> = Vec::new();
    for it in 0..cfg.iters {
        if use_held && cfg.modulation && it % cfg.refresh == 0 {
            targets = refined_targets(scene, grid, &held, denoiser, schedule, codec, &cfg.refine, cfg.train.seed, it / cfg.refresh)?;
        }
        let a = anchors[rng.random_range(0..anchors.len())];
        let h = if use_held { rng.random_range(0..held.len()) } else { 0 };
        let (loss, mut g) = l1_step(scene, grid, a, grid.image(a.t, a.k));
        log.anchor_l1.push(loss);
        if use_held {
            let c = held[h];
            if cfg.modulation {
                let cam = grid.cameras[c.k].cast::<S>();
                let out = render(scene, &cam, S::from_usize(c.t).unwrap(), grid.height, grid.width);
                let target: Vec<S> = targets[h].data.iter().map(|&v| S::from_f32_lossless(v)).collect();
                let (lp, gp) = perceptual_loss_grad(&out.color, &target, 3, grid.height, grid.width);
                let lam = S::lit(cfg.lambda);
                let gp: Vec<S> = gp.into_iter().map(|v| v * lam).collect();
                g.add_assign(&render_grad(scene, &cam, &out, &gp));
                log.perceptual.push(lp.to_f64_lossy());
            } else {
                let (_, gd) = l1_step(scene, grid, c, grid.image(c.t, c.k));
                g.add_assign(&gd);
            }
        }
        adam.step(scene, &g, cfg.train.lr.at(it, cfg.iters), &cfg.train);
    }
    Ok(log)
}

/// Renders every held-out cell and refines it toward its generated image.
#[allow(clippy::too_many_arguments)]
fn refined_targets<S: Real, D: Denoiser<S> + ?Sized>(
    scene: &SplatScene<S>,
    grid: &ViewGrid,
    held: &[CellId],
    denoiser: &D,
    schedule: &NoiseSchedule<S>,
    codec: LatentCodec,
    refine: &RefineConfig,
    seed: u64,
    round: usize,
) -> Result<Vec<Image>> {
    held.par_iter()
        .map(|&c| {
            let cam = grid.cameras[c.k].cast::<S>();
            let rendered = render(scene, &cam, S::from_usize(c.t).unwrap(), grid.height, grid.width).image();
            let req = RefineRequest {
                denoiser,
                schedule,
                codec,
                config: refine,
                cell: c,
                condition: Condition { image: grid.image(c.t, 0), tag: CONDITION_TAG },
                seed,
                round,
            };
            modulation_refine(&rendered, grid.image(c.t, c.k), &req)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_endpoints() {
        let s = LrSchedule { start: 1.6e-3, end: 1.6e-4 };
        assert_eq!(s.at(0, 9000), 1.6e-3);
        assert!((s.at(8999, 9000) - 1.6e-4).abs() < 1e-15);
    }

    #[test]
    fn cell_partition() {
        assert_eq!(anchor_cells(8, 9).len(), 16);
        assert_eq!(held_out_cells(8, 9).len(), 56);
        assert!(held_out_cells(1, 9).is_empty());
    }
}
