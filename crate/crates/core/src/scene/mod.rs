//! Procedural dynamic scenes with exact ground truth, and ingestion of
//! externally produced pointmap bundles.

mod analytic;
mod io;

pub use analytic::{AnalyticScene, GroundPlane, Hit, MotionKind, Primitive, SceneView, Shape};
pub use io::{load_bundle, load_bundle_with_warnings, save_bundle, truth_dir, GT_GRID_DIR};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::projection::{Camera, Intrinsics, Provenance, ViewGrid};

/// Planar `[3, h, w]` world positions.
pub type Pointmap = Image;

#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveSpec {
    pub shape: Shape,
    pub center: [f64; 3],
    pub direction: [f64; 2],
    pub moving: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub seed: u64,
    pub motion: MotionKind,
    /// Image-space speed of moving primitives at their center depth.
    pub motion_px_per_frame: f64,
    /// Focal length in pixels; defaults to the image width.
    pub focal: Option<f64>,
    /// Overrides the default sphere-plus-box layout.
    pub primitives: Option<Vec<PrimitiveSpec>>,
}

impl SceneSpec {
    pub fn new(height: usize, width: usize, frames: usize, seed: u64) -> Self {
        Self {
            height,
            width,
            frames,
            seed,
            motion: MotionKind::Linear,
            motion_px_per_frame: 1.5,
            focal: None,
            primitives: None,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.height, self.width, self.focal.unwrap_or(self.width as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 || !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "scene dimensions must be even and at least 16, got {}x{}",
                self.height, self.width
            )));
        }
        if self.frames < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", self.frames)));
        }
        if let Some(f) = self.focal {
            if !(f > 0.0) {
                return Err(Error::InvalidArgument("focal length must be positive".into()));
            }
        }
        for p in self.primitive_specs() {
            let degenerate = match p.shape {
                Shape::Sphere { radius } => !(radius > 0.0),
                Shape::Cuboid { half_extents } => half_extents.iter().any(|&h| !(h > 0.0)),
            };
            if degenerate {
                return Err(Error::InvalidArgument(format!("zero-area primitive {:?}", p.shape)));
            }
            if !(p.center[2] > 0.0) {
                return Err(Error::InvalidArgument("primitive behind the reference camera".into()));
            }
        }
        Ok(())
    }

    pub fn primitive_specs(&self) -> Vec<PrimitiveSpec> {
        self.primitives.clone().unwrap_or_else(|| {
            vec![
                PrimitiveSpec {
                    shape: Shape::Sphere { radius: 0.35 },
                    center: [-0.35, 0.15, 2.4],
                    direction: [1.0, 0.0],
                    moving: true,
                },
                PrimitiveSpec {
                    shape: Shape::Cuboid { half_extents: [0.22, 0.22, 0.22] },
                    center: [0.5, -0.25, 2.6],
                    direction: [-1.0, 0.0],
                    moving: true,
                },
            ]
        })
    }

    /// Builds the analytic scene; all randomness comes from `seed`.
    pub fn build(&self) -> Result<AnalyticScene> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let focal = self.focal.unwrap_or(self.width as f64);
        let tau = std::f64::consts::TAU;
        let ground = GroundPlane {
            offset: 3.2,
            slope: -0.8,
            phase: [rng.random::<f64>() * tau, rng.random::<f64>() * tau, rng.random::<f64>() * tau],
            tint: [0.0; 3].map(|_: f32| 0.9 + 0.2 * rng.random::<f32>()),
        };
        let palette = [[0.85f32, 0.25, 0.2], [0.2, 0.35, 0.85], [0.9, 0.75, 0.2], [0.3, 0.8, 0.4]];
        let primitives = self
            .primitive_specs()
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let jitter = [0.0; 3].map(|_: f32| 0.85 + 0.15 * rng.random::<f32>());
                let base = palette[i % palette.len()];
                let norm = (p.direction[0].powi(2) + p.direction[1].powi(2)).sqrt().max(1e-12);
                Primitive {
                    shape: p.shape,
                    center: p.center,
                    direction: [p.direction[0] / norm, p.direction[1] / norm],
                    speed: self.motion_px_per_frame * p.center[2] / focal,
                    moving: p.moving,
                    color: [base[0] * jitter[0], base[1] * jitter[1], base[2] * jitter[2]],
                    stripe_phase: rng.random::<f64>() * tau,
                }
            })
            .collect();
        Ok(AnalyticScene { ground, primitives, motion: self.motion })
    }
}

/// Reference video, per-frame pointmaps and static masks, intrinsics, and
/// optionally a ground-truth multi-view grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicSceneBundle {
    pub height: usize,
    pub width: usize,
    pub intrinsics: Intrinsics,
    pub frames: Vec<Image>,
    pub pointmaps: Vec<Pointmap>,
    /// `true` = static pixel.
    pub static_masks: Vec<Mask>,
    pub gt_grid: Option<ViewGrid>,
}

impl DynamicSceneBundle {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dynamic_mask(&self, t: usize) -> Mask {
        self.static_masks[t].invert()
    }

    pub fn reference_camera(&self) -> Camera<f64> {
        let i = self.intrinsics;
        Camera::identity(i.fx, i.fy, i.cx, i.cy)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.frames.len();
        if t == 0 {
            return Err(Error::InvalidArgument("bundle has no frames".into()));
        }
        if self.pointmaps.len() != t || self.static_masks.len() != t {
            return Err(Error::FrameCountMismatch(format!(
                "{} frames, {} pointmaps, {} static masks",
                t,
                self.pointmaps.len(),
                self.static_masks.len()
            )));
        }
        let (h, w) = (self.height, self.width);
        for i in 0..t {
            if self.frames[i].shape() != [3, h, w] {
                return Err(Error::ShapeMismatch { expected: format!("frame [3, {h}, {w}]"), actual: format!("frame {i}: {:?}", self.frames[i].shape()) });
            }
            if self.pointmaps[i].shape() != [3, h, w] {
                return Err(Error::ShapeMismatch { expected: format!("pointmap [3, {h}, {w}]"), actual: format!("pointmap {i}: {:?}", self.pointmaps[i].shape()) });
            }
            if self.static_masks[i].shape() != [h, w] {
                return Err(Error::ShapeMismatch { expected: format!("mask [{h}, {w}]"), actual: format!("mask {i}: {:?}", self.static_masks[i].shape()) });
            }
            let pm = &self.pointmaps[i];
            if pm.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("pointmap {i} has non-finite entries")));
            }
            // world frame = reference camera, so depth is the z coordinate
            if pm.data[2 * h * w..].iter().any(|&z| !(z > 0.0)) {
                return Err(Error::InvalidArgument(format!("pointmap {i} has non-positive depth")));
            }
        }
        Ok(())
    }
}

/// Renders the analytic scene into a bundle. When `trajectory` is given, the
/// ground-truth grid over all frames and those cameras is rendered too.
pub fn synth_scene(spec: &SceneSpec, trajectory: Option<&[Camera<f64>]>) -> Result<DynamicSceneBundle> {
    let scene = spec.build()?;
    let intr = spec.intrinsics();
    let cam0 = Camera::identity(intr.fx, intr.fy, intr.cx, intr.cy);
    let (h, w) = (spec.height, spec.width);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut pointmaps = Vec::with_capacity(spec.frames);
    let mut static_masks = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let view = scene.render(&cam0, t as f64, h, w);
        frames.push(view.image);
        pointmaps.push(view.points);
        static_masks.push(view.dynamic.invert());
    }
    let gt_grid = trajectory.map(|cams| render_truth_grid(&scene, cams, spec.frames, h, w));
    let bundle = DynamicSceneBundle { height: h, width: w, intrinsics: intr, frames, pointmaps, static_masks, gt_grid };
    bundle.validate()?;
    Ok(bundle)
}

/// Ground-truth grid along `cameras`; column 0 uses the reference camera.
pub fn render_truth_grid(
    scene: &AnalyticScene,
    cameras: &[Camera<f64>],
    frames: usize,
    height: usize,
    width: usize,
) -> ViewGrid {
    use rayon::prelude::*;
    let k_count = cameras.len();
    let images: Vec<Image> = (0..frames * k_count)
        .into_par_iter()
        .map(|cell| {
            let (t, k) = (cell / k_count, cell % k_count);
            scene.render(&cameras[k], t as f64, height, width).image
        })
        .collect();
    ViewGrid {
        frames,
        views: k_count,
        height,
        width,
        images,
        masks: vec![Mask::new(height, width, true); frames * k_count],
        cameras: cameras.to_vec(),
        provenance: vec![Provenance::GroundTruth; frames * k_count],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(motion: MotionKind) -> SceneSpec {
        SceneSpec { motion, ..SceneSpec::new(32, 32, 3, 7) }
    }

    #[test]
    fn no_motion_means_all_static() {
        let b = synth_scene(&small(MotionKind::None), None).unwrap();
        assert!(b.static_masks.iter().all(Mask::all));
    }

    #[test]
    fn moving_primitives_are_dynamic() {
        let b = synth_scene(&small(MotionKind::Linear), None).unwrap();
        assert!(b.static_masks.iter().all(|m| !m.all() && !m.none()));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_scene(&small(MotionKind::Linear), None).unwrap();
        let b = synth_scene(&small(MotionKind::Linear), None).unwrap();
        assert_eq!(a, b);
        let c = synth_scene(&SceneSpec { seed: 8, ..small(MotionKind::Linear) }, None).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(synth_scene(&SceneSpec::new(15, 32, 3, 0), None).is_err());
        assert!(synth_scene(&SceneSpec::new(32, 32, 1, 0), None).is_err());
        let spec = SceneSpec {
            primitives: Some(vec![PrimitiveSpec {
                shape: Shape::Sphere { radius: 0.0 },
                center: [0.0, 0.0, 2.0],
                direction: [1.0, 0.0],
                moving: true,
            }]),
            ..SceneSpec::new(32, 32, 3, 0)
        };
        assert!(synth_scene(&spec, None).is_err());
    }

    #[test]
    fn pointmaps_reproject_to_their_pixels() {
        let b = synth_scene(&small(MotionKind::Circular), None).unwrap();
        let cam = b.reference_camera();
        let (h, w) = (b.height, b.width);
        let mut worst = 0.0f64;
        for pm in &b.pointmaps {
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let pt = [pm.data[p] as f64, pm.data[h * w + p] as f64, pm.data[2 * h * w + p] as f64];
                    let pr = cam.project(pt).unwrap();
                    worst = worst.max((pr.u - (x as f64 + 0.5)).abs()).max((pr.v - (y as f64 + 0.5)).abs());
                }
            }
        }
        assert!(worst <= 0.5, "max reprojection error {worst}");
        assert!(worst < 1e-3);
    }
}
